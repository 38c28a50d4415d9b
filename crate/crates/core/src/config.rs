//! Run configuration: built-in defaults, `key = value` files and overrides.

use std::fs;
use std::path::{Path, PathBuf};

use crate::embed::{EmbedSource, DEFAULT_EIGENMAP_DIM};
use crate::error::{Error, Result};
use crate::nn::Arch;
use crate::train::{DiscMode, TrainConfig};
use crate::treatments::{TreatmentKey, TreatmentOptions};

pub const DEFAULT_GAMMA_PCT: f64 = 20.0;
pub const DEFAULT_VALID_FRAC: f64 = 0.1;
pub const DEFAULT_TEST_FRAC: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub treatment: TreatmentKey,
    pub treatment_opts: TreatmentOptions,
    pub embed: EmbedSource,
    pub gamma_pct: f64,
    /// `seed` is replaced by each entry of `seeds`.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub valid_frac: f64,
    pub test_frac: f64,
    /// Train the factual-only model instead.
    pub baseline: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: String::new(),
            treatment: TreatmentKey::Kcore,
            treatment_opts: TreatmentOptions::default(),
            embed: EmbedSource::Eigenmap(DEFAULT_EIGENMAP_DIM),
            gamma_pct: DEFAULT_GAMMA_PCT,
            train: TrainConfig::default(),
            seeds: vec![0],
            out: PathBuf::from("runs"),
            valid_frac: DEFAULT_VALID_FRAC,
            test_frac: DEFAULT_TEST_FRAC,
            baseline: false,
        }
    }
}

/// Parses a seed spec: a count `n` (seeds `0..n`), a range `a..b`, or a
/// comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let bad = || Error::Config(format!("invalid seed list {s:?}"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else if s.contains(',') {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    } else {
        (0..s.parse::<u64>().map_err(|_| bad())?).collect()
    };
    if seeds.is_empty() {
        return Err(Error::Config("the seed list is empty".into()));
    }
    Ok(seeds)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Sets one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "dataset" => self.dataset = v.to_string(),
            "treatment" => self.treatment = v.parse()?,
            "embed" => self.embed = v.parse()?,
            "gamma_pct" => self.gamma_pct = num(key, v)?,
            "alpha" => self.train.alpha = num(key, v)?,
            "beta" => self.train.beta = num(key, v)?,
            "lr" => self.train.lr = num(key, v)?,
            "epochs" => self.train.epochs = num(key, v)?,
            "ft_epochs" => self.train.ft_epochs = num(key, v)?,
            "arch" => self.train.arch = v.parse()?,
            "hidden" => {
                let h = num(key, v)?;
                if self.train.repr_dim == self.train.hidden {
                    self.train.repr_dim = h;
                }
                self.train.hidden = h;
            }
            "repr_dim" => self.train.repr_dim = num(key, v)?,
            "disc" => self.train.disc = v.parse::<DiscMode>()?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "out" => self.out = PathBuf::from(v),
            "valid_frac" => self.valid_frac = num(key, v)?,
            "test_frac" => self.test_frac = num(key, v)?,
            "baseline" => self.baseline = num(key, v)?,
            "spectral_clusters" => self.treatment_opts.spectral_clusters = num(key, v)?,
            "propc_max_iters" => self.treatment_opts.propc_max_iters = num(key, v)?,
            "katz_beta" => self.treatment_opts.katz_beta = Some(num(key, v)?),
            "katz_tol" => self.treatment_opts.katz_tol = num(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(path, n + 1, "expected key = value"))?;
            self.set(k, v).map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_empty() {
            return Err(Error::Config("no dataset given".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("the seed list is empty".into()));
        }
        if !(self.gamma_pct > 0.0 && self.gamma_pct < 100.0) {
            return Err(Error::Config(format!("gamma_pct must lie in (0, 100), got {}", self.gamma_pct)));
        }
        if self.train.epochs == 0 || self.train.ft_epochs == 0 {
            return Err(Error::Config("epochs and ft_epochs must be at least 1".into()));
        }
        if let EmbedSource::File(p) = &self.embed {
            if !Path::new(p).is_file() {
                return Err(Error::Config(format!("embedding file {p} does not exist")));
            }
        }
        self.train.validate()
    }

    /// Every setting as `(key, value)` strings, in a fixed order. The output
    /// directory is left out so reports do not depend on where they are written.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let o = &self.treatment_opts;
        let mut pairs = vec![
            ("dataset", self.dataset.clone()),
            ("treatment", self.treatment.to_string()),
            ("embed", self.embed.to_string()),
            ("gamma_pct", self.gamma_pct.to_string()),
            ("alpha", t.alpha.to_string()),
            ("beta", t.beta.to_string()),
            ("lr", t.lr.to_string()),
            ("epochs", t.epochs.to_string()),
            ("ft_epochs", t.ft_epochs.to_string()),
            ("arch", t.arch.to_string()),
            ("hidden", t.hidden.to_string()),
            ("repr_dim", t.repr_dim.to_string()),
            ("disc", t.disc.to_string()),
            ("seeds", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")),
            ("valid_frac", self.valid_frac.to_string()),
            ("test_frac", self.test_frac.to_string()),
            ("baseline", self.baseline.to_string()),
            ("spectral_clusters", o.spectral_clusters.to_string()),
            ("propc_max_iters", o.propc_max_iters.to_string()),
            ("katz_tol", o.katz_tol.to_string()),
        ];
        if let Some(b) = o.katz_beta {
            pairs.push(("katz_beta", b.to_string()));
        }
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn arch(&self) -> Arch {
        self.train.arch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_specs() {
        assert_eq!(parse_seeds("3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("4..6").unwrap(), vec![4, 5]);
        assert_eq!(parse_seeds("7, 1").unwrap(), vec![7, 1]);
        assert!(parse_seeds("0").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn file_then_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# comment\ndataset = toy\nalpha = 0.5\nhidden = 32 # inline\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        cfg.set("alpha", "2").unwrap();
        assert_eq!(cfg.dataset, "toy");
        assert_eq!(cfg.train.alpha, 2.0);
        assert_eq!((cfg.train.hidden, cfg.train.repr_dim), (32, 32));
        assert_eq!(cfg.train.beta, 1.0);
    }

    #[test]
    fn bad_lines_report_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        fs::write(&path, "alpha = 1\nnonsense\n").unwrap();
        let err = RunConfig::default().apply_file(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert!(RunConfig::default().set("colour", "red").is_err());
    }

    #[test]
    fn pairs_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("dataset", "x").unwrap();
        cfg.set("katz_beta", "0.01").unwrap();
        cfg.set("seeds", "2..4").unwrap();
        let mut back = RunConfig::default();
        for (k, v) in cfg.to_pairs() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
    }
}
