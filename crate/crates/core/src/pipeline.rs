//! End-to-end orchestration: load, split, treatment, embedding, γ, matching,
//! training, fine-tuning, prediction and metrics, with artifacts on disk.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::cfmatch::{build_counterfactual_table, CounterfactualTable, MatchConfig};
use crate::config::RunConfig;
use crate::dataset;
use crate::embed::embed;
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, ate_estimated, ate_observed, auc, average_precision, hits_table, kendall_tau, Aggregate, MetricsReport,
};
use crate::graph::{Graph, Pair};
use crate::linalg::Matrix;
use crate::nn::{encoder_forward, read_checkpoint, write_checkpoint, GraphOps, ModelParams};
use crate::split::{sample_negatives, split_edges, EdgeSplit, TrainBatch};
use crate::train::{finetune_decoder, logits_from_repr, sigmoid, train_cflp, write_loss_csv, TrainInputs};
use crate::treatments::{build_treatment, TreatmentAssignment, TreatmentKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Split,
    Treatment,
    Embed,
    Gamma,
    Match,
    Train,
    Finetune,
    Predict,
    Metrics,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Split => "split",
            Stage::Treatment => "treatment",
            Stage::Embed => "embed",
            Stage::Gamma => "gamma",
            Stage::Match => "match",
            Stage::Train => "train",
            Stage::Finetune => "finetune",
            Stage::Predict => "predict",
            Stage::Metrics => "metrics",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An error tagged with the stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

/// Stages in the order they ran, for one process.
#[derive(Clone, Debug, Default)]
pub struct StageLog {
    pub stages: Vec<Stage>,
}

impl StageLog {
    fn run<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T>) -> StageResult<T> {
        // The browser target has no monotonic clock.
        #[cfg(not(target_arch = "wasm32"))]
        let start = Instant::now();
        let out = f().map_err(|source| StageError { stage, source })?;
        #[cfg(not(target_arch = "wasm32"))]
        info!("stage {stage} done in {:.2?}", start.elapsed());
        #[cfg(target_arch = "wasm32")]
        info!("stage {stage} done");
        self.stages.push(stage);
        Ok(out)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(format!("writing {}", path.display()), e)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Value(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

pub fn load_graph(cfg: &RunConfig, log: &mut StageLog) -> StageResult<Graph> {
    log.run(Stage::Load, || {
        let path = dataset::resolve(&cfg.dataset)?;
        let g = dataset::load(&path)?;
        info!(
            "loaded {}: {} nodes, {} edges, {} features",
            path.display(),
            g.num_nodes(),
            g.num_edges(),
            g.feature_dim()
        );
        Ok(g)
    })
}

/// Everything up to and including the counterfactual table.
pub struct Prepared {
    pub split: EdgeSplit,
    pub treatment: TreatmentAssignment,
    pub embedding: Matrix,
    pub matching: MatchConfig,
    pub table: CounterfactualTable,
}

/// Split, treatment, embedding, γ and matching for one seed. Writes
/// `split.bin` and `counterfactual.csv` when `dir` is given.
pub fn prepare(
    graph: &Graph,
    cfg: &RunConfig,
    seed: u64,
    dir: Option<&Path>,
    log: &mut StageLog,
) -> StageResult<Prepared> {
    let split = log.run(Stage::Split, || {
        let s = split_edges(graph, cfg.valid_frac, cfg.test_frac, seed)?;
        if let Some(d) = dir {
            s.write_snapshot(&d.join("split.bin"))?;
        }
        Ok(s)
    })?;
    let treatment = log.run(Stage::Treatment, || {
        let t = build_treatment(cfg.treatment, &split.train_graph, seed, &cfg.treatment_opts)?;
        if let (Some(d), Some(_)) = (dir, t.labels()) {
            t.write_labels(&d.join("treatment_labels.txt"))?;
        }
        Ok(t)
    })?;
    let embedding = log.run(Stage::Embed, || embed(&cfg.embed, &split.train_graph))?;
    let matching = log.run(Stage::Gamma, || {
        let m = MatchConfig::from_percentile(&embedding, cfg.gamma_pct, seed)?;
        info!("gamma = {} ({}th percentile)", m.gamma, cfg.gamma_pct);
        Ok(m)
    })?;
    let table = log.run(Stage::Match, || {
        let batch = counterfactual_queries(&split, &treatment, seed)?;
        let t = build_counterfactual_table(&batch, &embedding, &treatment, &matching, &split.train_graph)?;
        if let Some(d) = dir {
            t.write_csv(&d.join("counterfactual.csv"))?;
        }
        Ok(t)
    })?;
    Ok(Prepared { split, treatment, embedding, matching, table })
}

const CF_NEGATIVE_SEED_SALT: u64 = 0x5EED_CF00;

/// Matching queries: every training edge plus one fixed set of as many
/// negatives, drawn once per seed.
fn counterfactual_queries(split: &EdgeSplit, treatment: &TreatmentAssignment, seed: u64) -> Result<TrainBatch> {
    let negs = sample_negatives(
        &split.train_graph,
        split.train_edges.len(),
        &split.heldout_negatives(),
        seed ^ CF_NEGATIVE_SEED_SALT,
    )?;
    TrainBatch::new(&split.train_edges, &negs, |i, j| Ok(treatment.treat(i, j)))
}

/// Node features, or the matching embedding for featureless graphs.
fn features_of(graph: &Graph, embedding: &Matrix) -> Matrix {
    match graph.features() {
        Some(x) => x.clone(),
        None => {
            warn!("graph has no node features; using the matching embedding as input");
            embedding.clone()
        }
    }
}

fn pairs_and_treatments(pos: &[Pair], neg: &[Pair], t: &TreatmentAssignment) -> (Vec<Pair>, Vec<bool>) {
    let pairs: Vec<Pair> = pos.iter().chain(neg).copied().collect();
    let treatments = pairs.iter().map(|&(i, j)| t.treat(i as usize, j as usize)).collect();
    (pairs, treatments)
}

/// Test metrics of `params` on the split's held-out test pairs.
pub struct TestScores {
    pub hits: BTreeMap<String, f64>,
    pub auc: f64,
    pub ap: f64,
}

pub fn score_test(
    params: &ModelParams,
    ops: &GraphOps,
    x: &Matrix,
    split: &EdgeSplit,
    t: &TreatmentAssignment,
) -> Result<TestScores> {
    let (z, _) = encoder_forward(params, ops, x)?;
    let (pairs, treatments) = pairs_and_treatments(&split.test_pos, &split.test_neg, t);
    let logits = logits_from_repr(&params.decoder, &z, &pairs, &treatments)?;
    let (pos, neg) = logits.split_at(split.test_pos.len());
    Ok(TestScores { hits: hits_table(pos, neg)?, auc: auc(pos, neg)?, ap: average_precision(pos, neg)? })
}

/// Full pipeline for one seed. With `baseline`, the counterfactual terms are
/// compiled out of training and no fine-tuning happens.
pub fn run_seed(
    graph: &Graph,
    cfg: &RunConfig,
    seed: u64,
    dir: Option<&Path>,
    log: &mut StageLog,
) -> StageResult<MetricsReport> {
    if let Some(d) = dir {
        fs::create_dir_all(d).map_err(|e| StageError { stage: Stage::Split, source: io_err(d, e) })?;
    }
    let prep = prepare(graph, cfg, seed, dir, log)?;
    let x = features_of(&prep.split.train_graph, &prep.embedding);
    let ops = GraphOps::new(&prep.split.train_graph);
    let tcfg = crate::train::TrainConfig { seed, ..cfg.train.clone() };
    let inputs =
        TrainInputs { features: &x, ops: &ops, split: &prep.split, treatment: &prep.treatment, cf: &prep.table };

    let mut trained = log.run(Stage::Train, || {
        if cfg.baseline {
            train_cflp::<false>(inputs, &tcfg)
        } else {
            train_cflp::<true>(inputs, &tcfg)
        }
    })?;
    let params = if cfg.baseline {
        trained.params.clone()
    } else {
        log.run(Stage::Finetune, || {
            let (p, ft_trace) = finetune_decoder(&trained.params, inputs, &tcfg)?;
            trained.trace.extend(ft_trace);
            Ok(p)
        })?
    };
    if let Some(d) = dir {
        let persist = || -> Result<()> {
            write_loss_csv(&d.join("loss.csv"), &trained.trace)?;
            write_checkpoint(&d.join("checkpoint.bin"), &params)
        };
        persist().map_err(|source| StageError { stage: Stage::Finetune, source })?;
    }

    let (scores, ate_est) = log.run(Stage::Predict, || {
        let scores = score_test(&params, &ops, &x, &prep.split, &prep.treatment)?;
        let (z, _) = encoder_forward(&params, &ops, &x)?;
        let entries = &prep.table.entries;
        let pairs: Vec<Pair> = entries.iter().map(|e| e.query).collect();
        let t: Vec<bool> = entries.iter().map(|e| e.t).collect();
        let t_cf: Vec<bool> = entries.iter().map(|e| e.t_cf).collect();
        let p: Vec<f64> = logits_from_repr(&params.decoder, &z, &pairs, &t)?.into_iter().map(sigmoid).collect();
        let p_cf: Vec<f64> = logits_from_repr(&params.decoder, &z, &pairs, &t_cf)?.into_iter().map(sigmoid).collect();
        Ok((scores, ate_estimated(&t, &p, &p_cf)?))
    })?;

    let report = log.run(Stage::Metrics, || {
        let report = MetricsReport {
            seed,
            hits_at_k: scores.hits,
            auc: scores.auc,
            ap: scores.ap,
            ate_obs: ate_observed(&prep.table.entries)?,
            ate_est,
            gamma: prep.matching.gamma,
            fallback_fraction: prep.table.fallback_fraction(),
            best_epoch: trained.best_epoch,
            best_valid_hits: trained.best_valid_hits,
        };
        check_finite(&report)?;
        if let Some(d) = dir {
            write_json(&d.join("report.json"), &report)?;
        }
        Ok(report)
    })?;
    info!("seed {seed}: {:?} auc {:.4} ap {:.4}", report.hits_at_k, report.auc, report.ap);
    Ok(report)
}

fn check_finite(r: &MetricsReport) -> Result<()> {
    let bad: Vec<String> = r
        .scalars()
        .into_iter()
        .chain([("gamma".to_string(), r.gamma)])
        .filter(|(_, v)| !v.is_finite())
        .map(|(k, _)| k)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite metrics: {}", bad.join(", "))))
    }
}

/// The multi-seed summary written to `aggregate.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub config: BTreeMap<String, String>,
    #[serde(flatten)]
    pub aggregate: Aggregate,
}

#[derive(Debug)]
pub struct RunOutput {
    pub reports: Vec<MetricsReport>,
    pub aggregate: AggregateReport,
    pub stages: Vec<Stage>,
}

/// Runs every seed and writes per-seed artifacts plus `aggregate.json`
/// under `cfg.out`.
pub fn run_pipeline(cfg: &RunConfig) -> StageResult<RunOutput> {
    cfg.validate().map_err(|source| StageError { stage: Stage::Load, source })?;
    let mut log = StageLog::default();
    let graph = load_graph(cfg, &mut log)?;
    run_pipeline_on(&graph, cfg, &mut log)
}

/// [`run_pipeline`] for an already loaded graph.
pub fn run_pipeline_on(graph: &Graph, cfg: &RunConfig, log: &mut StageLog) -> StageResult<RunOutput> {
    let mut reports = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        reports.push(run_seed(graph, cfg, seed, Some(&seed_dir(&cfg.out, seed)), log)?);
    }
    let aggregate = log.run(Stage::Metrics, || {
        let agg = AggregateReport { config: cfg.to_pairs().into_iter().collect(), aggregate: aggregate(&reports)? };
        write_json(&cfg.out.join("aggregate.json"), &agg)?;
        Ok(agg)
    })?;
    Ok(RunOutput { reports, aggregate, stages: log.stages.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub treatment: String,
    pub hits20: Option<f64>,
    pub ate_obs: f64,
    pub ate_est: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Sorted by Hits@20, best first.
    pub rows: Vec<ComparisonRow>,
    /// Kendall τ between the ATE_obs and ATE_est rankings; null for fewer
    /// than two treatments.
    pub kendall_tau: Option<f64>,
}

/// Runs the pipeline once per treatment (artifacts under `out/<key>`) and
/// writes `comparison.json`.
pub fn compare_treatments(cfg: &RunConfig, keys: &[TreatmentKey]) -> StageResult<Comparison> {
    cfg.validate().map_err(|source| StageError { stage: Stage::Load, source })?;
    let mut log = StageLog::default();
    let graph = load_graph(cfg, &mut log)?;
    let mut rows = Vec::with_capacity(keys.len());
    for &key in keys {
        let sub = RunConfig { treatment: key, out: cfg.out.join(key.as_str()), ..cfg.clone() };
        let out = run_pipeline_on(&graph, &sub, &mut log)?;
        let m = &out.aggregate.aggregate.metrics;
        rows.push(ComparisonRow {
            treatment: key.to_string(),
            hits20: m.get("hits@20").map(|s| s.mean),
            ate_obs: m["ate_obs"].mean,
            ate_est: m["ate_est"].mean,
        });
    }
    let kendall = if rows.len() >= 2 {
        let obs: Vec<f64> = rows.iter().map(|r| r.ate_obs).collect();
        let est: Vec<f64> = rows.iter().map(|r| r.ate_est).collect();
        Some(kendall_tau(&obs, &est).map_err(|source| StageError { stage: Stage::Metrics, source })?)
    } else {
        None
    };
    rows.sort_by(|a, b| {
        let key = |r: &ComparisonRow| r.hits20.unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then_with(|| a.treatment.cmp(&b.treatment))
    });
    let cmp = Comparison { rows, kendall_tau: kendall };
    write_json(&cfg.out.join("comparison.json"), &cmp)
        .map_err(|source| StageError { stage: Stage::Metrics, source })?;
    Ok(cmp)
}

/// Matching statistics of one seed, without training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub seed: u64,
    pub treatment: String,
    pub gamma_pct: f64,
    pub gamma: f64,
    pub queries: usize,
    pub matched: usize,
    pub fallback_fraction: f64,
    pub ate_obs: f64,
}

/// Builds the counterfactual table for every seed and writes
/// `counterfactual.csv` per seed plus `match_summary.json`.
pub fn match_only(cfg: &RunConfig) -> StageResult<Vec<MatchSummary>> {
    cfg.validate().map_err(|source| StageError { stage: Stage::Load, source })?;
    let mut log = StageLog::default();
    let graph = load_graph(cfg, &mut log)?;
    match_only_on(&graph, cfg, &mut log)
}

pub fn match_only_on(graph: &Graph, cfg: &RunConfig, log: &mut StageLog) -> StageResult<Vec<MatchSummary>> {
    let mut out = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.out, seed);
        fs::create_dir_all(&dir).map_err(|e| StageError { stage: Stage::Split, source: io_err(&dir, e) })?;
        let prep = prepare(graph, cfg, seed, Some(&dir), log)?;
        let ate = ate_observed(&prep.table.entries).map_err(|source| StageError { stage: Stage::Metrics, source })?;
        out.push(MatchSummary {
            seed,
            treatment: cfg.treatment.to_string(),
            gamma_pct: cfg.gamma_pct,
            gamma: prep.matching.gamma,
            queries: prep.table.len(),
            matched: prep.table.matched_count(),
            fallback_fraction: prep.table.fallback_fraction(),
            ate_obs: ate,
        });
    }
    write_json(&cfg.out.join("match_summary.json"), &out)
        .map_err(|source| StageError { stage: Stage::Metrics, source })?;
    Ok(out)
}

/// Fallback fraction and ATE_obs across γ percentiles, as CSV rows
/// `seed,gamma_pct,gamma,fallback_fraction,ate_obs`.
pub fn gamma_sweep(graph: &Graph, cfg: &RunConfig, pcts: &[f64]) -> StageResult<String> {
    let mut log = StageLog::default();
    let mut csv = String::from("seed,gamma_pct,gamma,fallback_fraction,ate_obs\n");
    for &seed in &cfg.seeds {
        for &pct in pcts {
            let sub = RunConfig { gamma_pct: pct, ..cfg.clone() };
            let prep = prepare(graph, &sub, seed, None, &mut log)?;
            let ate =
                ate_observed(&prep.table.entries).map_err(|source| StageError { stage: Stage::Metrics, source })?;
            csv.push_str(&format!("{seed},{pct},{},{},{ate}\n", prep.matching.gamma, prep.table.fallback_fraction()));
        }
    }
    Ok(csv)
}

/// Test metrics of a stored checkpoint against a stored split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub hits_at_k: BTreeMap<String, f64>,
    pub auc: f64,
    pub ap: f64,
}

/// Scores `run_dir/checkpoint.bin` on `run_dir/split.bin`. The treatment is
/// rebuilt from the stored split with `seed`.
pub fn eval_only(cfg: &RunConfig, run_dir: &Path, seed: u64) -> StageResult<EvalReport> {
    let mut log = StageLog::default();
    let graph = load_graph(cfg, &mut log)?;
    let split = log.run(Stage::Split, || EdgeSplit::read_snapshot(&run_dir.join("split.bin"), &graph))?;
    let treatment =
        log.run(Stage::Treatment, || build_treatment(cfg.treatment, &split.train_graph, seed, &cfg.treatment_opts))?;
    let x = match split.train_graph.features() {
        Some(x) => x.clone(),
        None => log.run(Stage::Embed, || embed(&cfg.embed, &split.train_graph))?,
    };
    let params = log.run(Stage::Predict, || read_checkpoint(&run_dir.join("checkpoint.bin")))?;
    let ops = GraphOps::new(&split.train_graph);
    let scores = log.run(Stage::Metrics, || score_test(&params, &ops, &x, &split, &treatment))?;
    let report = EvalReport { seed, hits_at_k: scores.hits, auc: scores.auc, ap: scores.ap };
    write_json(&run_dir.join("eval.json"), &report).map_err(|source| StageError { stage: Stage::Metrics, source })?;
    Ok(report)
}
