//! Dataset directory resolution.
//!
//! Two on-disk layouts are understood:
//!
//! * native: `edges.txt` (0-based `src dst` pairs) plus optional
//!   `features.txt` (one row per node);
//! * LINQS citation dumps: `<name>.cites` (`cited citing` paper ids) plus
//!   `<name>.content` (`paper_id f_1 .. f_F class`). Paper ids are mapped to
//!   dense indices in `.content` order; citations that mention unknown papers
//!   are dropped.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::error::{Error, Result};
use crate::graph::{load_edge_list, load_features, Graph};
use crate::linalg::Matrix;

/// Environment variable naming a directory that holds one sub-directory per dataset.
pub const DATA_DIR_ENV: &str = "CFLP_DATA_DIR";

/// Resolves a dataset argument: an existing path is used as-is, otherwise the
/// name is looked up under `$CFLP_DATA_DIR` and then `./data`.
pub fn resolve(spec: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(spec);
    if direct.exists() {
        return Ok(direct);
    }
    let mut tried = vec![direct];
    if let Ok(root) = std::env::var(DATA_DIR_ENV) {
        let p = Path::new(&root).join(spec);
        if p.exists() {
            return Ok(p);
        }
        tried.push(p);
    }
    let p = Path::new("data").join(spec);
    if p.exists() {
        return Ok(p);
    }
    tried.push(p);
    Err(Error::Config(format!(
        "dataset {spec:?} not found (looked in {})",
        tried.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
    )))
}

/// Writes `graph` in the native layout: `edges.txt` plus `features.txt`
/// when the graph has features.
pub fn write_native(graph: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    graph.write_edge_list(&dir.join("edges.txt"))?;
    if let Some(x) = graph.features() {
        crate::embed::write_embeddings(&dir.join("features.txt"), x)?;
    }
    Ok(())
}

/// Loads a dataset from a file (bare edge list) or a directory in one of the
/// supported layouts.
pub fn load(path: &Path) -> Result<Graph> {
    if path.is_file() {
        return load_edge_list(path, None);
    }
    let edges = path.join("edges.txt");
    if edges.is_file() {
        let feats = path.join("features.txt");
        let n_hint = count_rows(&feats)?;
        let g = load_edge_list(&edges, n_hint)?;
        return if feats.is_file() { load_features(&feats, g) } else { Ok(g) };
    }
    let entries = fs::read_dir(path).map_err(|e| Error::io(format!("listing {}", path.display()), e))?;
    let mut cites = None;
    let mut content = None;
    for entry in entries.flatten() {
        let p = entry.path();
        match p.extension().and_then(|e| e.to_str()) {
            Some("cites") => cites = Some(p),
            Some("content") => content = Some(p),
            _ => {}
        }
    }
    match (cites, content) {
        (Some(c), Some(x)) => load_linqs(&c, &x),
        _ => Err(Error::Config(format!("{} holds neither edges.txt nor a .cites/.content pair", path.display()))),
    }
}

fn count_rows(path: &Path) -> Result<Option<usize>> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(Some(text.lines().filter(|l| !l.trim().is_empty()).count()))
}

/// Loads a LINQS `.cites`/`.content` pair.
pub fn load_linqs(cites: &Path, content: &Path) -> Result<Graph> {
    let text = fs::read_to_string(content).map_err(|e| Error::io(format!("reading {}", content.display()), e))?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut data = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(Error::parse(content, lineno + 1, "expected id, features and class"));
        }
        let feats = &fields[1..fields.len() - 1];
        match width {
            None => width = Some(feats.len()),
            Some(w) if w != feats.len() => {
                return Err(Error::Shape(format!(
                    "{}:{}: {} features, expected {w}",
                    content.display(),
                    lineno + 1,
                    feats.len()
                )))
            }
            _ => {}
        }
        for f in feats {
            data.push(
                f.parse::<f64>().map_err(|_| Error::parse(content, lineno + 1, format!("invalid number {f:?}")))?,
            );
        }
        let next = index.len();
        if index.insert(fields[0].to_string(), next).is_some() {
            return Err(Error::parse(content, lineno + 1, format!("duplicate paper id {}", fields[0])));
        }
    }
    let n = index.len();
    let features = Matrix::from_vec(n, width.unwrap_or(0), data)?;

    let text = fs::read_to_string(cites).map_err(|e| Error::io(format!("reading {}", cites.display()), e))?;
    let mut pairs = Vec::new();
    let mut dropped = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::parse(cites, lineno + 1, format!("expected 2 fields, found {}", fields.len())));
        }
        match (index.get(fields[0]), index.get(fields[1])) {
            (Some(&a), Some(&b)) => pairs.push((a, b)),
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        warn!("{}: dropped {dropped} citations to unknown papers", cites.display());
    }
    let g = Graph::from_edges(n, pairs)?.with_features(features)?;
    info!("loaded {} nodes, {} undirected links, {} features", g.num_nodes(), g.num_edges(), g.feature_dim());
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linqs_layout() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("toy.content"), "p9\t1\t0\tA\np3\t0\t1\tB\np5\t1\t1\tA\n").unwrap();
        fs::write(dir.path().join("toy.cites"), "p9\tp3\np3\tp9\np5\tp3\np5\tp5\npX\tp3\n").unwrap();
        let g = load(dir.path()).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.features().unwrap().row(1), &[0.0, 1.0]);
    }

    #[test]
    fn native_layout() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("edges.txt"), "0 1\n").unwrap();
        fs::write(dir.path().join("features.txt"), "1 0\n0 1\n1 1\n").unwrap();
        let g = load(dir.path()).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges(), g.feature_dim()), (3, 1, 2));
    }

    #[test]
    fn missing_dataset_is_config_error() {
        assert!(matches!(resolve("surely-not-a-dataset-name"), Err(Error::Config(_))));
    }
}
