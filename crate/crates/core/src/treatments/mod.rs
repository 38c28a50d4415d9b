//! Binary pair treatments derived from global graph structure.
//!
//! A treatment is either a node clustering (`T(i,j) = 1` iff both nodes
//! share a cluster) or a pairwise structural score compared against a
//! threshold.

mod katz;
mod kcore;
mod louvain;
mod propc;
mod spectral;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::info;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;

pub use katz::{katz_matrix, katz_treatment, spectral_radius_estimate};
pub use kcore::{core_numbers, kcore_treatment};
pub use louvain::{louvain, louvain_treatment, modularity};
pub use propc::{label_propagation, propc_treatment};
pub use spectral::{kmeans, spectral_treatment};

/// Common-neighbor count at or above which a pair is treated.
pub const COMMON_NEIGHBORS_THRESHOLD: f64 = 2.0;

/// Default number of clusters for spectral clustering.
pub const DEFAULT_SPECTRAL_CLUSTERS: usize = 16;

/// Treatment selector as written on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TreatmentKey {
    Kcore,
    Louvain,
    Propc,
    Specc,
    Commn,
    Katz,
}

impl TreatmentKey {
    pub const ALL: [TreatmentKey; 6] = [
        TreatmentKey::Kcore,
        TreatmentKey::Louvain,
        TreatmentKey::Propc,
        TreatmentKey::Specc,
        TreatmentKey::Commn,
        TreatmentKey::Katz,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TreatmentKey::Kcore => "kcore",
            TreatmentKey::Louvain => "louvain",
            TreatmentKey::Propc => "propc",
            TreatmentKey::Specc => "specc",
            TreatmentKey::Commn => "commn",
            TreatmentKey::Katz => "katz",
        }
    }
}

impl fmt::Display for TreatmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TreatmentKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TreatmentKey::ALL.into_iter().find(|k| k.as_str().eq_ignore_ascii_case(s.trim())).ok_or_else(|| {
            Error::Config(format!("unknown treatment {s:?} (expected kcore|louvain|propc|specc|commn|katz)"))
        })
    }
}

/// Knobs for the treatment constructors that take parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TreatmentOptions {
    pub spectral_clusters: usize,
    pub propc_max_iters: usize,
    /// `None` picks the default Katz decay from the spectral radius.
    pub katz_beta: Option<f64>,
    pub katz_tol: f64,
}

impl Default for TreatmentOptions {
    fn default() -> Self {
        Self { spectral_clusters: DEFAULT_SPECTRAL_CLUSTERS, propc_max_iters: 100, katz_beta: None, katz_tol: 1e-10 }
    }
}

/// Pairwise structural score backing a threshold treatment.
#[derive(Clone, Debug, PartialEq)]
pub enum PairScore {
    CommonNeighbors(Graph),
    Katz(Matrix),
}

impl PairScore {
    #[inline]
    fn score(&self, i: usize, j: usize) -> f64 {
        match self {
            PairScore::CommonNeighbors(g) => common_neighbor_count(g, i, j) as f64,
            PairScore::Katz(k) => k.get(i, j),
        }
    }

    fn num_nodes(&self) -> usize {
        match self {
            PairScore::CommonNeighbors(g) => g.num_nodes(),
            PairScore::Katz(k) => k.rows(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreatmentAssignment {
    ClusterLabels { labels: Vec<u32> },
    PairScoreThreshold { score: PairScore, threshold: f64 },
}

impl TreatmentAssignment {
    pub fn num_nodes(&self) -> usize {
        match self {
            TreatmentAssignment::ClusterLabels { labels } => labels.len(),
            TreatmentAssignment::PairScoreThreshold { score, .. } => score.num_nodes(),
        }
    }

    pub fn labels(&self) -> Option<&[u32]> {
        match self {
            TreatmentAssignment::ClusterLabels { labels } => Some(labels),
            _ => None,
        }
    }

    /// `T(i, j)` with bounds checking.
    pub fn treatment_of(&self, i: usize, j: usize) -> Result<bool> {
        let n = self.num_nodes();
        for v in [i, j] {
            if v >= n {
                return Err(Error::Bounds { what: "nodes", index: v, len: n });
            }
        }
        if i == j {
            return Err(Error::Value(format!("treatment is defined for distinct nodes, got ({i}, {i})")));
        }
        Ok(self.treat(i, j))
    }

    /// `T(i, j)` without checks; callers guarantee `i != j` and both in range.
    #[inline]
    pub fn treat(&self, i: usize, j: usize) -> bool {
        match self {
            TreatmentAssignment::ClusterLabels { labels } => labels[i] == labels[j],
            TreatmentAssignment::PairScoreThreshold { score, threshold } => score.score(i, j) >= *threshold,
        }
    }

    /// Writes `node label` lines. Only cluster treatments have node labels.
    pub fn write_labels(&self, path: &Path) -> Result<()> {
        let labels =
            self.labels().ok_or_else(|| Error::Config("pair-score treatments have no node labels to export".into()))?;
        let ctx = || format!("writing {}", path.display());
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(ctx(), e))?);
        for (v, l) in labels.iter().enumerate() {
            writeln!(out, "{v} {l}").map_err(|e| Error::io(ctx(), e))?;
        }
        out.flush().map_err(|e| Error::io(ctx(), e))
    }
}

/// Builds the treatment selected by `key` on `graph`.
pub fn build_treatment(
    key: TreatmentKey,
    graph: &Graph,
    seed: u64,
    opts: &TreatmentOptions,
) -> Result<TreatmentAssignment> {
    let t = match key {
        TreatmentKey::Kcore => kcore_treatment(graph),
        TreatmentKey::Louvain => louvain_treatment(graph, seed)?,
        TreatmentKey::Propc => propc_treatment(graph, seed, opts.propc_max_iters)?,
        TreatmentKey::Specc => spectral_treatment(graph, opts.spectral_clusters.min(graph.num_nodes()), seed)?,
        TreatmentKey::Commn => commn_treatment(graph),
        TreatmentKey::Katz => katz_treatment(graph, opts.katz_beta, opts.katz_tol)?,
    };
    if let Some(labels) = t.labels() {
        let mut distinct = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        info!("treatment {key}: {} clusters over {} nodes", distinct.len(), labels.len());
    }
    Ok(t)
}

/// `|N(i) ∩ N(j)|` by merging the sorted neighbor lists.
pub fn common_neighbor_count(graph: &Graph, i: usize, j: usize) -> usize {
    let (a, b) = (graph.neighbors(i), graph.neighbors(j));
    let (mut x, mut y, mut count) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                x += 1;
                y += 1;
            }
        }
    }
    count
}

/// Treated iff the pair shares at least two neighbors.
pub fn commn_treatment(graph: &Graph) -> TreatmentAssignment {
    TreatmentAssignment::PairScoreThreshold {
        score: PairScore::CommonNeighbors(graph.clone()),
        threshold: COMMON_NEIGHBORS_THRESHOLD,
    }
}

/// Relabels arbitrary cluster ids to `0..C` in order of first appearance.
pub(crate) fn compact_labels(raw: &[usize]) -> Vec<u32> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|&r| {
            let next = map.len() as u32;
            *map.entry(r).or_insert(next)
        })
        .collect()
}
