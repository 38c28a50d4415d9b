//! Train/validation/test edge splits and negative sampling.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{canonical, Graph, Pair};

/// Graphs at or below this size enumerate non-edges exhaustively.
const EXHAUSTIVE_NEGATIVES_MAX_NODES: usize = 2000;

const SNAPSHOT_MAGIC: &[u8; 8] = b"CFLPSPLT";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSplit {
    pub train_edges: Vec<Pair>,
    pub valid_pos: Vec<Pair>,
    pub valid_neg: Vec<Pair>,
    pub test_pos: Vec<Pair>,
    pub test_neg: Vec<Pair>,
    /// The input graph with validation and test positives removed.
    pub train_graph: Graph,
}

impl EdgeSplit {
    /// Held-out negatives, excluded from train-time negative sampling.
    pub fn heldout_negatives(&self) -> HashSet<Pair> {
        self.valid_neg.iter().chain(&self.test_neg).copied().collect()
    }

    /// Versioned little-endian binary snapshot of the five pair lists.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(SNAPSHOT_MAGIC);
        buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.train_graph.num_nodes() as u32).to_le_bytes());
        for list in [&self.train_edges, &self.valid_pos, &self.valid_neg, &self.test_pos, &self.test_neg] {
            buf.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for &(i, j) in list.iter() {
                buf.extend_from_slice(&i.to_le_bytes());
                buf.extend_from_slice(&j.to_le_bytes());
            }
        }
        fs::write(path, buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Restores a snapshot; `graph` supplies the node count and features.
    pub fn read_snapshot(path: &Path, graph: &Graph) -> Result<EdgeSplit> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let bad = |msg: &str| Error::Value(format!("{}: {msg}", path.display()));
        let mut cursor = bytes.as_slice();
        let mut take = |n: usize| -> Result<&[u8]> {
            if cursor.len() < n {
                return Err(bad("truncated split snapshot"));
            }
            let (head, tail) = cursor.split_at(n);
            cursor = tail;
            Ok(head)
        };
        if take(8)? != SNAPSHOT_MAGIC {
            return Err(bad("not a split snapshot"));
        }
        let read_u32 = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = read_u32(take(4)?);
        if version != SNAPSHOT_VERSION {
            return Err(bad(&format!("unsupported snapshot version {version}")));
        }
        let n = read_u32(take(4)?) as usize;
        if n != graph.num_nodes() {
            return Err(Error::Shape(format!("snapshot has {n} nodes, graph has {}", graph.num_nodes())));
        }
        let mut lists: Vec<Vec<Pair>> = Vec::with_capacity(5);
        for _ in 0..5 {
            let len = read_u32(take(4)?) as usize;
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let i = read_u32(take(4)?);
                let j = read_u32(take(4)?);
                if i as usize >= n || j as usize >= n {
                    return Err(Error::Bounds { what: "nodes", index: i.max(j) as usize, len: n });
                }
                list.push((i, j));
            }
            lists.push(list);
        }
        let test_neg = lists.pop().unwrap();
        let test_pos = lists.pop().unwrap();
        let valid_neg = lists.pop().unwrap();
        let valid_pos = lists.pop().unwrap();
        let train_edges = lists.pop().unwrap();
        let removed: HashSet<Pair> = valid_pos.iter().chain(&test_pos).copied().collect();
        let train_graph = graph.without_edges(&removed);
        Ok(EdgeSplit { train_edges, valid_pos, valid_neg, test_pos, test_neg, train_graph })
    }
}

/// Splits the edges uniformly at random: `floor(frac * E)` validation and
/// test positives, each paired with as many disconnected node pairs.
pub fn split_edges(graph: &Graph, valid_frac: f64, test_frac: f64, seed: u64) -> Result<EdgeSplit> {
    for (name, f) in [("valid_frac", valid_frac), ("test_frac", test_frac)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    if valid_frac + test_frac >= 1.0 {
        return Err(Error::Config(format!("valid_frac + test_frac must be below 1, got {}", valid_frac + test_frac)));
    }
    let e = graph.num_edges();
    let n_valid = (valid_frac * e as f64).floor() as usize;
    let n_test = (test_frac * e as f64).floor() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = graph.edges().to_vec();
    shuffled.shuffle(&mut rng);
    let mut valid_pos = shuffled[..n_valid].to_vec();
    let mut test_pos = shuffled[n_valid..n_valid + n_test].to_vec();
    let mut train_edges = shuffled[n_valid + n_test..].to_vec();
    valid_pos.sort_unstable();
    test_pos.sort_unstable();
    train_edges.sort_unstable();

    let negatives = sample_negatives(graph, n_valid + n_test, &HashSet::new(), rng.gen())?;
    let valid_neg = negatives[..n_valid].to_vec();
    let test_neg = negatives[n_valid..].to_vec();

    let removed: HashSet<Pair> = valid_pos.iter().chain(&test_pos).copied().collect();
    let train_graph = graph.without_edges(&removed);
    Ok(EdgeSplit { train_edges, valid_pos, valid_neg, test_pos, test_neg, train_graph })
}

/// Uniformly samples `count` distinct disconnected pairs (canonical form)
/// that are not in `exclude`.
pub fn sample_negatives(graph: &Graph, count: usize, exclude: &HashSet<Pair>, seed: u64) -> Result<Vec<Pair>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = graph.num_nodes();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let excluded_non_edges = exclude
        .iter()
        .filter(|&&(i, j)| i != j && (i as usize) < n && (j as usize) < n && !graph.has_edge(i as usize, j as usize))
        .map(|&(i, j)| canonical(i, j))
        .collect::<HashSet<_>>()
        .len();
    let capacity = total_pairs - graph.num_edges() - excluded_non_edges;
    if count > capacity {
        return Err(Error::Capacity(format!(
            "requested {count} negative pairs but only {capacity} disconnected pairs are available"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let is_excluded = |p: Pair| exclude.contains(&p) || exclude.contains(&(p.1, p.0));

    if n <= EXHAUSTIVE_NEGATIVES_MAX_NODES || count * 2 > capacity {
        let mut pool = Vec::with_capacity(capacity);
        for i in 0..n {
            let nbrs = graph.neighbors(i);
            let mut k = nbrs.partition_point(|&u| (u as usize) <= i);
            for j in i + 1..n {
                if k < nbrs.len() && nbrs[k] as usize == j {
                    k += 1;
                    continue;
                }
                let p = (i as u32, j as u32);
                if !is_excluded(p) {
                    pool.push(p);
                }
            }
        }
        let (picked, _) = pool.partial_shuffle(&mut rng, count);
        return Ok(picked.to_vec());
    }

    let mut seen = HashSet::with_capacity(count * 2);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j {
            continue;
        }
        let p = canonical(i as u32, j as u32);
        if graph.has_edge(i, j) || is_excluded(p) || !seen.insert(p) {
            continue;
        }
        out.push(p);
    }
    Ok(out)
}

/// Factual training examples: pairs, their link labels and treatments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainBatch {
    pub pairs: Vec<Pair>,
    pub labels: Vec<bool>,
    pub treatments: Vec<bool>,
}

impl TrainBatch {
    /// Positives get label 1, negatives label 0; `treatment` is evaluated per pair.
    pub fn new(
        positives: &[Pair],
        negatives: &[Pair],
        mut treatment: impl FnMut(usize, usize) -> Result<bool>,
    ) -> Result<TrainBatch> {
        let mut batch = TrainBatch::default();
        for (list, label) in [(positives, true), (negatives, false)] {
            for &(i, j) in list {
                batch.pairs.push((i, j));
                batch.labels.push(label);
                batch.treatments.push(treatment(i as usize, j as usize)?);
            }
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
