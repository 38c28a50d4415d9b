//! Counterfactual link matching.
//!
//! For a training pair `(i, j)` with treatment `t`, the counterfactual link is
//! the pair `(a, b)` with the opposite treatment that minimizes
//! `d(x_i, x_a) + d(x_j, x_b)` in embedding space, provided that sum stays
//! strictly below `2γ`. Pairs without such a neighbor fall back to their own
//! treatment and label.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, Pair};
use crate::linalg::{euclidean, Matrix};
use crate::par;
use crate::split::TrainBatch;
use crate::treatments::TreatmentAssignment;

/// Above this node count γ is estimated from sampled pairs.
pub const EXACT_PERCENTILE_MAX_NODES: usize = 5000;
pub const SAMPLED_PAIRS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MatchConfig {
    pub gamma: f64,
    pub gamma_pct: f64,
    pub seed: u64,
}

impl MatchConfig {
    /// Derives γ as the `pct`-th percentile of pairwise embedding distances.
    pub fn from_percentile(emb: &Matrix, pct: f64, seed: u64) -> Result<MatchConfig> {
        let gamma = gamma_from_percentile(emb, pct, seed)?;
        Ok(MatchConfig { gamma, gamma_pct: pct, seed })
    }
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &mut [f64], pct: f64) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let rank = pct / 100.0 * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (rank - lo as f64)
}

/// The `pct`-th percentile of all pairwise node distances (exact up to
/// [`EXACT_PERCENTILE_MAX_NODES`] nodes, sampled beyond).
pub fn gamma_from_percentile(emb: &Matrix, pct: f64, seed: u64) -> Result<f64> {
    let n = emb.rows();
    if !(pct > 0.0 && pct < 100.0) {
        return Err(Error::Config(format!("gamma percentile {pct} must lie in (0, 100)")));
    }
    if n < 2 {
        return Err(Error::Degenerate(format!("cannot take pairwise distances of {n} nodes")));
    }
    let mut dists = if n <= EXACT_PERCENTILE_MAX_NODES {
        par::map_range(n, |i| ((i + 1)..n).map(|j| euclidean(emb.row(i), emb.row(j))).collect::<Vec<_>>()).concat()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..SAMPLED_PAIRS)
            .map(|_| {
                let i = rng.gen_range(0..n);
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                euclidean(emb.row(i), emb.row(j))
            })
            .collect()
    };
    let gamma = percentile(&mut dists, pct);
    if gamma == 0.0 {
        warn!("gamma is 0: every pair will fall back to its factual link");
    }
    Ok(gamma)
}

/// One row of the counterfactual table. `matched` is `None` for fallbacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CfEntry {
    pub query: Pair,
    pub t: bool,
    pub label: bool,
    pub matched: Option<Pair>,
    pub t_cf: bool,
    pub a_cf: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CounterfactualTable {
    pub entries: Vec<CfEntry>,
}

impl CounterfactualTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn matched_count(&self) -> usize {
        self.entries.iter().filter(|e| e.matched.is_some()).count()
    }

    pub fn fallback_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        1.0 - self.matched_count() as f64 / self.entries.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("query_i,query_j,t,label,matched_a,matched_b,t_cf,a_cf\n");
        for e in &self.entries {
            let (a, b) = e.matched.map_or((-1, -1), |(a, b)| (a as i64, b as i64));
            s.push_str(&format!(
                "{},{},{},{},{a},{b},{},{}\n",
                e.query.0, e.query.1, e.t as u8, e.label as u8, e.t_cf as u8, e.a_cf as u8
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Fast `T(a, b)` lookups for the inner matching loop.
enum PairTest<'a> {
    Labels(&'a [u32]),
    Bits { n: usize, words: Vec<u64> },
}

impl PairTest<'_> {
    #[inline]
    fn get(&self, a: usize, b: usize) -> bool {
        match self {
            PairTest::Labels(l) => l[a] == l[b],
            PairTest::Bits { n, words } => {
                let k = a * n + b;
                words[k / 64] >> (k % 64) & 1 == 1
            }
        }
    }
}

/// Precomputed distances, radius candidate lists and treated-partner lists.
pub struct Matcher<'a> {
    n: usize,
    two_gamma: f64,
    dist: Matrix,
    /// `candidates[i]`: nodes `a` with `d(i, a) < 2γ`, by increasing distance.
    candidates: Vec<Vec<u32>>,
    /// `treated[a]`: nodes `b != a` with `T(a, b) = 1`, ascending.
    treated: Vec<Vec<u32>>,
    test: PairTest<'a>,
}

impl<'a> Matcher<'a> {
    pub fn new(emb: &Matrix, treatment: &'a TreatmentAssignment, cfg: &MatchConfig) -> Result<Matcher<'a>> {
        let n = emb.rows();
        if treatment.num_nodes() != n {
            return Err(Error::Shape(format!(
                "embedding has {n} rows, treatment covers {} nodes",
                treatment.num_nodes()
            )));
        }
        if !(cfg.gamma >= 0.0 && cfg.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be finite and non-negative, got {}", cfg.gamma)));
        }
        let two_gamma = 2.0 * cfg.gamma;
        let mut dist = Matrix::zeros(n, n);
        par::for_each_row_mut(dist.data_mut(), n, |i, row| {
            for (j, d) in row.iter_mut().enumerate() {
                *d = euclidean(emb.row(i), emb.row(j));
            }
        });
        let candidates = par::map_range(n, |i| {
            let row = dist.row(i);
            let mut c: Vec<u32> = (0..n as u32).filter(|&a| row[a as usize] < two_gamma).collect();
            c.sort_by(|&x, &y| row[x as usize].total_cmp(&row[y as usize]).then(x.cmp(&y)));
            c
        });
        let test = match treatment {
            TreatmentAssignment::ClusterLabels { labels } => PairTest::Labels(labels),
            _ => {
                let rows = par::map_range(n, |a| (0..n).map(|b| a != b && treatment.treat(a, b)).collect::<Vec<_>>());
                let mut words = vec![0u64; (n * n).div_ceil(64)];
                for (a, row) in rows.iter().enumerate() {
                    for (b, &t) in row.iter().enumerate() {
                        if t {
                            let k = a * n + b;
                            words[k / 64] |= 1 << (k % 64);
                        }
                    }
                }
                PairTest::Bits { n, words }
            }
        };
        let treated =
            par::map_range(n, |a| (0..n as u32).filter(|&b| b as usize != a && test.get(a, b as usize)).collect());
        Ok(Matcher { n, two_gamma, dist, candidates, treated, test })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Nearest opposite-treatment pair for the query, or `None` when nothing
    /// fits the budget. Ties resolve to the lexicographically smallest `(a, b)`.
    pub fn find(&self, i: usize, j: usize, t_query: bool) -> Option<Pair> {
        let target = !t_query;
        let is_query = |a: usize, b: usize| (a == i && b == j) || (a == j && b == i);
        let mut best: Option<(f64, usize, usize)> = None;
        let better = |s: f64, a: usize, b: usize, best: &Option<(f64, usize, usize)>| match best {
            None => true,
            Some((bs, ba, bb)) => s < *bs || (s == *bs && (a, b) < (*ba, *bb)),
        };
        let dj = self.dist.row(j);
        let cand_j = &self.candidates[j];
        for &a in &self.candidates[i] {
            let a = a as usize;
            let da = self.dist.get(i, a);
            if best.is_some_and(|(bs, _, _)| da > bs) {
                break;
            }
            let partners = &self.treated[a];
            if target && partners.len() < cand_j.len() {
                for &b in partners {
                    let b = b as usize;
                    let s = da + dj[b];
                    if s < self.two_gamma && !is_query(a, b) && better(s, a, b, &best) {
                        best = Some((s, a, b));
                    }
                }
            } else {
                for &b in cand_j {
                    let b = b as usize;
                    let s = da + dj[b];
                    if s >= self.two_gamma || best.is_some_and(|(bs, _, _)| s > bs) {
                        break;
                    }
                    if a != b && self.test.get(a, b) == target && !is_query(a, b) && better(s, a, b, &best) {
                        best = Some((s, a, b));
                    }
                }
            }
        }
        best.map(|(_, a, b)| (a as u32, b as u32))
    }
}

/// Matches one query and fills in the counterfactual treatment and label.
pub fn find_counterfactual(matcher: &Matcher<'_>, query: Pair, t: bool, label: bool, train_graph: &Graph) -> CfEntry {
    match matcher.find(query.0 as usize, query.1 as usize, t) {
        Some((a, b)) => CfEntry {
            query,
            t,
            label,
            matched: Some((a, b)),
            t_cf: !t,
            a_cf: train_graph.has_edge(a as usize, b as usize),
        },
        None => CfEntry { query, t, label, matched: None, t_cf: t, a_cf: label },
    }
}

/// Counterfactual entries for every pair of `batch`, computed in parallel.
pub fn build_counterfactual_table(
    batch: &TrainBatch,
    emb: &Matrix,
    treatment: &TreatmentAssignment,
    cfg: &MatchConfig,
    train_graph: &Graph,
) -> Result<CounterfactualTable> {
    let n = emb.rows();
    for &(i, j) in &batch.pairs {
        for v in [i as usize, j as usize] {
            if v >= n {
                return Err(Error::Bounds { what: "nodes", index: v, len: n });
            }
        }
        if i == j {
            return Err(Error::Value(format!("query pair ({i}, {i}) is a self-loop")));
        }
    }
    if batch.is_empty() {
        return Ok(CounterfactualTable::default());
    }
    let matcher = Matcher::new(emb, treatment, cfg)?;
    let idx: Vec<usize> = (0..batch.len()).collect();
    let entries = par::map_slice(&idx, |&k| {
        find_counterfactual(&matcher, batch.pairs[k], batch.treatments[k], batch.labels[k], train_graph)
    });
    let table = CounterfactualTable { entries };
    info!(
        "counterfactual table: {} queries, {} matched ({:.1}% fallback)",
        table.len(),
        table.matched_count(),
        100.0 * table.fallback_fraction()
    );
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_embedding(xs: &[f64]) -> Matrix {
        Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn median_of_three_distances() {
        // Points 0, 1, 3 give distances {1, 2, 3}.
        let emb = line_embedding(&[0.0, 1.0, 3.0]);
        assert_eq!(gamma_from_percentile(&emb, 50.0, 0).unwrap(), 2.0);
        assert!(gamma_from_percentile(&line_embedding(&[1.0]), 50.0, 0).is_err());
        assert!(gamma_from_percentile(&emb, 100.0, 0).is_err());
    }

    #[test]
    fn identical_embeddings_give_zero_gamma() {
        let emb = line_embedding(&[2.0; 5]);
        assert_eq!(gamma_from_percentile(&emb, 30.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn unique_feasible_candidate() {
        let t = TreatmentAssignment::ClusterLabels { labels: vec![0, 0, 1, 1] };
        let emb = line_embedding(&[0.0, 0.1, 0.2, 0.3]);
        let g = Graph::from_edges(4, [(0, 1), (1, 3)]).unwrap();
        let cfg = MatchConfig { gamma: 0.06, gamma_pct: 50.0, seed: 0 };
        let m = Matcher::new(&emb, &t, &cfg).unwrap();
        // Among untreated pairs only (0,2) costs less than 2γ = 0.12.
        let e = find_counterfactual(&m, (0, 1), true, true, &g);
        assert_eq!(e.matched, Some((0, 2)));
        assert_eq!((e.t_cf, e.a_cf), (false, false));
    }

    #[test]
    fn uniform_treatment_falls_back() {
        let t = TreatmentAssignment::ClusterLabels { labels: vec![0; 4] };
        let emb = line_embedding(&[0.0, 1.0, 2.0, 3.0]);
        let g = Graph::from_edges(4, [(0, 1)]).unwrap();
        let cfg = MatchConfig { gamma: 100.0, gamma_pct: 50.0, seed: 0 };
        let m = Matcher::new(&emb, &t, &cfg).unwrap();
        let e = find_counterfactual(&m, (0, 1), true, true, &g);
        assert_eq!(e.matched, None);
        assert_eq!((e.t_cf, e.a_cf), (true, true));
    }

    #[test]
    fn csv_layout() {
        let table = CounterfactualTable {
            entries: vec![
                CfEntry { query: (0, 1), t: true, label: true, matched: Some((2, 3)), t_cf: false, a_cf: false },
                CfEntry { query: (1, 2), t: false, label: false, matched: None, t_cf: false, a_cf: false },
            ],
        };
        assert_eq!(
            table.to_csv(),
            "query_i,query_j,t,label,matched_a,matched_b,t_cf,a_cf\n0,1,1,1,2,3,0,0\n1,2,0,0,-1,-1,0,0\n"
        );
    }
}
