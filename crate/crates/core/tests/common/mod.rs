//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cflp::treatments::{PairScore, TreatmentAssignment};
use cflp::{Graph, Matrix, Pair};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi graph with edge probability `p`.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Cluster labels drawn uniformly from 2 to 6 values, or a random symmetric
/// score matrix thresholded at its median.
pub fn random_treatment(n: usize, seed: u64) -> TreatmentAssignment {
    let mut r = rng(seed);
    if r.gen_bool(0.5) {
        let k = r.gen_range(2..=6);
        TreatmentAssignment::ClusterLabels { labels: (0..n).map(|_| r.gen_range(0..k)).collect() }
    } else {
        let mut s = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = r.gen_range(0.0..1.0);
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        TreatmentAssignment::PairScoreThreshold { score: PairScore::Katz(s), threshold: 0.5 }
    }
}

/// Pair-score treatment where only a `fraction` of pairs is treated.
pub fn sparse_treatment(n: usize, fraction: f64, seed: u64) -> TreatmentAssignment {
    let mut r = rng(seed);
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = r.gen_range(0.0..1.0);
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    TreatmentAssignment::PairScoreThreshold { score: PairScore::Katz(s), threshold: 1.0 - fraction }
}

/// All pairwise Euclidean distances.
pub fn distance_table(emb: &Matrix) -> Vec<Vec<f64>> {
    let n = emb.rows();
    (0..n)
        .map(|a| {
            (0..n)
                .map(|b| emb.row(a).iter().zip(emb.row(b)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}

/// Exhaustive search over every ordered pair.
pub fn brute_force_match(
    dist: &[Vec<f64>],
    t: &TreatmentAssignment,
    gamma: f64,
    i: usize,
    j: usize,
    t_query: bool,
) -> Option<Pair> {
    let n = dist.len();
    let mut best: Option<(f64, usize, usize)> = None;
    for a in 0..n {
        for b in 0..n {
            if a == b || (a, b) == (i, j) || (a, b) == (j, i) || t.treat(a, b) == t_query {
                continue;
            }
            let s = dist[i][a] + dist[j][b];
            if s < 2.0 * gamma && best.is_none_or(|(bs, _, _)| s < bs) {
                best = Some((s, a, b));
            }
        }
    }
    best.map(|(_, a, b)| (a as u32, b as u32))
}

/// Hits@K by counting, for every positive, the negatives at or above it.
pub fn brute_hits(pos: &[f64], neg: &[f64], k: usize) -> f64 {
    let hit = pos.iter().filter(|&&p| neg.iter().filter(|&&n| n >= p).count() < k).count();
    hit as f64 / pos.len() as f64
}

pub fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut s = 0.0;
    for &p in pos {
        for &n in neg {
            s += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (pos.len() * neg.len()) as f64
}

/// Σ (R_k − R_{k−1}) P_k over distinct thresholds, descending.
pub fn brute_ap(pos: &[f64], neg: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = pos.iter().chain(neg).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for th in thresholds {
        let tp = pos.iter().filter(|&&p| p >= th).count() as f64;
        let fp = neg.iter().filter(|&&n| n >= th).count() as f64;
        let recall = tp / pos.len() as f64;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

/// Random score set with deliberate ties (scores quantized to a few levels).
pub fn random_scores(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let np = r.gen_range(1..40);
    let nn = r.gen_range(1..60);
    let levels = r.gen_range(2..30) as f64;
    let mut draw = |shift: f64| -> f64 { ((r.gen_range(0.0..1.0) + shift) * levels).floor() / levels };
    let pos = (0..np).map(|_| draw(0.2)).collect();
    let neg = (0..nn).map(|_| draw(0.0)).collect();
    (pos, neg)
}
