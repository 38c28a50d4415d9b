use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::spectral::laplacian_eigenvectors;

use super::TreatmentAssignment;

pub const KMEANS_MAX_ITERS: usize = 100;

/// Spectral clustering: rows of the first `k` Laplacian eigenvectors,
/// normalized to unit length, clustered with seeded k-means.
pub fn spectral_treatment(graph: &Graph, k: usize, seed: u64) -> Result<TreatmentAssignment> {
    if graph.num_edges() == 0 {
        return Err(Error::Degenerate("spectral clustering needs at least one edge".into()));
    }
    if k == 0 || k > graph.num_nodes() {
        return Err(Error::Config(format!("cluster count {k} must lie in 1..={}", graph.num_nodes())));
    }
    let (_, mut vectors) = laplacian_eigenvectors(graph, k)?;
    for r in 0..vectors.rows() {
        let row = vectors.row_mut(r);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    let labels = kmeans(&vectors, k, seed, KMEANS_MAX_ITERS)?;
    Ok(TreatmentAssignment::ClusterLabels { labels })
}

/// Lloyd's k-means with k-means++ initialization. Points are assigned to
/// the nearest centroid, ties going to the lower index; an empty cluster
/// keeps its previous centroid.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iters: usize) -> Result<Vec<u32>> {
    let (n, d) = points.shape();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k-means with k = {k} on {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    let mut centroids = Matrix::zeros(k, d);
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            while nearest[chosen] == 0.0 {
                chosen -= 1;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(sq(points.row(i), centroids.row(c)));
        }
    }

    let mut assign = vec![u32::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dist = sq(points.row(i), centroids.row(c));
                if dist < best_d {
                    best = c as u32;
                    best_d = dist;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a as usize] += 1;
            sums.row_mut(a as usize).iter_mut().zip(points.row(i)).for_each(|(s, x)| *s += x);
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                centroids.row_mut(c).iter_mut().zip(sums.row(c)).for_each(|(m, s)| *m = s * inv);
            }
        }
    }
    Ok(assign)
}
