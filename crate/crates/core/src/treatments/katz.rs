use log::warn;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;

use super::{PairScore, TreatmentAssignment};

/// Fraction of `1/λ_max` used when no decay is given.
pub const DEFAULT_BETA_FACTOR: f64 = 0.5 * 0.85;

const POWER_ITERS: usize = 10_000;
const MAX_SERIES_TERMS: usize = 100_000;

/// Largest adjacency eigenvalue by power iteration on `A + I`, which keeps
/// bipartite graphs from oscillating.
pub fn spectral_radius_estimate(graph: &Graph) -> f64 {
    let n = graph.num_nodes();
    if graph.num_edges() == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERS {
        let mut y: Vec<f64> =
            (0..n).map(|v| x[v] + graph.neighbors(v).iter().map(|&u| x[u as usize]).sum::<f64>()).collect();
        let rayleigh: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
        let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        y.iter_mut().for_each(|a| *a /= norm);
        x = y;
        if (rayleigh - lambda).abs() < 1e-12 * rayleigh.abs().max(1.0) {
            lambda = rayleigh;
            break;
        }
        lambda = rayleigh;
    }
    lambda - 1.0
}

/// `K = Σ_{l≥1} β^l A^l`, summed until the Frobenius norm of the newest
/// term drops below `tol`.
pub fn katz_matrix(graph: &Graph, beta: f64, tol: f64) -> Result<Matrix> {
    if !(beta > 0.0 && beta.is_finite()) || tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!("katz needs beta > 0 and tol > 0, got beta={beta}, tol={tol}")));
    }
    let lambda = spectral_radius_estimate(graph);
    if beta * lambda >= 1.0 {
        return Err(Error::Divergence(format!("katz series diverges: beta {beta} * spectral radius {lambda:.6} >= 1")));
    }
    let a = graph.adjacency();
    let mut term = a.to_dense();
    term.scale(beta);
    let mut k = term.clone();
    for _ in 0..MAX_SERIES_TERMS {
        if term.frobenius_norm() < tol {
            symmetrize(&mut k);
            return Ok(k);
        }
        term = a.spmm(&term)?;
        term.scale(beta);
        k.add_assign(&term)?;
    }
    Err(Error::Divergence(format!("katz series did not reach tolerance {tol} in {MAX_SERIES_TERMS} terms")))
}

/// Averages `K` with its transpose to cancel summation-order asymmetry.
fn symmetrize(k: &mut Matrix) {
    let n = k.rows();
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (k.get(i, j) + k.get(j, i));
            k.set(i, j, m);
            k.set(j, i, m);
        }
    }
}

/// Treated iff `K_ij` is at least twice the mean off-diagonal Katz index.
pub fn katz_treatment(graph: &Graph, beta: Option<f64>, tol: f64) -> Result<TreatmentAssignment> {
    let n = graph.num_nodes();
    if graph.num_edges() == 0 {
        warn!("katz treatment on an edgeless graph: every pair is treated");
        return Ok(TreatmentAssignment::PairScoreThreshold {
            score: PairScore::Katz(Matrix::zeros(n, n)),
            threshold: 0.0,
        });
    }
    let beta = match beta {
        Some(b) => b,
        None => DEFAULT_BETA_FACTOR / spectral_radius_estimate(graph),
    };
    let k = katz_matrix(graph, beta, tol)?;
    let off_diag: f64 = k.data().iter().sum::<f64>() - (0..n).map(|i| k.get(i, i)).sum::<f64>();
    let pairs = (n * (n - 1)) as f64;
    let threshold = 2.0 * off_diag / pairs;
    Ok(TreatmentAssignment::PairScoreThreshold { score: PairScore::Katz(k), threshold })
}
