use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of `labels` under `sigmoid(logits)`, and its
/// gradient with respect to the logits.
pub fn bce_loss(logits: &[f64], labels: &[bool]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != labels.len() {
        return Err(Error::Shape(format!("{} logits for {} labels", logits.len(), labels.len())));
    }
    if logits.is_empty() {
        return Err(Error::Degenerate("cross-entropy over an empty batch".into()));
    }
    let m = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &y) in logits.iter().zip(labels) {
        let y = y as u8 as f64;
        loss += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
        grad.push((sigmoid(x) - y) / m);
    }
    Ok((loss / m, grad))
}

/// What the counterfactual side of the discrepancy term compares against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscMode {
    /// Representations of the matched pairs, `[z_a ⊙ z_b, T_ab]`.
    #[default]
    Operative,
    /// The query's own representation with the flipped treatment bit,
    /// `[z_i ⊙ z_j, T^CF]`. Its gradient reaches no parameter.
    Literal,
}

impl std::str::FromStr for DiscMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "operative" => Ok(DiscMode::Operative),
            "literal" => Ok(DiscMode::Literal),
            other => Err(Error::Config(format!("unknown discrepancy mode {other:?} (expected operative|literal)"))),
        }
    }
}

impl std::fmt::Display for DiscMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DiscMode::Operative => "operative",
            DiscMode::Literal => "literal",
        })
    }
}

/// `‖P − Q‖_F / √M` with gradients for both sides. Zero rows give zero loss.
pub fn disc_loss(p: &Matrix, q: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    if p.shape() != q.shape() {
        return Err(Error::Shape(format!("discrepancy between {:?} and {:?} matrices", p.shape(), q.shape())));
    }
    let (rows, cols) = p.shape();
    if rows == 0 {
        warn!("no matched pairs: discrepancy loss is 0");
        return Ok((0.0, Matrix::zeros(0, cols), Matrix::zeros(0, cols)));
    }
    let mut diff = p.clone();
    diff.axpy(-1.0, q)?;
    let norm = diff.frobenius_norm();
    let scale = (rows as f64).sqrt();
    let loss = norm / scale;
    if norm == 0.0 {
        return Ok((0.0, Matrix::zeros(rows, cols), Matrix::zeros(rows, cols)));
    }
    diff.scale(1.0 / (norm * scale));
    let mut dq = diff.clone();
    dq.scale(-1.0);
    Ok((loss, diff, dq))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_examples() {
        let (l, g) = bce_loss(&[0.0, 0.0, 0.0], &[true, false, true]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((g[0] + 0.5 / 3.0).abs() < 1e-15 && (g[1] - 0.5 / 3.0).abs() < 1e-15);
        let (l, _) = bce_loss(&[20.0], &[true]).unwrap();
        assert!((l - (-20f64).exp().ln_1p()).abs() < 1e-24);
        assert!((l - 2.061e-9).abs() < 1e-12);
        let (big, _) = bce_loss(&[-800.0], &[true]).unwrap();
        assert_eq!(big, 800.0);
        assert!(bce_loss(&[], &[]).is_err());
    }

    #[test]
    fn bce_permutation_invariant() {
        let x = [0.3, -1.2, 2.5, 0.0];
        let y = [true, false, false, true];
        let (a, _) = bce_loss(&x, &y).unwrap();
        let (b, _) = bce_loss(&[x[2], x[0], x[3], x[1]], &[y[2], y[0], y[3], y[1]]).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn disc_examples() {
        let p = Matrix::from_fn(4, 3, |r, c| (r + c) as f64);
        assert_eq!(disc_loss(&p, &p).unwrap().0, 0.0);
        let mut q = p.clone();
        q.set(2, 1, q.get(2, 1) + 0.3);
        let (l, dp, dq) = disc_loss(&p, &q).unwrap();
        assert!((l - 0.3 / 2.0).abs() < 1e-15);
        assert!((dp.get(2, 1) + 0.5).abs() < 1e-15);
        assert!((dq.get(2, 1) - 0.5).abs() < 1e-15);
        assert_eq!(disc_loss(&Matrix::zeros(0, 3), &Matrix::zeros(0, 3)).unwrap().0, 0.0);
    }
}
