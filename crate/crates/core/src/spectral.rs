//! Low end of the symmetric normalized Laplacian spectrum, shared by the
//! eigenmap embedding and spectral clustering.
//!
//! Disconnected graphs are regularized as `A + (r/N)·11ᵀ` before
//! normalization (with `r = DISCONNECTED_REGULARIZATION`). Without it every
//! connected component contributes a zero eigenvalue and the low spectrum
//! degenerates into component indicators.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{symmetric_eigen, Matrix};

pub const DISCONNECTED_REGULARIZATION: f64 = 1.0;

/// Eigenvalues closer than this are treated as one degenerate eigenspace.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// The `count` smallest eigenpairs of `I − D^{-1/2} W D^{-1/2}`.
///
/// Inside a degenerate eigenspace the basis is made canonical: standard
/// basis vectors `e_0, e_1, ..` are projected onto the space and
/// orthonormalized in index order, so vectors are ordered by the first
/// coordinate that generates them. Each vector is then sign-normalized so its
/// largest-magnitude entry is positive.
pub fn laplacian_eigenvectors(graph: &Graph, count: usize) -> Result<(Vec<f64>, Matrix)> {
    let n = graph.num_nodes();
    if count > n {
        return Err(Error::Config(format!("requested {count} eigenvectors of a {n}-node graph")));
    }
    let laplacian = normalized_laplacian(graph);
    let (values, vectors) = symmetric_eigen(&laplacian)?;

    let mut basis = Matrix::zeros(n, count);
    let mut start = 0;
    while start < count {
        let mut end = start + 1;
        while end < n && (values[end] - values[end - 1]).abs() < DEGENERACY_TOL {
            end += 1;
        }
        let group =
            if end - start > 1 { canonical_basis(&vectors, start, end)? } else { vec![column(&vectors, start)] };
        for (offset, mut v) in group.into_iter().enumerate() {
            let c = start + offset;
            if c >= count {
                break;
            }
            normalize_sign(&mut v);
            for (r, x) in v.into_iter().enumerate() {
                basis.set(r, c, x);
            }
        }
        start = end;
    }
    Ok((values[..count].to_vec(), basis))
}

/// Dense normalized Laplacian, regularized when the graph is disconnected.
pub fn normalized_laplacian(graph: &Graph) -> Matrix {
    let n = graph.num_nodes();
    let (components, _) = graph.connected_components();
    let reg = if components > 1 { DISCONNECTED_REGULARIZATION / n as f64 } else { 0.0 };
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| {
            let d = graph.degree(v) as f64 + reg * n as f64;
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        let row = l.row_mut(i);
        if reg > 0.0 {
            for (j, x) in row.iter_mut().enumerate() {
                *x = -reg * inv_sqrt[i] * inv_sqrt[j];
            }
        }
        for &j in graph.neighbors(i) {
            row[j as usize] -= inv_sqrt[i] * inv_sqrt[j as usize];
        }
        row[i] += 1.0;
    }
    l
}

fn column(m: &Matrix, c: usize) -> Vec<f64> {
    (0..m.rows()).map(|r| m.get(r, c)).collect()
}

fn canonical_basis(vectors: &Matrix, start: usize, end: usize) -> Result<Vec<Vec<f64>>> {
    let n = vectors.rows();
    let m = end - start;
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in 0..n {
        let coeffs: Vec<f64> = (start..end).map(|c| vectors.get(i, c)).collect();
        if coeffs.iter().map(|c| c * c).sum::<f64>() < 1e-20 {
            continue;
        }
        let mut v: Vec<f64> =
            (0..n).map(|r| (start..end).zip(&coeffs).map(|(c, k)| vectors.get(r, c) * k).sum()).collect();
        for _ in 0..2 {
            for u in &chosen {
                let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            chosen.push(v);
            if chosen.len() == m {
                return Ok(chosen);
            }
        }
    }
    Err(Error::Numeric(format!("could not build a canonical basis for a {m}-fold eigenspace")))
}

fn normalize_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
