//! Fixed node embeddings used only for counterfactual matching.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{load_dense_rows, Graph};
use crate::linalg::Matrix;
use crate::spectral::laplacian_eigenvectors;

pub const DEFAULT_EIGENMAP_DIM: usize = 64;

/// Where the matching embedding comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EmbedSource {
    Eigenmap(usize),
    File(String),
}

impl Default for EmbedSource {
    fn default() -> Self {
        EmbedSource::Eigenmap(DEFAULT_EIGENMAP_DIM)
    }
}

impl FromStr for EmbedSource {
    type Err = Error;

    /// Parses `eigenmap:<dim>`, a bare `eigenmap`, or `file:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "eigenmap" {
            return Ok(EmbedSource::default());
        }
        if let Some(dim) = s.strip_prefix("eigenmap:") {
            let dim = dim.parse().map_err(|_| Error::Config(format!("invalid eigenmap dimension {dim:?}")))?;
            return Ok(EmbedSource::Eigenmap(dim));
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(EmbedSource::File(path.to_string()));
        }
        Err(Error::Config(format!("unknown embedding source {s:?} (expected eigenmap:<dim> or file:<path>)")))
    }
}

impl std::fmt::Display for EmbedSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmbedSource::Eigenmap(d) => write!(f, "eigenmap:{d}"),
            EmbedSource::File(p) => write!(f, "file:{p}"),
        }
    }
}

/// Produces the embedding for `graph`, which must be the training graph.
pub fn embed(source: &EmbedSource, graph: &Graph) -> Result<Matrix> {
    match source {
        EmbedSource::Eigenmap(dim) => laplacian_eigenmap(graph, *dim),
        EmbedSource::File(path) => load_embeddings(Path::new(path), graph.num_nodes()),
    }
}

/// Rows of the Laplacian eigenvectors `2..=dim+1`, scaled to unit norm.
pub fn laplacian_eigenmap(graph: &Graph, dim: usize) -> Result<Matrix> {
    let n = graph.num_nodes();
    if dim == 0 || dim >= n {
        return Err(Error::Config(format!("eigenmap dimension {dim} must lie in 1..{n}")));
    }
    let (_, vectors) = laplacian_eigenvectors(graph, dim + 1)?;
    let mut out = Matrix::from_fn(n, dim, |r, c| vectors.get(r, c + 1));
    for r in 0..n {
        let row = out.row_mut(r);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    if !out.is_finite() {
        return Err(Error::Numeric("eigenmap produced non-finite entries".into()));
    }
    Ok(out)
}

/// Reads one row of floats per node, as written by [`write_embeddings`].
pub fn load_embeddings(path: &Path, num_nodes: usize) -> Result<Matrix> {
    let m = load_dense_rows(path)?;
    if m.rows() != num_nodes {
        return Err(Error::Shape(format!("{} has {} rows for {num_nodes} nodes", path.display(), m.rows())));
    }
    if let Some(pos) = m.data().iter().position(|x| !x.is_finite()) {
        return Err(Error::Value(format!(
            "{}: non-finite entry at row {}, column {}",
            path.display(),
            pos / m.cols() + 1,
            pos % m.cols() + 1
        )));
    }
    Ok(m)
}

/// Writes shortest round-trip decimal representations, so reloading is exact.
pub fn write_embeddings(path: &Path, m: &Matrix) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(ctx(), e))?);
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|x| format!("{x:?}")).collect();
        writeln!(out, "{}", line.join(" ")).map_err(|e| Error::io(ctx(), e))?;
    }
    out.flush().map_err(|e| Error::io(ctx(), e))
}
