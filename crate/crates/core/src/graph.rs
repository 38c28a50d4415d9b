//! Immutable undirected graph in CSR form, plus the text loaders.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};

/// Node pair. Edges are always stored with `.0 < .1`.
pub type Pair = (u32, u32);

/// Orders a pair so that the smaller index comes first.
#[inline]
pub fn canonical(i: u32, j: u32) -> Pair {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Undirected simple graph with dense `0..N` node indices and optional node
/// features.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Pair>,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    features: Option<Matrix>,
}

impl Graph {
    /// Builds a graph from arbitrary endpoint pairs: self-loops are dropped,
    /// duplicates and reversed duplicates collapse to a single edge.
    pub fn from_edges<I>(num_nodes: usize, pairs: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut edges = Vec::new();
        for (i, j) in pairs {
            for v in [i, j] {
                if v >= num_nodes {
                    return Err(Error::Bounds { what: "nodes", index: v, len: num_nodes });
                }
            }
            if i != j {
                edges.push(canonical(i as u32, j as u32));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self::from_canonical_edges(num_nodes, edges))
    }

    /// `edges` must already be sorted, deduplicated and canonical.
    fn from_canonical_edges(num_nodes: usize, edges: Vec<Pair>) -> Graph {
        let mut degree = vec![0usize; num_nodes];
        for &(i, j) in &edges {
            degree[i as usize] += 1;
            degree[j as usize] += 1;
        }
        let mut row_ptr = Vec::with_capacity(num_nodes + 1);
        row_ptr.push(0);
        for d in &degree {
            row_ptr.push(row_ptr.last().unwrap() + d);
        }
        let mut next = row_ptr.clone();
        let mut col_idx = vec![0u32; row_ptr[num_nodes]];
        for &(i, j) in &edges {
            col_idx[next[i as usize]] = j;
            next[i as usize] += 1;
            col_idx[next[j as usize]] = i;
            next[j as usize] += 1;
        }
        for v in 0..num_nodes {
            col_idx[row_ptr[v]..row_ptr[v + 1]].sort_unstable();
        }
        Graph { num_nodes, edges, row_ptr, col_idx, features: None }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Undirected edges, each once with `i < j`, sorted.
    #[inline]
    pub fn edges(&self) -> &[Pair] {
        &self.edges
    }

    /// Sorted neighbor list of `v`.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.row_ptr[v + 1] - self.row_ptr[v]
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    /// Unweighted adjacency matrix `A` as a sparse matrix.
    pub fn adjacency(&self) -> CsrMatrix {
        CsrMatrix {
            n_rows: self.num_nodes,
            n_cols: self.num_nodes,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: vec![1.0; self.col_idx.len()],
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        if i >= self.num_nodes || j >= self.num_nodes {
            return false;
        }
        let (a, b) = if self.degree(i) <= self.degree(j) { (i, j) } else { (j, i) };
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    pub fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.num_nodes {
            return Err(Error::Bounds { what: "nodes", index: v, len: self.num_nodes });
        }
        Ok(())
    }

    pub fn features(&self) -> Option<&Matrix> {
        self.features.as_ref()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.as_ref().map_or(0, Matrix::cols)
    }

    pub fn with_features(mut self, features: Matrix) -> Result<Graph> {
        if features.rows() != self.num_nodes {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows but the graph has {} nodes",
                features.rows(),
                self.num_nodes
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    /// Same node set and features, with the given edges removed.
    pub fn without_edges(&self, removed: &HashSet<Pair>) -> Graph {
        let kept: Vec<Pair> = self.edges.iter().copied().filter(|e| !removed.contains(e)).collect();
        let mut g = Self::from_canonical_edges(self.num_nodes, kept);
        g.features = self.features.clone();
        g
    }

    /// Connected-component label per node, numbered by smallest member.
    pub fn connected_components(&self) -> (usize, Vec<usize>) {
        let mut label = vec![usize::MAX; self.num_nodes];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..self.num_nodes {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &u in self.neighbors(v) {
                    if label[u as usize] == usize::MAX {
                        label[u as usize] = count;
                        stack.push(u as usize);
                    }
                }
            }
            count += 1;
        }
        (count, label)
    }

    /// Writes the edge list in the same text format `load_edge_list` reads.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let ctx = || format!("writing {}", path.display());
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(ctx(), e))?);
        for &(i, j) in &self.edges {
            writeln!(out, "{i} {j}").map_err(|e| Error::io(ctx(), e))?;
        }
        out.flush().map_err(|e| Error::io(ctx(), e))
    }
}

/// Reads a whitespace- or comma-separated `src dst` edge list with 0-based
/// indices. Blank lines and `#` comments are skipped. Without a hint the node
/// count is one past the largest index seen.
pub fn load_edge_list(path: &Path, num_nodes_hint: Option<usize>) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_edge_list(&text, path, num_nodes_hint)
}

pub(crate) fn parse_edge_list(text: &str, path: &Path, num_nodes_hint: Option<usize>) -> Result<Graph> {
    let mut pairs = Vec::new();
    let mut max_index = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, lineno + 1, format!("expected 2 fields, found {}", fields.len())));
        }
        let mut ends = [0usize; 2];
        for (slot, f) in ends.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| Error::parse(path, lineno + 1, format!("invalid node index {f:?}")))?;
            if let Some(n) = num_nodes_hint {
                if *slot >= n {
                    return Err(Error::Bounds { what: "declared nodes", index: *slot, len: n });
                }
            }
        }
        max_index = max_index.max(Some(ends[0].max(ends[1])));
        pairs.push((ends[0], ends[1]));
    }
    let n = num_nodes_hint.unwrap_or_else(|| max_index.map_or(0, |m| m + 1));
    Graph::from_edges(n, pairs)
}

/// Reads one whitespace-separated row of floats per node and attaches it as
/// the feature matrix.
pub fn load_features(path: &Path, graph: Graph) -> Result<Graph> {
    let matrix = load_dense_rows(path)?;
    if matrix.rows() != graph.num_nodes() {
        return Err(Error::Shape(format!(
            "{} has {} rows, expected {}",
            path.display(),
            matrix.rows(),
            graph.num_nodes()
        )));
    }
    graph.with_features(matrix)
}

/// Parses a text matrix, one row per non-empty line. Rows must all have the
/// column count of the first row.
pub(crate) fn load_dense_rows(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for f in line.split_whitespace() {
            let v: f64 = f.parse().map_err(|_| Error::parse(path, lineno + 1, format!("invalid number {f:?}")))?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Shape(format!(
                    "{}:{}: ragged row with {width} columns, expected {c}",
                    path.display(),
                    lineno + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data)
}
