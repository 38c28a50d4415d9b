//! Graph encoders, the pair decoder and their hand-written gradients.

mod checkpoint;
mod decoder;
mod encoder;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{CsrMatrix, Matrix};

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use decoder::{decoder_backward, decoder_forward, pair_repr, pair_repr_backward, DecoderCache};
pub use encoder::{encoder_backward, encoder_forward, EncoderCache};

pub const ENCODER_LAYERS: usize = 3;
pub const DECODER_HIDDEN: usize = 64;

const ENCODER_STREAM: u64 = 0;
const DECODER_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Sage,
    JkNet,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Sage => "sage",
            Arch::JkNet => "jknet",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "sage" => Ok(Arch::Sage),
            "jknet" => Ok(Arch::JkNet),
            other => Err(Error::Config(format!("unknown architecture {other:?} (expected gcn|sage|jknet)"))),
        }
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` in CSR form.
pub fn normalize_adjacency(graph: &Graph) -> CsrMatrix {
    let n = graph.num_nodes();
    let scale: Vec<f64> = (0..n).map(|v| 1.0 / ((graph.degree(v) + 1) as f64).sqrt()).collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(graph.col_idx().len() + n);
    let mut values = Vec::with_capacity(graph.col_idx().len() + n);
    row_ptr.push(0);
    for v in 0..n {
        let mut self_done = false;
        for &u in graph.neighbors(v) {
            if !self_done && u as usize > v {
                col_idx.push(v as u32);
                values.push(scale[v] * scale[v]);
                self_done = true;
            }
            col_idx.push(u);
            values.push(scale[v] * scale[u as usize]);
        }
        if !self_done {
            col_idx.push(v as u32);
            values.push(scale[v] * scale[v]);
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix { n_rows: n, n_cols: n, row_ptr, col_idx, values }
}

/// Row-normalized adjacency: row `v` averages the neighbors of `v`
/// (isolated nodes aggregate to zero).
pub fn mean_adjacency(graph: &Graph) -> CsrMatrix {
    let n = graph.num_nodes();
    let values = (0..n)
        .flat_map(|v| {
            let d = graph.degree(v);
            std::iter::repeat_n(1.0 / d as f64, d)
        })
        .collect();
    CsrMatrix { n_rows: n, n_cols: n, row_ptr: graph.row_ptr().to_vec(), col_idx: graph.col_idx().to_vec(), values }
}

/// Propagation operators of one graph, built once and reused every epoch.
#[derive(Clone, Debug)]
pub struct GraphOps {
    pub a_hat: CsrMatrix,
    pub a_mean: CsrMatrix,
    pub a_mean_t: CsrMatrix,
}

impl GraphOps {
    pub fn new(graph: &Graph) -> GraphOps {
        let a_mean = mean_adjacency(graph);
        GraphOps { a_hat: normalize_adjacency(graph), a_mean_t: a_mean.transpose(), a_mean }
    }

    pub fn num_nodes(&self) -> usize {
        self.a_hat.n_rows
    }
}

/// Decoder MLP `(H+1) → 64 → 64 → 1` with ELU activations. Biases are
/// stored as `1 × out` matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub w: [Matrix; 3],
    pub b: [Matrix; 3],
}

impl Decoder {
    pub fn init(repr_dim: usize, seed: u64) -> Decoder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(DECODER_STREAM);
        let dims = [(repr_dim + 1, DECODER_HIDDEN), (DECODER_HIDDEN, DECODER_HIDDEN), (DECODER_HIDDEN, 1)];
        Decoder { w: dims.map(|(i, o)| glorot(i, o, &mut rng)), b: dims.map(|(_, o)| Matrix::zeros(1, o)) }
    }

    pub fn zeros_like(&self) -> Decoder {
        Decoder {
            w: std::array::from_fn(|k| Matrix::zeros(self.w[k].rows(), self.w[k].cols())),
            b: std::array::from_fn(|k| Matrix::zeros(1, self.b[k].cols())),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].rows()
    }

    pub fn named_blocks(&self) -> Vec<(String, &Matrix)> {
        (0..3).flat_map(|k| [(format!("dec.w{k}"), &self.w[k]), (format!("dec.b{k}"), &self.b[k])]).collect()
    }

    pub fn blocks_ref(&self) -> Vec<&Matrix> {
        self.w.iter().zip(&self.b).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let Decoder { w, b } = self;
        w.iter_mut().zip(b.iter_mut()).flat_map(|(w, b)| [w, b]).collect()
    }
}

/// Encoder weights (no biases) plus the decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Arch,
    pub encoder: Vec<Matrix>,
    pub decoder: Decoder,
}

impl ModelParams {
    /// Glorot-uniform weights. Encoder and decoder draw from separate streams
    /// of the same seed, so re-initializing the decoder alone reproduces the
    /// original decoder draw.
    pub fn init(arch: Arch, in_dim: usize, hidden: usize, repr_dim: usize, seed: u64) -> Result<ModelParams> {
        if in_dim == 0 || hidden == 0 || repr_dim == 0 {
            return Err(Error::Config(format!(
                "layer widths must be positive (input {in_dim}, hidden {hidden}, representation {repr_dim})"
            )));
        }
        if arch == Arch::JkNet && hidden != repr_dim {
            return Err(Error::Config(format!(
                "jknet averages layer outputs, so hidden ({hidden}) must equal representation width ({repr_dim})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ENCODER_STREAM);
        let widths = [in_dim, hidden, hidden, repr_dim];
        let fan = if arch == Arch::Sage { 2 } else { 1 };
        let encoder = (0..ENCODER_LAYERS).map(|l| glorot(fan * widths[l], widths[l + 1], &mut rng)).collect();
        Ok(ModelParams { arch, encoder, decoder: Decoder::init(repr_dim, seed) })
    }

    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            arch: self.arch,
            encoder: self.encoder.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            decoder: self.decoder.zeros_like(),
        }
    }

    pub fn repr_dim(&self) -> usize {
        self.encoder.last().map_or(0, |w| w.cols())
    }

    /// Feature width expected by the first layer.
    pub fn input_dim(&self) -> usize {
        let rows = self.encoder.first().map_or(0, |w| w.rows());
        if self.arch == Arch::Sage {
            rows / 2
        } else {
            rows
        }
    }

    pub fn named_blocks(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> =
            self.encoder.iter().enumerate().map(|(l, w)| (format!("enc.w{l}"), w)).collect();
        out.extend(self.decoder.named_blocks());
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.encoder.iter_mut().collect();
        out.extend(self.decoder.blocks_mut());
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named_blocks().iter().map(|(_, m)| m.data().len()).sum()
    }
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-s..s)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("glorot shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_adjacency_examples() {
        let single = normalize_adjacency(&Graph::from_edges(1, []).unwrap());
        assert_eq!(single.to_dense().data(), &[1.0]);

        let pair = normalize_adjacency(&Graph::from_edges(2, [(0, 1)]).unwrap());
        assert!(pair.to_dense().data().iter().all(|&x| (x - 0.5).abs() < 1e-15));

        // 3-regular: every entry 1/4 and rows sum to one.
        let k4 = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let a = normalize_adjacency(&k4).to_dense();
        for r in 0..4 {
            assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(a.row(r).iter().all(|&x| (x - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn csr_columns_sorted_with_self_loop() {
        let g = Graph::from_edges(4, [(0, 2), (1, 2), (2, 3)]).unwrap();
        let a = normalize_adjacency(&g);
        let (cols, _) = a.row(2);
        assert_eq!(cols, &[0, 1, 2, 3]);
    }

    #[test]
    fn mean_adjacency_rows() {
        let g = Graph::from_edges(4, [(0, 1), (0, 2)]).unwrap();
        let m = mean_adjacency(&g).to_dense();
        assert_eq!(m.row(0), &[0.0, 0.5, 0.5, 0.0]);
        assert_eq!(m.row(3), &[0.0; 4]);
    }

    #[test]
    fn init_shapes_and_determinism() {
        let p = ModelParams::init(Arch::Sage, 5, 8, 4, 1).unwrap();
        assert_eq!(p.encoder[0].shape(), (10, 8));
        assert_eq!(p.encoder[2].shape(), (16, 4));
        assert_eq!(p.decoder.w[0].shape(), (5, DECODER_HIDDEN));
        assert_eq!(p.input_dim(), 5);
        assert_eq!(p, ModelParams::init(Arch::Sage, 5, 8, 4, 1).unwrap());
        assert_ne!(p, ModelParams::init(Arch::Sage, 5, 8, 4, 2).unwrap());
        assert_eq!(p.decoder, Decoder::init(4, 1));
        assert!(ModelParams::init(Arch::JkNet, 5, 8, 4, 1).is_err());
        let bound = (6.0f64 / 13.0).sqrt();
        assert!(ModelParams::init(Arch::Gcn, 5, 8, 8, 0).unwrap().encoder[0].data().iter().all(|x| x.abs() < bound));
    }
}
