use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{Arch, GraphOps, ModelParams, ENCODER_LAYERS};

/// Activations saved by [`encoder_forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct EncoderCache {
    arch: Arch,
    /// Post-ReLU outputs of the first two layers (inputs of layers 1 and 2).
    hidden: Vec<Matrix>,
    /// Neighbor means `M · H_l` for each SAGE layer input; empty otherwise.
    means: Vec<Matrix>,
}

fn relu_in_place(m: &mut Matrix) {
    m.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Copies rows `start..end` of `m`.
fn row_block(m: &Matrix, start: usize, end: usize) -> Matrix {
    Matrix::from_vec(end - start, m.cols(), m.data()[start * m.cols()..end * m.cols()].to_vec()).expect("row block")
}

fn stack_rows(top: Matrix, bottom: Matrix) -> Matrix {
    let (rows, cols) = (top.rows() + bottom.rows(), top.cols());
    let mut data = top.into_vec();
    data.extend(bottom.into_vec());
    Matrix::from_vec(rows, cols, data).expect("stacked rows")
}

/// Three propagation layers with ReLU between them and none after the last.
/// GCN layers compute `Â H W`; SAGE layers `[H, M H] W`; JKNet averages the
/// three GCN layer outputs.
pub fn encoder_forward(params: &ModelParams, ops: &GraphOps, x: &Matrix) -> Result<(Matrix, EncoderCache)> {
    if params.encoder.len() != ENCODER_LAYERS {
        return Err(Error::Shape(format!("expected {ENCODER_LAYERS} encoder layers, found {}", params.encoder.len())));
    }
    if x.rows() != ops.num_nodes() {
        return Err(Error::Shape(format!("{} feature rows for a {}-node graph", x.rows(), ops.num_nodes())));
    }
    if x.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "features have {} columns, encoder expects {}",
            x.cols(),
            params.input_dim()
        )));
    }
    let mut cache = EncoderCache { arch: params.arch, hidden: Vec::with_capacity(2), means: Vec::new() };
    let mut out = None;
    for (l, w) in params.encoder.iter().enumerate() {
        let h = if l == 0 { x } else { &cache.hidden[l - 1] };
        let mut pre = match params.arch {
            Arch::Gcn | Arch::JkNet => ops.a_hat.spmm(&h.matmul(w)?)?,
            Arch::Sage => {
                let width = h.cols();
                let mh = ops.a_mean.spmm(h)?;
                let mut pre = h.matmul(&row_block(w, 0, width))?;
                pre.add_assign(&mh.matmul(&row_block(w, width, 2 * width))?)?;
                cache.means.push(mh);
                pre
            }
        };
        if l + 1 < ENCODER_LAYERS {
            relu_in_place(&mut pre);
            cache.hidden.push(pre);
        } else {
            out = Some(pre);
        }
    }
    let mut z = out.expect("three layers");
    if params.arch == Arch::JkNet {
        for h in &cache.hidden {
            z.add_assign(h)?;
        }
        z.scale(1.0 / ENCODER_LAYERS as f64);
    }
    if !z.is_finite() {
        return Err(Error::Numeric("encoder produced non-finite representations".into()));
    }
    Ok((z, cache))
}

/// Gradients of the encoder weights given `dL/dZ`.
pub fn encoder_backward(
    params: &ModelParams,
    ops: &GraphOps,
    x: &Matrix,
    cache: &EncoderCache,
    dz: &Matrix,
) -> Result<Vec<Matrix>> {
    let expected_means = if params.arch == Arch::Sage { ENCODER_LAYERS } else { 0 };
    if cache.arch != params.arch || cache.hidden.len() != ENCODER_LAYERS - 1 || cache.means.len() != expected_means {
        return Err(Error::State("encoder cache does not belong to these parameters".into()));
    }
    let jk = params.arch == Arch::JkNet;
    let share = 1.0 / ENCODER_LAYERS as f64;
    let mut grads: Vec<Matrix> = Vec::with_capacity(ENCODER_LAYERS);
    let mut upstream = dz.clone();
    if jk {
        upstream.scale(share);
    }
    for l in (0..ENCODER_LAYERS).rev() {
        let w = &params.encoder[l];
        let h = if l == 0 { x } else { &cache.hidden[l - 1] };
        let mut d_pre = upstream;
        if l + 1 < ENCODER_LAYERS {
            let out = &cache.hidden[l];
            d_pre.data_mut().iter_mut().zip(out.data()).for_each(|(g, &o)| {
                if o <= 0.0 {
                    *g = 0.0;
                }
            });
        }
        let d_h = match params.arch {
            Arch::Gcn | Arch::JkNet => {
                // Â is symmetric, so Âᵀ G = Â G.
                let d_hw = ops.a_hat.spmm(&d_pre)?;
                grads.push(h.t_matmul(&d_hw)?);
                (l > 0).then(|| d_hw.matmul_t(w)).transpose()?
            }
            Arch::Sage => {
                let width = h.cols();
                let mh = &cache.means[l];
                grads.push(stack_rows(h.t_matmul(&d_pre)?, mh.t_matmul(&d_pre)?));
                if l > 0 {
                    let mut d_h = d_pre.matmul_t(&row_block(w, 0, width))?;
                    d_h.add_assign(&ops.a_mean_t.spmm(&d_pre.matmul_t(&row_block(w, width, 2 * width))?)?)?;
                    Some(d_h)
                } else {
                    None
                }
            }
        };
        upstream = match d_h {
            Some(mut d_h) => {
                if jk {
                    d_h.axpy(share, dz)?;
                }
                d_h
            }
            None => Matrix::zeros(0, 0),
        };
    }
    grads.reverse();
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn ones_features(n: usize, f: usize) -> Matrix {
        Matrix::from_fn(n, f, |r, c| ((r + 2 * c) % 3) as f64)
    }

    #[test]
    fn isolated_node_identity_layer() {
        let g = Graph::from_edges(1, []).unwrap();
        let ops = GraphOps::new(&g);
        let mut p = ModelParams::init(Arch::Gcn, 3, 3, 3, 0).unwrap();
        p.encoder.iter_mut().for_each(|w| *w = Matrix::identity(3));
        let x = Matrix::from_vec(1, 3, vec![0.5, 2.0, 0.0]).unwrap();
        let (z, _) = encoder_forward(&p, &ops, &x).unwrap();
        assert_eq!(z, x);
    }

    #[test]
    fn zero_features_give_zero_representations() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let ops = GraphOps::new(&g);
        for arch in [Arch::Gcn, Arch::Sage, Arch::JkNet] {
            let p = ModelParams::init(arch, 3, 4, 4, 7).unwrap();
            let (z, _) = encoder_forward(&p, &ops, &Matrix::zeros(4, 3)).unwrap();
            assert!(z.data().iter().all(|&v| v == 0.0), "{arch}");
        }
    }

    #[test]
    fn jknet_of_equal_layers_is_that_layer() {
        // With identity weights on a single isolated node, every layer
        // outputs the (non-negative) input, so the mean is the input too.
        let g = Graph::from_edges(1, []).unwrap();
        let ops = GraphOps::new(&g);
        let mut p = ModelParams::init(Arch::JkNet, 2, 2, 2, 0).unwrap();
        p.encoder.iter_mut().for_each(|w| *w = Matrix::identity(2));
        let x = Matrix::from_vec(1, 2, vec![1.5, 0.25]).unwrap();
        let (z, _) = encoder_forward(&p, &ops, &x).unwrap();
        assert!(z.data().iter().zip(x.data()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let ops = GraphOps::new(&g);
        let p = ModelParams::init(Arch::Gcn, 4, 4, 4, 0).unwrap();
        assert!(matches!(encoder_forward(&p, &ops, &ones_features(3, 5)), Err(Error::Shape(_))));
        assert!(matches!(encoder_forward(&p, &ops, &ones_features(2, 4)), Err(Error::Shape(_))));
    }

    #[test]
    fn foreign_cache_is_state_error() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let ops = GraphOps::new(&g);
        let x = ones_features(3, 4);
        let gcn = ModelParams::init(Arch::Gcn, 4, 4, 4, 0).unwrap();
        let sage = ModelParams::init(Arch::Sage, 4, 4, 4, 0).unwrap();
        let (z, cache) = encoder_forward(&gcn, &ops, &x).unwrap();
        assert!(matches!(encoder_backward(&sage, &ops, &x, &cache, &z), Err(Error::State(_))));
    }
}
