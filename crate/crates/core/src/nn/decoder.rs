use crate::error::{Error, Result};
use crate::graph::Pair;
use crate::linalg::Matrix;

use super::Decoder;

/// Activations saved by [`decoder_forward`].
#[derive(Clone, Debug)]
pub struct DecoderCache {
    input: Matrix,
    pre: [Matrix; 2],
    act: [Matrix; 2],
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Rows `[z_i ⊙ z_j, t]`, one per pair.
pub fn pair_repr(z: &Matrix, pairs: &[Pair], treatments: &[bool]) -> Result<Matrix> {
    if pairs.len() != treatments.len() {
        return Err(Error::Shape(format!("{} pairs but {} treatments", pairs.len(), treatments.len())));
    }
    let h = z.cols();
    let mut out = Matrix::zeros(pairs.len(), h + 1);
    for (k, (&(i, j), &t)) in pairs.iter().zip(treatments).enumerate() {
        for v in [i, j] {
            if v as usize >= z.rows() {
                return Err(Error::Bounds { what: "nodes", index: v as usize, len: z.rows() });
            }
        }
        let row = out.row_mut(k);
        for ((o, a), b) in row.iter_mut().zip(z.row(i as usize)).zip(z.row(j as usize)) {
            *o = a * b;
        }
        row[h] = if t { 1.0 } else { 0.0 };
    }
    Ok(out)
}

/// Adds the gradient of the Hadamard columns of `d_repr` into `dz`.
pub fn pair_repr_backward(z: &Matrix, pairs: &[Pair], d_repr: &Matrix, dz: &mut Matrix) -> Result<()> {
    let h = z.cols();
    if d_repr.rows() != pairs.len() || d_repr.cols() != h + 1 || dz.shape() != z.shape() {
        return Err(Error::Shape("pair representation gradient does not match its pairs".into()));
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let (i, j) = (i as usize, j as usize);
        let g = &d_repr.row(k)[..h];
        for (c, &gc) in g.iter().enumerate() {
            let zi = z.get(i, c);
            let zj = z.get(j, c);
            dz.set(i, c, dz.get(i, c) + gc * zj);
            dz.set(j, c, dz.get(j, c) + gc * zi);
        }
    }
    Ok(())
}

fn add_bias(m: &mut Matrix, b: &Matrix) {
    for r in 0..m.rows() {
        m.row_mut(r).iter_mut().zip(b.data()).for_each(|(x, bias)| *x += bias);
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        out.data_mut().iter_mut().zip(m.row(r)).for_each(|(o, x)| *o += x);
    }
    out
}

/// Logits of the MLP decoder for every row of `repr`.
pub fn decoder_forward(dec: &Decoder, repr: &Matrix) -> Result<(Vec<f64>, DecoderCache)> {
    if repr.cols() != dec.input_dim() {
        return Err(Error::Shape(format!(
            "pair rows have {} columns, decoder expects {}",
            repr.cols(),
            dec.input_dim()
        )));
    }
    let mut h1 = repr.matmul(&dec.w[0])?;
    add_bias(&mut h1, &dec.b[0]);
    let a1 = h1.map(elu);
    let mut h2 = a1.matmul(&dec.w[1])?;
    add_bias(&mut h2, &dec.b[1]);
    let a2 = h2.map(elu);
    let mut out = a2.matmul(&dec.w[2])?;
    add_bias(&mut out, &dec.b[2]);
    let logits = out.into_vec();
    Ok((logits, DecoderCache { input: repr.clone(), pre: [h1, h2], act: [a1, a2] }))
}

/// Decoder gradients and `dL/d repr` given `dL/d logits`.
pub fn decoder_backward(dec: &Decoder, cache: &DecoderCache, d_logits: &[f64]) -> Result<(Decoder, Matrix)> {
    let m = cache.input.rows();
    if d_logits.len() != m || cache.input.cols() != dec.input_dim() {
        return Err(Error::State(format!(
            "decoder cache holds {m} rows of width {}, got {} upstream gradients for input width {}",
            cache.input.cols(),
            d_logits.len(),
            dec.input_dim()
        )));
    }
    let d_out = Matrix::from_vec(m, 1, d_logits.to_vec())?;
    let mut grads = dec.zeros_like();
    grads.w[2] = cache.act[1].t_matmul(&d_out)?;
    grads.b[2] = column_sums(&d_out);

    let mut d_h2 = d_out.matmul_t(&dec.w[2])?;
    d_h2.data_mut().iter_mut().zip(cache.pre[1].data()).for_each(|(g, &x)| *g *= elu_grad(x));
    grads.w[1] = cache.act[0].t_matmul(&d_h2)?;
    grads.b[1] = column_sums(&d_h2);

    let mut d_h1 = d_h2.matmul_t(&dec.w[1])?;
    d_h1.data_mut().iter_mut().zip(cache.pre[0].data()).for_each(|(g, &x)| *g *= elu_grad(x));
    grads.w[0] = cache.input.t_matmul(&d_h1)?;
    grads.b[0] = column_sums(&d_h1);

    let d_repr = d_h1.matmul_t(&dec.w[0])?;
    Ok((grads, d_repr))
}
