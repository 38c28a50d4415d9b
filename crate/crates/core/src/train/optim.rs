use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub const CYCLE_MIN_LR: f64 = 1e-4;
pub const CYCLE_UP: usize = 50;
pub const CYCLE_DOWN: usize = 20;

/// Cyclical schedule with period 70: epochs 0..=49 ramp linearly from `1e-4`
/// to `base_lr`, epochs 50..=69 anneal linearly back to `1e-4`.
pub fn cyclical_lr(epoch: usize, base_lr: f64) -> f64 {
    let p = epoch % (CYCLE_UP + CYCLE_DOWN);
    let peak = CYCLE_UP - 1;
    let frac = if p <= peak { p as f64 / peak as f64 } else { 1.0 - (p - peak) as f64 / CYCLE_DOWN as f64 };
    CYCLE_MIN_LR + (base_lr - CYCLE_MIN_LR) * frac
}

/// Adam with bias correction over an ordered list of parameter blocks.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

impl Adam {
    pub fn new<'a>(blocks: impl IntoIterator<Item = &'a Matrix>) -> Adam {
        let m: Vec<Matrix> = blocks.into_iter().map(|b| Matrix::zeros(b.rows(), b.cols())).collect();
        Adam { v: m.clone(), m, t: 0 }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update. Gradients are checked for finiteness before any block
    /// changes, so a failed step leaves parameters and moments untouched.
    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[(String, &Matrix)], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} blocks, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((name, g), m) in grads.iter().zip(&self.m) {
            if g.shape() != m.shape() {
                return Err(Error::Shape(format!("gradient {name} is {:?}, expected {:?}", g.shape(), m.shape())));
            }
            if !g.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in {name}")));
            }
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, (_, g)), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut());
            for (((w, &g), m), v) in it {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_points() {
        assert_eq!(cyclical_lr(0, 0.01), 1e-4);
        assert!((cyclical_lr(49, 0.01) - 0.01).abs() < 1e-15);
        assert!((cyclical_lr(59, 0.01) - (1e-4 + 0.0099 * 0.5)).abs() < 1e-15);
        assert!((cyclical_lr(69, 0.01) - 1e-4).abs() < 1e-15);
        assert!(cyclical_lr(50, 0.01) < cyclical_lr(49, 0.01));
        assert_eq!(cyclical_lr(70, 0.01), cyclical_lr(0, 0.01));
        assert_eq!(cyclical_lr(123, 0.05), cyclical_lr(53, 0.05));
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut w = Matrix::from_fn(2, 2, |r, c| (r + c) as f64);
        let before = w.clone();
        let g = Matrix::zeros(2, 2);
        let mut adam = Adam::new([&w]);
        adam.step(vec![&mut w], &[("w".into(), &g)], 0.1).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut w = Matrix::zeros(1, 3);
        let g = Matrix::from_vec(1, 3, vec![2.0, -0.5, 1e-3]).unwrap();
        let mut adam = Adam::new([&w]);
        adam.step(vec![&mut w], &[("w".into(), &g)], 0.01).unwrap();
        for (x, s) in w.data().iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - 0.01 * s).abs() < 1e-7, "{x}");
        }
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut w = Matrix::zeros(1, 1);
        let g = Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap();
        let mut adam = Adam::new([&w]);
        let err = adam.step(vec![&mut w], &[("enc.w1".into(), &g)], 0.01).unwrap_err();
        assert!(err.to_string().contains("enc.w1"));
        assert_eq!(adam.steps(), 0);
    }
}
