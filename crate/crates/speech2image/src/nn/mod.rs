//! Minimal neural-network substrate: layers with explicit forward/backward,
//! an Adam optimizer, and a parameter-visitor trait shared by every model.
//!
//! Everything runs in f64 so analytic gradients can be validated against
//! central finite differences at tight tolerances.

mod act;
mod adam;
mod conv1d;
mod conv2d;
mod gradcheck;
mod gru;
mod init;
mod linear;
mod norm;

pub use act::{LeakyRelu, Relu, Tanh};
pub use adam::Adam;
pub use conv1d::Conv1d;
pub use conv2d::Conv2d;
pub use gradcheck::max_rel_grad_error;
pub use gru::Gru;
pub use init::{kaiming_normal, uniform_init};
pub use linear::Dense;
pub use norm::BatchNorm;

use ndarray::{ArrayViewD, ArrayViewMutD};

/// Visitor over a model's trainable parameters (value, gradient) and
/// non-trainable state (e.g. normalization running statistics).
pub trait Params {
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<f64>, ArrayViewMutD<f64>));

    fn visit_state(&mut self, _f: &mut dyn FnMut(&str, ArrayViewMutD<f64>)) {}
}

pub fn zero_grads<M: Params + ?Sized>(model: &mut M) {
    model.visit_params(&mut |_, _, mut g| g.fill(0.0));
}

pub fn param_count<M: Params + ?Sized>(model: &mut M) -> usize {
    let mut n = 0;
    model.visit_params(&mut |_, v, _| n += v.len());
    n
}

/// FNV-1a hash over every parameter and state tensor, in visit order.
/// Used to audit that a frozen model really did not change.
pub fn param_hash<M: Params + ?Sized>(model: &mut M) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |v: ArrayViewD<f64>| {
        for &x in v.iter() {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    };
    model.visit_params(&mut |_, v, _| feed(v.view()));
    model.visit_state(&mut |_, v| feed(v.view()));
    h
}

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax of a 1-D logit vector.
pub fn softmax_1d(x: &ndarray::Array1<f64>) -> ndarray::Array1<f64> {
    let m = x.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut e = x.mapv(|v| (v - m).exp());
    let s = e.sum();
    e.mapv_inplace(|v| v / s);
    e
}

pub fn log_softmax_1d(x: &ndarray::Array1<f64>) -> ndarray::Array1<f64> {
    let m = x.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = x.mapv(|v| (v - m).exp()).sum().ln() + m;
    x.mapv(|v| v - lse)
}

/// Mean binary cross-entropy on logits against a constant target, together
/// with the gradient w.r.t. the logits.
pub fn bce_with_logits(logits: &ndarray::Array1<f64>, target: f64) -> (f64, ndarray::Array1<f64>) {
    let n = logits.len() as f64;
    let loss = logits
        .iter()
        .map(|&x| target * softplus(-x) + (1.0 - target) * softplus(x))
        .sum::<f64>()
        / n;
    let grad = logits.mapv(|x| (sigmoid(x) - target) / n);
    (loss, grad)
}

/// Mean squared error of logits against a constant target (least-squares
/// GAN objective), with gradient.
pub fn lsgan_loss(logits: &ndarray::Array1<f64>, target: f64) -> (f64, ndarray::Array1<f64>) {
    let n = logits.len() as f64;
    let loss = logits.iter().map(|&x| (x - target).powi(2)).sum::<f64>() / n;
    let grad = logits.mapv(|x| 2.0 * (x - target) / n);
    (loss, grad)
}

/// Mean cross-entropy of row logits against integer class labels, with the
/// gradient w.r.t. the logits. Rows of `logits` are samples.
pub fn cross_entropy_logits(
    logits: &ndarray::Array2<f64>,
    labels: &[usize],
) -> (f64, ndarray::Array2<f64>) {
    assert_eq!(logits.nrows(), labels.len());
    let b = logits.nrows() as f64;
    let mut grad = ndarray::Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i).to_owned();
        let ls = log_softmax_1d(&row);
        loss -= ls[y];
        let mut grow = ls.mapv(f64::exp);
        grow[y] -= 1.0;
        grad.row_mut(i).assign(&(&grow / b));
    }
    (loss / b, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softplus_stable_at_extremes() {
        assert!(softplus(800.0).is_finite());
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_matches_hand_value() {
        // logit 0 -> p = 0.5 -> loss ln 2 for either target
        let (l, g) = bce_with_logits(&array![0.0], 1.0);
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert!((g[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_uniform() {
        let logits = ndarray::Array2::zeros((2, 4));
        let (l, _) = cross_entropy_logits(&logits, &[0, 3]);
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = array![0.3, -1.0, 2.0];
        let b = a.mapv(|v| v + 5.0);
        let pa = softmax_1d(&a);
        let pb = softmax_1d(&b);
        for (x, y) in pa.iter().zip(pb.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
