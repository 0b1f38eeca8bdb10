//! Count and motor objectives.

use crate::error::{EclError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Numerically stable softmax.
pub fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<S> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of `softmax(logits)` against a 1-based class label.
/// Returns the loss and `softmax(logits) - onehot(label)`.
pub fn softmax_cross_entropy<S: Scalar>(logits: &[S], label: usize) -> Result<(S, Vec<S>)> {
    let classes = logits.len();
    if label == 0 || label > classes {
        return Err(EclError::Label { label, classes });
    }
    let max = logits.iter().fold(S::neg_infinity(), |m, &v| m.max(v));
    let log_total = logits.iter().map(|&v| (v - max).exp()).sum::<S>().ln() + max;
    let loss = log_total - logits[label - 1];
    let mut grad = softmax(logits);
    grad[label - 1] -= S::one();
    Ok((loss, grad))
}

/// Mean over valid timesteps of the squared Euclidean error between `T x 2`
/// predicted and target joint streams. Returns the loss and its gradient
/// with respect to `pred` (zero on masked steps).
pub fn mse_motor_loss<S: Scalar>(
    pred: &Tensor<S>,
    target: &Tensor<S>,
    valid: &[bool],
) -> Result<(S, Tensor<S>)> {
    if pred.shape() != target.shape() || pred.shape().len() != 2 || pred.dim(0) != valid.len() {
        return Err(EclError::Dimension(format!(
            "motor loss: pred {:?}, target {:?}, mask {}",
            pred.shape(),
            target.shape(),
            valid.len()
        )));
    }
    let n_valid = valid.iter().filter(|&&v| v).count();
    if n_valid == 0 {
        return Err(EclError::EmptySequence("motor loss over fully masked sequence"));
    }
    let width = pred.dim(1);
    let inv = S::one() / S::lit(n_valid as f64);
    let two = S::lit(2.0);
    let mut grad = Tensor::zeros(pred.shape());
    let mut total = S::zero();
    for (t, &ok) in valid.iter().enumerate() {
        if !ok {
            continue;
        }
        for j in 0..width {
            let k = t * width + j;
            let d = pred.data()[k] - target.data()[k];
            total += d * d;
            grad.data_mut()[k] = two * d * inv;
        }
    }
    Ok((total * inv, grad))
}

/// `L = L_count + lambda * L_motor`.
#[inline]
pub fn combined_loss<S: Scalar>(count: S, motor: S, lambda: S) -> S {
    count + lambda * motor
}
