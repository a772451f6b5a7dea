//! Loss functions returning `(loss, gradient)` pairs.

use crate::{Error, Real, Result};

/// Cross entropy of softmax(logits) against a hard label.
/// Gradient is `softmax - onehot`.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {} out of range {}",
            label,
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut grad: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let denom: T = grad.iter().fold(T::zero(), |a, &b| a + b);
    let loss = denom.ln() + max - logits[label];
    for g in grad.iter_mut() {
        *g /= denom;
    }
    grad[label] -= T::one();
    Ok((loss, grad))
}

/// Smooth L1 summed over elements:
/// `0.5 d^2` for `|d| < 1`, else `|d| - 0.5`, with `d = pred - target`.
pub fn smooth_l1<T: Real>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "smooth_l1 lengths {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    let half = T::from_f64(0.5);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let d = p - t;
        if d.abs() < T::one() {
            loss += half * d * d;
            grad.push(d);
        } else {
            loss += d.abs() - half;
            grad.push(if d > T::zero() { T::one() } else { -T::one() });
        }
    }
    Ok((loss, grad))
}
