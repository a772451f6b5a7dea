//! Plain SGD with classical momentum.

use super::layers::Parameter;
use crate::Real;

/// One update step:
/// `v <- momentum * v + grad; value <- value - lr * v; grad <- 0`.
pub fn sgd_step<T: Real>(param: &mut Parameter<T>, lr: T, momentum: T) {
    let value = param.value.data_mut();
    let grad = param.grad.data_mut();
    let vel = param.momentum.data_mut();
    for i in 0..value.len() {
        vel[i] = momentum * vel[i] + grad[i];
        value[i] -= lr * vel[i];
        grad[i] = T::zero();
    }
}

/// Applies [`sgd_step`] to every parameter in the slice.
pub fn sgd_step_all<T: Real>(params: &mut [&mut Parameter<T>], lr: T, momentum: T) {
    for p in params.iter_mut() {
        sgd_step(p, lr, momentum);
    }
}
