//! Minimal neural network kit: tensors, layers, losses, SGD, RNG, and a
//! finite-difference gradient checker. Everything is single threaded and
//! deterministic given a seed.

mod fdcheck;
mod layers;
mod loss;
mod optim;
mod rng;
mod tensor;

pub use fdcheck::{coord_eps, fd_check, fd_check_at, rel_err, smooth_eps};
pub use layers::{
    relu_backward, relu_forward, sigmoid, sigmoid_backward, sigmoid_forward, Conv2d, Linear,
    Parameter,
};
pub use loss::{smooth_l1, softmax_cross_entropy};
pub use optim::{sgd_step, sgd_step_all};
pub use rng::Rng;
pub use tensor::Tensor;
