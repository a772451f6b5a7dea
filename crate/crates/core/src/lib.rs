//! Differentiable regionlet feature extraction.
//!
//! The crate builds up, layer by layer, a feature extractor that selects
//! sub-regions of a feature map with learned projective transforms, samples
//! them bilinearly, gates the samples, and pools them into a fixed-length
//! descriptor. Every stage has a hand-derived backward pass, so the region
//! selection itself is trainable by gradient descent.
//!
//! * [`geometry`]: transform algebra and sampling-grid generation.
//! * [`sampler`]: bilinear sampling with gradients for both the feature map
//!   and the eight free transform parameters.
//! * [`regionlet`]: transform-predicting heads, sigmoid gating, pooling, and
//!   the combined extract forward/backward.
//! * [`net`]: the minimal tensor/layer/optimizer kit the rest is built on.
//!
//! All kernels are generic over [`Real`] (`f32` or `f64`). Double precision
//! is the reference; single precision trades roughly ten times the numerical
//! tolerance for half the memory traffic.

pub mod geometry;
pub mod net;
pub mod regionlet;
pub mod sampler;

use std::fmt;

/// Scalar type for every numeric kernel in this crate.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssignOps
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64`, used for constants and RNG draws.
    fn from_f64(x: f64) -> Self;
    /// Widening (or identity) conversion to `f64` for reporting.
    fn into_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> f32 {
        x as f32
    }
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn into_f64(self) -> f64 {
        self
    }
}

/// Errors reported by the numeric kernels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A tensor or slice had the wrong shape for the operation.
    ShapeMismatch(String),
    /// A value that must be finite was NaN or infinite.
    NonFinite(String),
    /// An argument was outside the operation's domain.
    InvalidArgument(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

pub type Transform32 = geometry::ProjectiveTransform<f32>;
pub type Transform64 = geometry::ProjectiveTransform<f64>;
pub type FeatureMap32 = sampler::FeatureMap<f32>;
pub type FeatureMap64 = sampler::FeatureMap<f64>;
pub type Tensor32 = net::Tensor<f32>;
pub type Tensor64 = net::Tensor<f64>;
