//! Layers with explicit forward and backward passes.
//!
//! Backward methods take the same activations the forward produced,
//! accumulate parameter gradients in place, and return the gradient with
//! respect to the layer input. Nothing here allocates per-element closures;
//! everything is plain loops over row-major buffers.

use super::rng::Rng;
use super::tensor::Tensor;
use crate::{Error, Real, Result};

/// A trainable value with its gradient accumulator and momentum buffer.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub momentum: Tensor<T>,
}

impl<T: Real> Parameter<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let dims = value.dims().to_vec();
        Parameter {
            value,
            grad: Tensor::zeros(&dims),
            momentum: Tensor::zeros(&dims),
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Parameter::new(Tensor::zeros(dims))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Fully connected layer, `y = W x + b`, weights stored `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub w: Parameter<T>,
    pub b: Parameter<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: Parameter::zeros(&[out_dim, in_dim]),
            b: Parameter::zeros(&[out_dim]),
        }
    }

    /// Weights uniform in `[-1/sqrt(in), 1/sqrt(in)]`, biases zero.
    pub fn init_uniform(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let mut layer = Linear::zeros(in_dim, out_dim);
        let bound = 1.0 / (in_dim as f64).sqrt();
        for w in layer.w.value.data_mut() {
            *w = rng.real(-bound, bound);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.dims()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.dims()[0]
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        if x.len() != in_dim {
            return Err(Error::ShapeMismatch(format!(
                "linear input {} != {}",
                x.len(),
                in_dim
            )));
        }
        let w = self.w.value.data();
        let b = self.b.value.data();
        let mut y = Vec::with_capacity(out_dim);
        for o in 0..out_dim {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            // four independent lanes keep the reduction off the FP-add
            // latency chain; the lane order is fixed, so results stay
            // deterministic
            let mut lanes = [T::zero(); 4];
            let mut rows = row.chunks_exact(4);
            let mut xs = x.chunks_exact(4);
            for (r, v) in (&mut rows).zip(&mut xs) {
                lanes[0] += r[0] * v[0];
                lanes[1] += r[1] * v[1];
                lanes[2] += r[2] * v[2];
                lanes[3] += r[3] * v[3];
            }
            let mut acc = b[o];
            for (wi, xi) in rows.remainder().iter().zip(xs.remainder()) {
                acc += *wi * *xi;
            }
            y.push(acc + (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]));
        }
        Ok(y)
    }

    /// Accumulates `dL/dW` and `dL/db`, returns `dL/dx`.
    pub fn backward(&mut self, x: &[T], grad_y: &[T]) -> Result<Vec<T>> {
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        if x.len() != in_dim || grad_y.len() != out_dim {
            return Err(Error::ShapeMismatch(format!(
                "linear backward got x {} grad {}",
                x.len(),
                grad_y.len()
            )));
        }
        let w = self.w.value.data();
        let gw = self.w.grad.data_mut();
        let gb = self.b.grad.data_mut();
        let mut grad_x = vec![T::zero(); in_dim];
        for o in 0..out_dim {
            let g = grad_y[o];
            gb[o] += g;
            let row = &w[o * in_dim..(o + 1) * in_dim];
            let grow = &mut gw[o * in_dim..(o + 1) * in_dim];
            // two single-purpose passes instead of one fused loop: each is a
            // plain streaming update the compiler vectorizes
            for (gi, xi) in grow.iter_mut().zip(x) {
                *gi += g * *xi;
            }
            for (dx, wi) in grad_x.iter_mut().zip(row) {
                *dx += g * *wi;
            }
        }
        Ok(grad_x)
    }
}

/// 2-d convolution over `[C, H, W]` tensors, no padding.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    /// Kernel, `[out_ch, in_ch, k, k]`.
    pub w: Parameter<T>,
    pub b: Parameter<T>,
    pub stride: usize,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, k: usize, stride: usize) -> Self {
        assert!(stride > 0, "stride must be nonzero");
        Conv2d {
            w: Parameter::zeros(&[out_ch, in_ch, k, k]),
            b: Parameter::zeros(&[out_ch]),
            stride,
        }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init_uniform(in_ch: usize, out_ch: usize, k: usize, stride: usize, rng: &mut Rng) -> Self {
        let mut layer = Conv2d::zeros(in_ch, out_ch, k, stride);
        let bound = 1.0 / ((in_ch * k * k) as f64).sqrt();
        for w in layer.w.value.data_mut() {
            *w = rng.real(-bound, bound);
        }
        layer
    }

    pub fn in_ch(&self) -> usize {
        self.w.value.dims()[1]
    }

    pub fn out_ch(&self) -> usize {
        self.w.value.dims()[0]
    }

    pub fn ksize(&self) -> usize {
        self.w.value.dims()[2]
    }

    pub fn out_hw(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        let k = self.ksize();
        if in_h < k || in_w < k {
            return Err(Error::ShapeMismatch(format!(
                "conv input {in_h}x{in_w} smaller than kernel {k}"
            )));
        }
        Ok(((in_h - k) / self.stride + 1, (in_w - k) / self.stride + 1))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [c_in, h, w] = dims3(x)?;
        if c_in != self.in_ch() {
            return Err(Error::ShapeMismatch(format!(
                "conv input channels {} != {}",
                c_in,
                self.in_ch()
            )));
        }
        let (oh, ow) = self.out_hw(h, w)?;
        let (oc, k, s) = (self.out_ch(), self.ksize(), self.stride);
        let wv = self.w.value.data();
        let bv = self.b.value.data();
        let xd = x.data();
        let mut y = Tensor::zeros(&[oc, oh, ow]);
        let yd = y.data_mut();
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bv[o];
                    for ci in 0..c_in {
                        let kbase = ((o * c_in + ci) * k) * k;
                        let ibase = ci * h * w;
                        for ky in 0..k {
                            let iy = oy * s + ky;
                            let irow = ibase + iy * w + ox * s;
                            let krow = kbase + ky * k;
                            for kx in 0..k {
                                acc += wv[krow + kx] * xd[irow + kx];
                            }
                        }
                    }
                    yd[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        Ok(y)
    }

    /// Accumulates kernel and bias gradients, returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<T>, grad_y: &Tensor<T>) -> Result<Tensor<T>> {
        let [c_in, h, w] = dims3(x)?;
        let [oc, oh, ow] = dims3(grad_y)?;
        let (want_oh, want_ow) = self.out_hw(h, w)?;
        if oc != self.out_ch() || oh != want_oh || ow != want_ow {
            return Err(Error::ShapeMismatch(format!(
                "conv grad {oc}x{oh}x{ow}, expected {}x{want_oh}x{want_ow}",
                self.out_ch()
            )));
        }
        let (k, s) = (self.ksize(), self.stride);
        let wv = self.w.value.data();
        let gw = self.w.grad.data_mut();
        let gb = self.b.grad.data_mut();
        let xd = x.data();
        let gy = grad_y.data();
        let mut gx = Tensor::zeros(&[c_in, h, w]);
        let gxd = gx.data_mut();
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = gy[(o * oh + oy) * ow + ox];
                    gb[o] += g;
                    for ci in 0..c_in {
                        let kbase = ((o * c_in + ci) * k) * k;
                        let ibase = ci * h * w;
                        for ky in 0..k {
                            let iy = oy * s + ky;
                            let irow = ibase + iy * w + ox * s;
                            let krow = kbase + ky * k;
                            for kx in 0..k {
                                gw[krow + kx] += g * xd[irow + kx];
                                gxd[irow + kx] += g * wv[krow + kx];
                            }
                        }
                    }
                }
            }
        }
        Ok(gx)
    }
}

fn dims3<T: Real>(t: &Tensor<T>) -> Result<[usize; 3]> {
    match t.dims() {
        [a, b, c] => Ok([*a, *b, *c]),
        other => Err(Error::ShapeMismatch(format!("expected 3-d, got {other:?}"))),
    }
}

pub fn relu_forward<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// `y` is the forward output; gradient is zero where the unit was clipped.
pub fn relu_backward<T: Real>(y: &[T], grad_y: &[T]) -> Vec<T> {
    y.iter()
        .zip(grad_y)
        .map(|(&yv, &g)| if yv > T::zero() { g } else { T::zero() })
        .collect()
}

pub fn sigmoid_forward<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| sigmoid(v)).collect()
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    // split on sign so exp never overflows
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `y` is the forward output; `dy/dx = y (1 - y)`.
pub fn sigmoid_backward<T: Real>(y: &[T], grad_y: &[T]) -> Vec<T> {
    y.iter()
        .zip(grad_y)
        .map(|(&yv, &g)| g * yv * (T::one() - yv))
        .collect()
}
