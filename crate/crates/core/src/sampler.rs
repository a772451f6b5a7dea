//! Bilinear region sampling with analytic gradients.
//!
//! A sampled value is the tent-kernel sum over the feature map
//!
//! ```text
//! V(p) = sum_n sum_m U[n, m] * max(0, 1 - |x(p) - m|) * max(0, 1 - |y(p) - n|)
//! ```
//!
//! where `(x(p), y(p))` are the absolute coordinates of sample point `p`.
//! Only the (at most four) lattice neighbors with nonzero weight are touched;
//! points outside the map read as zero. The backward passes produce exact
//! gradients of that sum, both toward the feature map and toward the eight
//! free transform parameters, with the kernel's kink points (a coordinate
//! exactly on the lattice) taking gradient zero by convention.
//!
//! Absolute coordinates are computed as `base + delta` around the transform's
//! own target point; for the identity transform the delta is exactly zero, so
//! sampling a whole map at its own resolution reproduces it bit for bit. The
//! result agrees with composing [`geometry::generate_grid`] and
//! [`geometry::denormalize`] to floating-point roundoff.

use crate::geometry::{self, ProjectiveTransform, RegionOfInterest};
use crate::{Error, Real, Result};

/// Dense `[channels, height, width]` feature map, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureMap {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    /// Validates length and finiteness.
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature map".into()));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn offset(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

/// Per-point cache carried from the forward pass to the backward passes.
#[derive(Clone, Copy, Debug)]
pub struct SampleRecord<T> {
    /// Normalized target coordinates of this grid point.
    pub xt: T,
    pub yt: T,
    /// Normalized source coordinates after the projective division.
    pub xs: T,
    pub ys: T,
    /// Clamped divisor used for the division and for all gradients.
    pub z: T,
    pub clamped: bool,
    /// Absolute feature-map coordinates of the sample.
    pub x_abs: T,
    pub y_abs: T,
}

/// Result of sampling one region: values `[channels, out_h, out_w]` plus the
/// per-point records the backward passes need.
#[derive(Clone, Debug)]
pub struct SampledRegion<T> {
    pub channels: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub roi: RegionOfInterest<T>,
    pub values: Vec<T>,
    pub records: Vec<SampleRecord<T>>,
    /// Number of grid points whose divisor hit the clamp.
    pub clamp_count: usize,
}

/// Derivative of the tent kernel `max(0, 1 - |d|)`:
/// zero at the kinks (`d == 0`, `|d| >= 1`), else `-sign(d)`.
#[inline]
pub fn eta<T: Real>(d: T) -> T {
    if d == T::zero() || d.abs() >= T::one() {
        T::zero()
    } else if d < T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Lattice neighborhood of one absolute coordinate: the two integer indices,
/// their tent weights, and the kernel derivative at each.
#[derive(Clone, Copy)]
struct Axis<T> {
    idx: [i64; 2],
    weight: [T; 2],
    deriv: [T; 2],
}

#[inline]
fn axis_of<T: Real>(coord: T) -> Axis<T> {
    let f = coord.floor();
    let frac = coord - f;
    let i0 = f.into_f64() as i64;
    Axis {
        idx: [i0, i0 + 1],
        weight: [T::one() - frac, frac],
        deriv: [eta(frac), eta(frac - T::one())],
    }
}

/// Samples `out_h x out_w` points of `u` inside `roi` under `transform`.
pub fn sample_forward<T: Real>(
    u: &FeatureMap<T>,
    transform: &ProjectiveTransform<T>,
    roi: &RegionOfInterest<T>,
    out_h: usize,
    out_w: usize,
) -> Result<SampledRegion<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "sample grid {out_h} x {out_w} must be nonempty"
        )));
    }
    let half = T::from_f64(0.5);
    let half_w = (roi.w - T::one()) * half;
    let half_h = (roi.h - T::one()) * half;
    // untransformed grid positions in absolute coordinates; sampling happens
    // at base + (source - target) * half_extent, which is exactly base when
    // the transform is the identity
    let base_x: Vec<T> = (0..out_w)
        .map(|c| {
            if out_w > 1 {
                roi.x0
                    + T::from_f64(c as f64) * (roi.w - T::one()) / T::from_f64((out_w - 1) as f64)
            } else {
                roi.x0 + half_w
            }
        })
        .collect();
    let base_y: Vec<T> = (0..out_h)
        .map(|r| {
            if out_h > 1 {
                roi.y0
                    + T::from_f64(r as f64) * (roi.h - T::one()) / T::from_f64((out_h - 1) as f64)
            } else {
                roi.y0 + half_h
            }
        })
        .collect();

    let grid = geometry::make_target_grid::<T>(out_h, out_w);
    let n_points = out_h * out_w;
    let mut records = Vec::with_capacity(n_points);
    let mut values = vec![T::zero(); u.channels * n_points];
    let mut clamp_count = 0usize;

    for (p, gp) in grid.iter().enumerate() {
        let sp = transform.apply(*gp);
        if sp.clamped {
            clamp_count += 1;
        }
        let x_abs = base_x[p % out_w] + (sp.xs - gp.xt) * half_w;
        let y_abs = base_y[p / out_w] + (gp.yt - sp.ys) * half_h;
        if !x_abs.is_finite() || !y_abs.is_finite() {
            return Err(Error::NonFinite(format!("sample coordinate at point {p}")));
        }
        records.push(SampleRecord {
            xt: gp.xt,
            yt: gp.yt,
            xs: sp.xs,
            ys: sp.ys,
            z: sp.z,
            clamped: sp.clamped,
            x_abs,
            y_abs,
        });

        let ax = axis_of(x_abs);
        let ay = axis_of(y_abs);
        for ch in 0..u.channels {
            let mut acc = T::zero();
            for iy in 0..2 {
                let n = ay.idx[iy];
                let wy = ay.weight[iy];
                if wy == T::zero() || n < 0 || n >= u.height as i64 {
                    continue;
                }
                for ix in 0..2 {
                    let m = ax.idx[ix];
                    let wx = ax.weight[ix];
                    if wx == T::zero() || m < 0 || m >= u.width as i64 {
                        continue;
                    }
                    acc += u.at(ch, n as usize, m as usize) * wx * wy;
                }
            }
            values[ch * n_points + p] = acc;
        }
    }

    Ok(SampledRegion {
        channels: u.channels,
        out_h,
        out_w,
        roi: *roi,
        values,
        records,
        clamp_count,
    })
}

fn check_grad_shape<T: Real>(
    u: &FeatureMap<T>,
    region: &SampledRegion<T>,
    grad_v: &[T],
) -> Result<usize> {
    let n_points = region.out_h * region.out_w;
    if region.channels != u.channels {
        return Err(Error::ShapeMismatch(format!(
            "region has {} channels, map has {}",
            region.channels, u.channels
        )));
    }
    if grad_v.len() != u.channels * n_points {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient length {} != {}",
            grad_v.len(),
            u.channels * n_points
        )));
    }
    Ok(n_points)
}

/// Gradient of the sampled values toward the feature map. Each sample point
/// scatters its upstream gradient onto the same lattice neighbors (and with
/// the same weights) the forward pass read from.
pub fn sample_backward_input<T: Real>(
    u: &FeatureMap<T>,
    region: &SampledRegion<T>,
    grad_v: &[T],
) -> Result<FeatureMap<T>> {
    let n_points = check_grad_shape(u, region, grad_v)?;
    let mut grad_u = FeatureMap::zeros(u.channels, u.height, u.width);
    for (p, rec) in region.records.iter().enumerate() {
        let ax = axis_of(rec.x_abs);
        let ay = axis_of(rec.y_abs);
        for ch in 0..u.channels {
            let g = grad_v[ch * n_points + p];
            if g == T::zero() {
                continue;
            }
            for iy in 0..2 {
                let n = ay.idx[iy];
                let wy = ay.weight[iy];
                if wy == T::zero() || n < 0 || n >= u.height as i64 {
                    continue;
                }
                for ix in 0..2 {
                    let m = ax.idx[ix];
                    let wx = ax.weight[ix];
                    if wx == T::zero() || m < 0 || m >= u.width as i64 {
                        continue;
                    }
                    let off = grad_u.offset(ch, n as usize, m as usize);
                    grad_u.data_mut()[off] += g * wx * wy;
                }
            }
        }
    }
    Ok(grad_u)
}

/// Gradient of the sampled values toward the eight free transform parameters.
///
/// For each point, the kernel derivative gives the value's sensitivity to its
/// absolute coordinates; scaling by the region extents (the y axis flips)
/// turns that into sensitivity to the normalized source point, and the chain
/// through the projective division distributes it over the parameters:
///
/// ```text
/// d xs / d t1 = xt / z     d xs / d t2 = yt / z     d xs / d t3 = 1 / z
/// d xs / d t7 = -xs xt / z d xs / d t8 = -xs yt / z (same rows for ys)
/// ```
///
/// The divisor clamp is transparent here: the clamped `z` feeds the same
/// formulas.
pub fn sample_backward_theta<T: Real>(
    u: &FeatureMap<T>,
    region: &SampledRegion<T>,
    grad_v: &[T],
) -> Result<[T; 8]> {
    let n_points = check_grad_shape(u, region, grad_v)?;
    let half = T::from_f64(0.5);
    let half_w = (region.roi.w - T::one()) * half;
    let half_h = (region.roi.h - T::one()) * half;
    let mut grad = [T::zero(); 8];
    for (p, rec) in region.records.iter().enumerate() {
        let ax = axis_of(rec.x_abs);
        let ay = axis_of(rec.y_abs);
        // dV/dx_abs and dV/dy_abs contracted with the upstream gradient
        let mut gx_abs = T::zero();
        let mut gy_abs = T::zero();
        for ch in 0..u.channels {
            let g = grad_v[ch * n_points + p];
            if g == T::zero() {
                continue;
            }
            let mut dx = T::zero();
            let mut dy = T::zero();
            for iy in 0..2 {
                let n = ay.idx[iy];
                if n < 0 || n >= u.height as i64 {
                    continue;
                }
                for ix in 0..2 {
                    let m = ax.idx[ix];
                    if m < 0 || m >= u.width as i64 {
                        continue;
                    }
                    let uv = u.at(ch, n as usize, m as usize);
                    dx += uv * ax.deriv[ix] * ay.weight[iy];
                    dy += uv * ax.weight[ix] * ay.deriv[iy];
                }
            }
            gx_abs += g * dx;
            gy_abs += g * dy;
        }
        let hx = gx_abs * half_w;
        let hy = -(gy_abs * half_h);
        let z = rec.z;
        grad[0] += hx * rec.xt / z;
        grad[1] += hx * rec.yt / z;
        grad[2] += hx / z;
        grad[3] += hy * rec.xt / z;
        grad[4] += hy * rec.yt / z;
        grad[5] += hy / z;
        let s = hx * rec.xs + hy * rec.ys;
        grad[6] -= rec.xt / z * s;
        grad[7] -= rec.yt / z * s;
    }
    Ok(grad)
}
