//! Transform algebra over normalized region coordinates.
//!
//! Target and source positions live in `[-1, 1]^2` with x increasing to the
//! right and y increasing upward, so `(-1, 1)` is the top-left corner of a
//! region. A projective transform carries a target point to a source point:
//!
//! ```text
//! (x', y', z) = T * (xt, yt, 1)      xs = x'/z,  ys = y'/z
//! ```
//!
//! with the last matrix entry pinned to one, leaving eight free parameters.
//! The divisor `z` is clamped away from zero before dividing, and gradients
//! downstream treat the clamped value as the truth, so a near-singular
//! transform degrades smoothly instead of producing infinities.

use crate::{Error, Real, Result};

/// Divisor magnitude floor for the projective division.
pub const Z_EPS: f64 = 1e-6;

/// 3x3 projective transform, row-major, `theta[8]` always exactly one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectiveTransform<T> {
    pub theta: [T; 9],
}

/// 2x3 affine transform, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform<T> {
    pub a: [T; 6],
}

/// Axis-aligned window in absolute feature-map coordinates. `x0, y0` is the
/// top-left pixel center; `w, h` count pixels and may be fractional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionOfInterest<T> {
    pub x0: T,
    pub y0: T,
    pub w: T,
    pub h: T,
}

/// Point of the normalized target grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint<T> {
    pub xt: T,
    pub yt: T,
}

/// Transformed point in normalized source coordinates, along with the
/// (clamped) divisor that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourcePoint<T> {
    pub xs: T,
    pub ys: T,
    /// Divisor after clamping; never smaller in magnitude than [`Z_EPS`].
    pub z: T,
    /// True when the raw divisor was clamped.
    pub clamped: bool,
}

impl<T: Real> ProjectiveTransform<T> {
    pub fn identity() -> Self {
        let o = T::one();
        let z = T::zero();
        ProjectiveTransform {
            theta: [o, z, z, z, o, z, z, z, o],
        }
    }

    /// Builds from the eight free parameters; the ninth entry is one.
    pub fn from_free(p: [T; 8]) -> Self {
        ProjectiveTransform {
            theta: [p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], T::one()],
        }
    }

    /// The eight free parameters, row-major.
    pub fn free(&self) -> [T; 8] {
        let t = &self.theta;
        [t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7]]
    }

    /// Maps a target grid point to a source point. The divisor
    /// `z = theta7*xt + theta8*yt + 1` is clamped to `sign(z) * Z_EPS`
    /// when its magnitude falls below [`Z_EPS`]; a zero divisor counts
    /// as positive.
    pub fn apply(&self, p: GridPoint<T>) -> SourcePoint<T> {
        let t = &self.theta;
        let raw_z = t[6] * p.xt + t[7] * p.yt + t[8];
        let (z, clamped) = clamp_divisor(raw_z);
        let xs = (t[0] * p.xt + t[1] * p.yt + t[2]) / z;
        let ys = (t[3] * p.xt + t[4] * p.yt + t[5]) / z;
        SourcePoint { xs, ys, z, clamped }
    }
}

impl<T: Real> AffineTransform<T> {
    pub fn identity() -> Self {
        let o = T::one();
        let z = T::zero();
        AffineTransform {
            a: [o, z, z, z, o, z],
        }
    }

    /// Embeds into the projective form with a unit divisor row.
    pub fn to_projective(&self) -> ProjectiveTransform<T> {
        let a = &self.a;
        ProjectiveTransform {
            theta: [
                a[0],
                a[1],
                a[2],
                a[3],
                a[4],
                a[5],
                T::zero(),
                T::zero(),
                T::one(),
            ],
        }
    }

    /// Same as the projective apply with `z = 1`.
    pub fn apply(&self, p: GridPoint<T>) -> SourcePoint<T> {
        self.to_projective().apply(p)
    }
}

fn clamp_divisor<T: Real>(z: T) -> (T, bool) {
    let eps = T::from_f64(Z_EPS);
    if z.abs() >= eps {
        (z, false)
    } else if z < T::zero() {
        (-eps, true)
    } else {
        (eps, true)
    }
}

impl<T: Real> RegionOfInterest<T> {
    pub fn new(x0: T, y0: T, w: T, h: T) -> Result<Self> {
        // partial_cmp is None for NaN, so NaN extents are rejected too
        if w.partial_cmp(&T::zero()) != Some(core::cmp::Ordering::Greater)
            || h.partial_cmp(&T::zero()) != Some(core::cmp::Ordering::Greater)
        {
            return Err(Error::InvalidArgument(format!(
                "region size {w} x {h} must be positive"
            )));
        }
        Ok(RegionOfInterest { x0, y0, w, h })
    }

    /// Whole-map window for a `h x w` feature map.
    pub fn full(h: usize, w: usize) -> Self {
        RegionOfInterest {
            x0: T::zero(),
            y0: T::zero(),
            w: T::from_f64(w as f64),
            h: T::from_f64(h as f64),
        }
    }
}

/// Normalized target grid for an `out_h x out_w` sampling lattice, row-major
/// from the top-left, corners exactly on `[-1, 1]`. A dimension of one puts
/// its coordinate at zero.
pub fn make_target_grid<T: Real>(out_h: usize, out_w: usize) -> Vec<GridPoint<T>> {
    let mut grid = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let yt = if out_h > 1 {
            T::from_f64((out_h - 1) as f64 - 2.0 * r as f64) / T::from_f64((out_h - 1) as f64)
        } else {
            T::zero()
        };
        for c in 0..out_w {
            let xt = if out_w > 1 {
                T::from_f64(2.0 * c as f64 - (out_w - 1) as f64) / T::from_f64((out_w - 1) as f64)
            } else {
                T::zero()
            };
            grid.push(GridPoint { xt, yt });
        }
    }
    grid
}

/// Applies `transform` to every point of the target grid.
pub fn generate_grid<T: Real>(
    transform: &ProjectiveTransform<T>,
    out_h: usize,
    out_w: usize,
) -> Vec<SourcePoint<T>> {
    make_target_grid(out_h, out_w)
        .into_iter()
        .map(|p| transform.apply(p))
        .collect()
}

/// Maps normalized source coordinates into absolute feature-map coordinates
/// inside a region: `xs = -1` lands on the left pixel center column,
/// `xs = +1` on the right, and y flips so `ys = +1` is the top row.
/// A degenerate axis (`w == 1` pixel wide) collapses to `x0`.
pub fn denormalize<T: Real>(xs: T, ys: T, roi: &RegionOfInterest<T>) -> (T, T) {
    let half = T::from_f64(0.5);
    let x = roi.x0 + (xs + T::one()) * half * (roi.w - T::one());
    let y = roi.y0 + (T::one() - ys) * half * (roi.h - T::one());
    (x, y)
}

/// Initial transforms for a `rows x cols` tiling of a region, row-major from
/// the top-left cell. Cell `(r, c)` scales by `1/cols, 1/rows` and translates
/// so the target square maps exactly onto its tile. Every entry is a single
/// integer-valued division, so the values are correctly rounded.
pub fn cell_init_transforms<T: Real>(rows: usize, cols: usize) -> Result<Vec<ProjectiveTransform<T>>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "tiling {rows} x {cols} must be nonempty"
        )));
    }
    let rows_t = T::from_f64(rows as f64);
    let cols_t = T::from_f64(cols as f64);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let sx = T::one() / cols_t;
            let sy = T::one() / rows_t;
            let tx = T::from_f64((2 * c as i64 + 1 - cols as i64) as f64) / cols_t;
            let ty = T::from_f64((rows as i64 - (2 * r as i64 + 1)) as f64) / rows_t;
            out.push(ProjectiveTransform::from_free([
                sx,
                T::zero(),
                tx,
                T::zero(),
                sy,
                ty,
                T::zero(),
                T::zero(),
            ]));
        }
    }
    Ok(out)
}
