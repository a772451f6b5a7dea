//! Finite-difference gradient verification.
//!
//! Central differences probe one coordinate at a time, so the cost is two
//! function evaluations per checked index. Use [`fd_check_at`] with a sampled
//! index set when the input is large.

use crate::{Error, Real, Result};

/// Default step for kernels that are piecewise linear in the probed input
/// (sampling coordinates); central differences are exact between kinks, so
/// the step mainly needs to dominate roundoff.
pub fn coord_eps<T: Real>() -> T {
    T::from_f64(1e-3)
}

/// Default step for smooth layers.
pub fn smooth_eps<T: Real>() -> T {
    T::from_f64(1e-5)
}

/// Relative error with an absolute floor:
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn rel_err<T: Real>(a: T, n: T) -> T {
    let floor = T::from_f64(1e-8);
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Compares `analytic` against central differences of `f` at `x` over every
/// coordinate; returns the maximum relative error.
pub fn fd_check<T, F>(f: F, x: &[T], analytic: &[T], eps: T) -> Result<T>
where
    T: Real,
    F: FnMut(&[T]) -> Result<T>,
{
    let indices: Vec<usize> = (0..x.len()).collect();
    fd_check_at(f, x, analytic, eps, &indices)
}

/// [`fd_check`] restricted to the given coordinate indices.
pub fn fd_check_at<T, F>(mut f: F, x: &[T], analytic: &[T], eps: T, indices: &[usize]) -> Result<T>
where
    T: Real,
    F: FnMut(&[T]) -> Result<T>,
{
    if analytic.len() != x.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient length {} != input length {}",
            analytic.len(),
            x.len()
        )));
    }
    // partial_cmp is None for NaN, so a NaN step is rejected too
    if eps.partial_cmp(&T::zero()) != Some(core::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument(format!("eps {eps} must be positive")));
    }
    let mut probe = x.to_vec();
    let two = T::from_f64(2.0);
    let mut worst = T::zero();
    for &i in indices {
        if i >= x.len() {
            return Err(Error::InvalidArgument(format!(
                "index {} out of range {}",
                i,
                x.len()
            )));
        }
        probe[i] = x[i] + eps;
        let fp = f(&probe)?;
        probe[i] = x[i] - eps;
        let fm = f(&probe)?;
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("f at probe index {i}")));
        }
        let numeric = (fp - fm) / (two * eps);
        let err = rel_err(analytic[i], numeric);
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}
