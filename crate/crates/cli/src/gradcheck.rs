//! Randomized finite-difference verification of the sampling gradients.
//!
//! Each case draws a feature map, a window, and a transform, rejects
//! configurations whose sample points sit near a lattice kink or whose
//! divisor comes close to the clamp, and then compares the analytic
//! gradients (toward the transform parameters and toward the map) against
//! central differences of a scalar objective. The tent kernel is piecewise
//! linear, so away from kinks the difference quotient is exact up to
//! roundoff.

use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use regionlets::geometry::{ProjectiveTransform, RegionOfInterest};
use regionlets::net::Rng;
use regionlets::sampler::{
    sample_backward_input, sample_backward_theta, sample_forward, FeatureMap, SampledRegion,
};
use regionlets::Real;

#[derive(Clone, Debug)]
pub struct GradcheckSettings {
    pub cases: usize,
    pub seed: u64,
    /// Central-difference step for transform parameters.
    pub theta_eps: f64,
    /// Central-difference step for feature-map values.
    pub input_eps: f64,
    /// Minimum distance of every sample coordinate from the lattice.
    pub lattice_margin: f64,
    /// Minimum accepted divisor magnitude.
    pub min_divisor: f64,
    /// Output lattice edge, `out_lo..out_lo + out_span`.
    pub out_lo: usize,
    pub out_span: usize,
    /// Window size range.
    pub roi_lo: f64,
    pub roi_span: f64,
    /// Perspective-row magnitude.
    pub perspective: f64,
    pub rel_tol: f64,
    /// Absolute error that passes regardless of relative error; zero
    /// disables the floor.
    pub abs_tol: f64,
}

impl GradcheckSettings {
    /// Reference double-precision run: pure relative tolerance 1e-3.
    pub fn for_f64(cases: usize, seed: u64) -> Self {
        GradcheckSettings {
            cases,
            seed,
            theta_eps: 1e-4,
            input_eps: 1e-3,
            lattice_margin: 8e-3,
            min_divisor: 0.1,
            out_lo: 3,
            out_span: 3,
            roi_lo: 2.5,
            roi_span: 4.0,
            perspective: 0.2,
            rel_tol: 1e-3,
            abs_tol: 0.0,
        }
    }

    /// Single precision runs an order of magnitude looser, with an absolute
    /// floor for components near zero, and keeps sample points further from
    /// the kinks so the larger steps stay inside one linear piece.
    pub fn for_f32(cases: usize, seed: u64) -> Self {
        GradcheckSettings {
            cases,
            seed,
            theta_eps: 2e-3,
            input_eps: 1e-2,
            lattice_margin: 0.04,
            min_divisor: 0.5,
            out_lo: 3,
            out_span: 1,
            roi_lo: 2.5,
            roi_span: 2.0,
            perspective: 0.1,
            rel_tol: 1e-2,
            abs_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradcheckOutcome {
    pub cases: usize,
    pub max_theta_rel: f64,
    pub max_input_rel: f64,
    pub failures: usize,
    pub elapsed: Duration,
}

impl GradcheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

struct Case<T> {
    u: FeatureMap<T>,
    theta: [f64; 8],
    roi: RegionOfInterest<T>,
    out_h: usize,
    out_w: usize,
    grad_v: Vec<f64>,
    region: SampledRegion<T>,
}

fn draw_case<T: Real>(s: &GradcheckSettings, rng: &mut Rng, kind: usize) -> Result<Case<T>> {
    for _ in 0..5000 {
        let c = 1 + rng.below(2);
        let h = 5 + rng.below(4);
        let w = 5 + rng.below(4);
        let out_h = s.out_lo + rng.below(s.out_span);
        let out_w = s.out_lo + rng.below(s.out_span);
        let roi = RegionOfInterest::new(
            T::from_f64(rng.uniform(-1.5, 2.5)),
            T::from_f64(rng.uniform(-1.5, 2.5)),
            T::from_f64(rng.uniform(s.roi_lo, s.roi_lo + s.roi_span)),
            T::from_f64(rng.uniform(s.roi_lo, s.roi_lo + s.roi_span)),
        )
        .expect("positive sizes by construction");
        let p = match kind % 3 {
            0 => 0.0,
            1 => s.perspective * 0.5,
            _ => s.perspective,
        };
        let theta = [
            rng.uniform(0.3, 0.8),
            rng.uniform(-0.15, 0.15),
            rng.uniform(-0.4, 0.4),
            rng.uniform(-0.15, 0.15),
            rng.uniform(0.3, 0.8),
            rng.uniform(-0.4, 0.4),
            rng.uniform(-p, p),
            rng.uniform(-p, p),
        ];
        let data: Vec<T> = (0..c * h * w).map(|_| rng.real(-2.0, 2.0)).collect();
        let u = FeatureMap::from_vec(c, h, w, data)?;
        let transform = ProjectiveTransform::from_free(theta.map(T::from_f64));
        let region = sample_forward(&u, &transform, &roi, out_h, out_w)?;
        let ok = region.records.iter().all(|r| {
            let fx = r.x_abs.into_f64().rem_euclid(1.0);
            let fy = r.y_abs.into_f64().rem_euclid(1.0);
            !r.clamped
                && r.z.into_f64().abs() >= s.min_divisor
                && fx.min(1.0 - fx) >= s.lattice_margin
                && fy.min(1.0 - fy) >= s.lattice_margin
        });
        if !ok {
            continue;
        }
        let grad_v: Vec<f64> = (0..region.values.len())
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        return Ok(Case {
            u,
            theta,
            roi,
            out_h,
            out_w,
            grad_v,
            region,
        });
    }
    bail!("could not draw an off-lattice case in 5000 attempts");
}

fn objective<T: Real>(case: &Case<T>, theta: &[f64; 8], u: &FeatureMap<T>) -> Result<f64> {
    let transform = ProjectiveTransform::from_free(theta.map(T::from_f64));
    let region = sample_forward(u, &transform, &case.roi, case.out_h, case.out_w)?;
    let mut acc = 0.0;
    for (v, g) in region.values.iter().zip(&case.grad_v) {
        acc += v.into_f64() * g;
    }
    if !acc.is_finite() {
        bail!("non-finite objective");
    }
    Ok(acc)
}

/// `(relative error, absolute error)` of analytic vs numeric.
fn errors(analytic: f64, numeric: f64) -> (f64, f64) {
    let abs = (analytic - numeric).abs();
    let rel = abs / analytic.abs().max(numeric.abs()).max(1e-8);
    (rel, abs)
}

/// Runs the full suite; `failures` counts gradient components outside
/// tolerance.
pub fn run<T: Real>(s: &GradcheckSettings) -> Result<GradcheckOutcome> {
    let start = Instant::now();
    let mut rng = Rng::new(s.seed);
    let mut max_theta_rel = 0.0f64;
    let mut max_input_rel = 0.0f64;
    let mut failures = 0usize;
    let mut check = |rel: f64, abs: f64, worst: &mut f64| {
        if rel > *worst {
            *worst = rel;
        }
        if rel > s.rel_tol && (s.abs_tol == 0.0 || abs > s.abs_tol) {
            failures += 1;
        }
    };

    for case_idx in 0..s.cases {
        let case = draw_case::<T>(s, &mut rng, case_idx)?;
        let grad_v_t: Vec<T> = case.grad_v.iter().map(|&g| T::from_f64(g)).collect();

        // transform parameters
        let analytic = sample_backward_theta(&case.u, &case.region, &grad_v_t)?;
        for i in 0..8 {
            let mut tp = case.theta;
            tp[i] += s.theta_eps;
            let fp = objective(&case, &tp, &case.u)?;
            tp[i] = case.theta[i] - s.theta_eps;
            let fm = objective(&case, &tp, &case.u)?;
            let numeric = (fp - fm) / (2.0 * s.theta_eps);
            let (rel, abs) = errors(analytic[i].into_f64(), numeric);
            check(rel, abs, &mut max_theta_rel);
        }

        // feature-map values, on a sampled subset of indices
        let grad_u = sample_backward_input(&case.u, &case.region, &grad_v_t)?;
        let n = case.u.data().len();
        for _ in 0..12 {
            let idx = rng.below(n);
            let base = case.u.data()[idx].into_f64();
            let probe = |v: f64| -> Result<f64> {
                let mut data = case.u.data().to_vec();
                data[idx] = T::from_f64(v);
                let u2 = FeatureMap::from_vec(case.u.channels, case.u.height, case.u.width, data)?;
                objective(&case, &case.theta, &u2)
            };
            let fp = probe(base + s.input_eps)?;
            let fm = probe(base - s.input_eps)?;
            let numeric = (fp - fm) / (2.0 * s.input_eps);
            let (rel, abs) = errors(grad_u.data()[idx].into_f64(), numeric);
            check(rel, abs, &mut max_input_rel);
        }
    }

    Ok(GradcheckOutcome {
        cases: s.cases,
        max_theta_rel,
        max_input_rel,
        failures,
        elapsed: start.elapsed(),
    })
}
