//! Learned region selection, gating, and pooling.
//!
//! A region selection head predicts a projective transform from a region
//! descriptor; the transform drives the sampler over the region of interest;
//! a sigmoid gate reweights the sampled values; per-channel pooling reduces
//! each sampled patch to one value per channel. Stacking the pooled vectors
//! of all heads yields the fixed-length feature, and every stage backs its
//! gradient up to the feature map, the descriptor, and its own parameters.

use crate::geometry::{cell_init_transforms, ProjectiveTransform, RegionOfInterest};
use crate::net::{
    relu_backward, relu_forward, sigmoid_forward, Linear, Parameter, Rng, Tensor,
};
use crate::sampler::{
    sample_backward_input, sample_backward_theta, sample_forward, FeatureMap, SampledRegion,
};
use crate::{Error, Real, Result};

/// Hidden width of the selection head's two fully connected layers.
pub const RSN_HIDDEN: usize = 256;

/// Which transform family a selection head may express.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsnMode {
    /// All eight parameters free.
    Projective,
    /// Perspective row pinned to zero.
    Affine,
    /// Only the two translations learn; scales and shears stay at their
    /// initial cell values, perspective pinned to zero.
    OffsetOnly,
    /// Single whole-region head starting from the identity; affine family.
    Global,
}

/// Pooling reduction over a sampled patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

/// Region selection head: descriptor -> transform parameters.
///
/// Three fully connected layers (`d_in -> 256 -> 256 -> 9`) with relu between.
/// The last layer starts with zero weights and the initial transform in its
/// bias, so before training every input predicts exactly the initial
/// transform. Predicted parameters are clamped to `[-1, 1]`; a parameter
/// pushed strictly outside gets zero gradient, as do the slots a mode pins.
#[derive(Clone, Debug)]
pub struct RsnHead<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub fc3: Linear<T>,
    pub mode: RsnMode,
    pub init: ProjectiveTransform<T>,
}

/// Activations saved by [`RsnHead::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct RsnCache<T> {
    a1: Vec<T>,
    a2: Vec<T>,
    raw: Vec<T>,
}

impl<T: Real> RsnHead<T> {
    pub fn new(
        d_in: usize,
        mode: RsnMode,
        init: ProjectiveTransform<T>,
        rng: &mut Rng,
    ) -> Self {
        let fc1 = Linear::init_uniform(d_in, RSN_HIDDEN, rng);
        let fc2 = Linear::init_uniform(RSN_HIDDEN, RSN_HIDDEN, rng);
        let mut fc3 = Linear::zeros(RSN_HIDDEN, 9);
        fc3.b.value.data_mut().copy_from_slice(&init.theta);
        RsnHead {
            fc1,
            fc2,
            fc3,
            mode,
            init,
        }
    }

    /// True for parameter slots the mode pins to a constant.
    fn pinned(&self, slot: usize) -> bool {
        match self.mode {
            RsnMode::Projective => false,
            RsnMode::Affine | RsnMode::Global => slot >= 6,
            RsnMode::OffsetOnly => matches!(slot, 0 | 1 | 3 | 4 | 6 | 7),
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<(ProjectiveTransform<T>, RsnCache<T>)> {
        let a1 = relu_forward(&self.fc1.forward(x)?);
        let a2 = relu_forward(&self.fc2.forward(&a1)?);
        let raw = self.fc3.forward(&a2)?;
        let one = T::one();
        let mut theta = [T::zero(); 9];
        for slot in 0..8 {
            theta[slot] = if self.pinned(slot) {
                match self.mode {
                    RsnMode::OffsetOnly => {
                        if slot >= 6 {
                            T::zero()
                        } else {
                            self.init.theta[slot]
                        }
                    }
                    _ => T::zero(),
                }
            } else {
                raw[slot].max(-one).min(one)
            };
        }
        theta[8] = one;
        Ok((ProjectiveTransform { theta }, RsnCache { a1, a2, raw }))
    }

    /// Backpropagates a gradient on the eight free parameters through the
    /// head; accumulates layer gradients and returns the descriptor gradient.
    pub fn backward(
        &mut self,
        x: &[T],
        cache: &RsnCache<T>,
        grad_theta: &[T; 8],
    ) -> Result<Vec<T>> {
        let one = T::one();
        let mut grad_raw = vec![T::zero(); 9];
        for slot in 0..8 {
            if self.pinned(slot) || cache.raw[slot].abs() > one {
                continue;
            }
            grad_raw[slot] = grad_theta[slot];
        }
        let ga2 = self.fc3.backward(&cache.a2, &grad_raw)?;
        let gh2 = relu_backward(&cache.a2, &ga2);
        let ga1 = self.fc2.backward(&cache.a1, &gh2)?;
        let gh1 = relu_backward(&cache.a1, &ga1);
        self.fc1.backward(x, &gh1)
    }

    /// Weight-matrix element count, biases excluded.
    pub fn weight_count(&self) -> usize {
        self.fc1.w.value.len() + self.fc2.w.value.len() + self.fc3.w.value.len()
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter<T>; 6] {
        [
            &mut self.fc1.w,
            &mut self.fc1.b,
            &mut self.fc2.w,
            &mut self.fc2.b,
            &mut self.fc3.w,
            &mut self.fc3.b,
        ]
    }
}

/// Elementwise sigmoid gate over a sampled patch, `gated = v * sigmoid(Wv+b)`.
/// Zero-initialized, so gating starts as a uniform factor of one half.
#[derive(Clone, Debug)]
pub struct GatingLayer<T> {
    pub fc: Linear<T>,
}

impl<T: Real> GatingLayer<T> {
    pub fn zeros(n: usize) -> Self {
        GatingLayer {
            fc: Linear::zeros(n, n),
        }
    }

    /// Returns `(gated values, gate weights)`.
    pub fn forward(&self, v: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let weights = sigmoid_forward(&self.fc.forward(v)?);
        let gated = v.iter().zip(&weights).map(|(&a, &w)| a * w).collect();
        Ok((gated, weights))
    }

    /// `v` and `weights` as produced by the forward pass. Both paths flow:
    /// the gradient through the gated product and the gradient through the
    /// gate's own dependence on `v`.
    pub fn backward(&mut self, v: &[T], weights: &[T], grad_gated: &[T]) -> Result<Vec<T>> {
        if v.len() != weights.len() || v.len() != grad_gated.len() {
            return Err(Error::ShapeMismatch(format!(
                "gate backward lengths {} / {} / {}",
                v.len(),
                weights.len(),
                grad_gated.len()
            )));
        }
        let one = T::one();
        // pre-sigmoid gradient
        let s: Vec<T> = grad_gated
            .iter()
            .zip(v)
            .zip(weights)
            .map(|((&g, &vi), &w)| g * vi * w * (one - w))
            .collect();
        let through_gate = self.fc.backward(v, &s)?;
        Ok(grad_gated
            .iter()
            .zip(weights)
            .zip(&through_gate)
            .map(|((&g, &w), &t)| g * w + t)
            .collect())
    }

    pub fn parameters_mut(&mut self) -> [&mut Parameter<T>; 2] {
        [&mut self.fc.w, &mut self.fc.b]
    }
}

/// Pooling cache: winner index per channel for max pooling.
#[derive(Clone, Debug, Default)]
pub struct PoolCache {
    argmax: Vec<usize>,
}

/// Reduces `[channels, area]` values to one value per channel.
/// Max pooling keeps the first maximum in row-major order.
pub fn pool_forward<T: Real>(
    values: &[T],
    channels: usize,
    area: usize,
    mode: PoolMode,
) -> Result<(Vec<T>, PoolCache)> {
    if area == 0 || values.len() != channels * area {
        return Err(Error::ShapeMismatch(format!(
            "pool input {} != {channels} x {area}",
            values.len()
        )));
    }
    let mut pooled = Vec::with_capacity(channels);
    let mut cache = PoolCache::default();
    match mode {
        PoolMode::Max => {
            cache.argmax.reserve(channels);
            for ch in 0..channels {
                let patch = &values[ch * area..(ch + 1) * area];
                let mut best = 0usize;
                for (i, &v) in patch.iter().enumerate() {
                    if v > patch[best] {
                        best = i;
                    }
                }
                cache.argmax.push(best);
                pooled.push(patch[best]);
            }
        }
        PoolMode::Avg => {
            let inv = T::one() / T::from_f64(area as f64);
            for ch in 0..channels {
                let patch = &values[ch * area..(ch + 1) * area];
                let sum = patch.iter().fold(T::zero(), |a, &b| a + b);
                pooled.push(sum * inv);
            }
        }
    }
    Ok((pooled, cache))
}

/// Routes pooled gradients back over the patch: to the winner for max, spread
/// uniformly for average.
pub fn pool_backward<T: Real>(
    grad_pooled: &[T],
    channels: usize,
    area: usize,
    mode: PoolMode,
    cache: &PoolCache,
) -> Result<Vec<T>> {
    if grad_pooled.len() != channels {
        return Err(Error::ShapeMismatch(format!(
            "pooled gradient length {} != {channels}",
            grad_pooled.len()
        )));
    }
    let mut grad = vec![T::zero(); channels * area];
    match mode {
        PoolMode::Max => {
            if cache.argmax.len() != channels {
                return Err(Error::ShapeMismatch("stale pool cache".into()));
            }
            for ch in 0..channels {
                grad[ch * area + cache.argmax[ch]] = grad_pooled[ch];
            }
        }
        PoolMode::Avg => {
            let inv = T::one() / T::from_f64(area as f64);
            for ch in 0..channels {
                let g = grad_pooled[ch] * inv;
                for cell in &mut grad[ch * area..(ch + 1) * area] {
                    *cell = g;
                }
            }
        }
    }
    Ok(grad)
}

/// Configuration of a [`RegionletModule`].
#[derive(Clone, Copy, Debug)]
pub struct RegionletConfig {
    /// Region tiling; the head count is `rows * cols`.
    pub region_rows: usize,
    pub region_cols: usize,
    /// Sampling density per region.
    pub sample_h: usize,
    pub sample_w: usize,
    pub mode: RsnMode,
    pub gating: bool,
    /// One gate shared by all regions (the default) or one per region.
    pub shared_gate: bool,
    pub pool: PoolMode,
}

impl Default for RegionletConfig {
    fn default() -> Self {
        RegionletConfig {
            region_rows: 4,
            region_cols: 4,
            sample_h: 4,
            sample_w: 4,
            mode: RsnMode::Projective,
            gating: true,
            shared_gate: true,
            pool: PoolMode::Max,
        }
    }
}

/// Per-region activations saved by the extract forward pass.
#[derive(Clone, Debug)]
pub struct RegionCache<T> {
    rsn: RsnCache<T>,
    pub theta: ProjectiveTransform<T>,
    pub region: SampledRegion<T>,
    gate_weights: Vec<T>,
    pool: PoolCache,
}

/// Everything the extract backward pass needs.
#[derive(Clone, Debug)]
pub struct ExtractCache<T> {
    pub per_region: Vec<RegionCache<T>>,
}

/// The full feature extractor: one selection head per region cell, a sigmoid
/// gate, and per-channel pooling, concatenated over regions.
#[derive(Clone, Debug)]
pub struct RegionletModule<T> {
    pub heads: Vec<RsnHead<T>>,
    pub gates: Vec<GatingLayer<T>>,
    pub channels: usize,
    pub sample_h: usize,
    pub sample_w: usize,
    pub gating: bool,
    pub shared_gate: bool,
    pub pool: PoolMode,
}

impl<T: Real> RegionletModule<T> {
    /// `d_in` is the descriptor length, `channels` the feature-map depth.
    /// Global mode collapses the tiling to a single identity-initialized head.
    pub fn new(
        d_in: usize,
        channels: usize,
        cfg: &RegionletConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let (rows, cols) = match cfg.mode {
            RsnMode::Global => (1, 1),
            _ => (cfg.region_rows, cfg.region_cols),
        };
        if cfg.sample_h == 0 || cfg.sample_w == 0 {
            return Err(Error::InvalidArgument(
                "sampling density must be nonzero".into(),
            ));
        }
        let inits = cell_init_transforms::<T>(rows, cols)?;
        let heads = inits
            .into_iter()
            .map(|init| RsnHead::new(d_in, cfg.mode, init, rng))
            .collect::<Vec<_>>();
        let n_gate = channels * cfg.sample_h * cfg.sample_w;
        let gates = if !cfg.gating {
            Vec::new()
        } else if cfg.shared_gate {
            vec![GatingLayer::zeros(n_gate)]
        } else {
            (0..heads.len()).map(|_| GatingLayer::zeros(n_gate)).collect()
        };
        Ok(RegionletModule {
            heads,
            gates,
            channels,
            sample_h: cfg.sample_h,
            sample_w: cfg.sample_w,
            gating: cfg.gating,
            shared_gate: cfg.shared_gate,
            pool: cfg.pool,
        })
    }

    pub fn regions(&self) -> usize {
        self.heads.len()
    }

    /// Output feature length: regions times channels.
    pub fn feature_len(&self) -> usize {
        self.heads.len() * self.channels
    }

    /// Selection-head weight elements, biases excluded.
    pub fn weight_count(&self) -> usize {
        self.heads.iter().map(|h| h.weight_count()).sum()
    }

    fn gate_index(&self, region: usize) -> usize {
        if self.shared_gate {
            0
        } else {
            region
        }
    }

    pub fn forward(
        &self,
        u: &FeatureMap<T>,
        roi: &RegionOfInterest<T>,
        x: &[T],
    ) -> Result<(Vec<T>, ExtractCache<T>)> {
        if u.channels != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "map has {} channels, module expects {}",
                u.channels, self.channels
            )));
        }
        let area = self.sample_h * self.sample_w;
        let mut feature = Vec::with_capacity(self.feature_len());
        let mut per_region = Vec::with_capacity(self.heads.len());
        for (k, head) in self.heads.iter().enumerate() {
            let (theta, rsn) = head.forward(x)?;
            let region = sample_forward(u, &theta, roi, self.sample_h, self.sample_w)?;
            let (pool_in, gate_weights) = if self.gating {
                let (gated, w) = self.gates[self.gate_index(k)].forward(&region.values)?;
                (gated, w)
            } else {
                (region.values.clone(), Vec::new())
            };
            let (pooled, pool) = pool_forward(&pool_in, self.channels, area, self.pool)?;
            feature.extend_from_slice(&pooled);
            per_region.push(RegionCache {
                rsn,
                theta,
                region,
                gate_weights,
                pool,
            });
        }
        Ok((feature, ExtractCache { per_region }))
    }

    /// Backpropagates through pooling, gating, sampling, and the selection
    /// heads. Returns the feature-map gradient and the descriptor gradient;
    /// parameter gradients accumulate inside the module.
    pub fn backward(
        &mut self,
        u: &FeatureMap<T>,
        x: &[T],
        cache: &ExtractCache<T>,
        grad_feature: &[T],
    ) -> Result<(FeatureMap<T>, Vec<T>)> {
        if grad_feature.len() != self.feature_len() {
            return Err(Error::ShapeMismatch(format!(
                "feature gradient length {} != {}",
                grad_feature.len(),
                self.feature_len()
            )));
        }
        if cache.per_region.len() != self.heads.len() {
            return Err(Error::ShapeMismatch("stale extract cache".into()));
        }
        let area = self.sample_h * self.sample_w;
        let c = self.channels;
        let mut grad_u = FeatureMap::zeros(u.channels, u.height, u.width);
        let mut grad_x = vec![T::zero(); x.len()];
        for k in 0..self.heads.len() {
            let rc = &cache.per_region[k];
            let g_pooled = &grad_feature[k * c..(k + 1) * c];
            let g_pool_in = pool_backward(g_pooled, c, area, self.pool, &rc.pool)?;
            let g_values = if self.gating {
                let gate = self.gate_index(k);
                self.gates[gate].backward(&rc.region.values, &rc.gate_weights, &g_pool_in)?
            } else {
                g_pool_in
            };
            let g_u_k = sample_backward_input(u, &rc.region, &g_values)?;
            for (acc, g) in grad_u.data_mut().iter_mut().zip(g_u_k.data()) {
                *acc += *g;
            }
            let g_theta = sample_backward_theta(u, &rc.region, &g_values)?;
            let g_x_k = self.heads[k].backward(x, &rc.rsn, &g_theta)?;
            for (acc, g) in grad_x.iter_mut().zip(&g_x_k) {
                *acc += *g;
            }
        }
        Ok((grad_u, grad_x))
    }

    /// All trainable parameters in a fixed order: per head fc1 w/b, fc2 w/b,
    /// fc3 w/b, then per gate w/b.
    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out: Vec<&mut Parameter<T>> = Vec::new();
        for head in &mut self.heads {
            out.extend(head.parameters_mut());
        }
        for gate in &mut self.gates {
            out.extend(gate.parameters_mut());
        }
        out
    }

    /// Fixed-order snapshot of all parameter values.
    pub fn parameter_values(&self) -> Tensor<T> {
        let mut data = Vec::new();
        for head in &self.heads {
            for p in [
                &head.fc1.w, &head.fc1.b, &head.fc2.w, &head.fc2.b, &head.fc3.w, &head.fc3.b,
            ] {
                data.extend_from_slice(p.value.data());
            }
        }
        for gate in &self.gates {
            data.extend_from_slice(gate.fc.w.value.data());
            data.extend_from_slice(gate.fc.b.value.data());
        }
        let len = data.len();
        Tensor::from_vec(&[len], data).expect("length matches by construction")
    }
}
