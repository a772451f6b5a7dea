//! The toy detector: a two-layer conv backbone, regionlet feature extraction
//! over proposal windows, and small classification and box-regression heads.
//!
//! The backbone downsamples 64x64 images to a 16x29x29 feature map (a
//! stride-2 then a stride-1 valid convolution), so an image coordinate `x`
//! lands at feature coordinate `(x - 3) / 2`. The overall stride stays at
//! two because telling a rotated rectangle from an ellipse hinges on corner
//! detail only a few pixels across. Proposal descriptors come from
//! resampling the proposal's feature window to a fixed lattice with the
//! identity transform, which doubles as an averaging pool that stays
//! differentiable.

use regionlets::geometry::{ProjectiveTransform, RegionOfInterest};
use regionlets::net::{
    relu_backward, relu_forward, Conv2d, Linear, Parameter, Rng, Tensor,
};
use regionlets::regionlet::{ExtractCache, RegionletModule};
use regionlets::sampler::{sample_backward_input, sample_forward, FeatureMap, SampledRegion};
use regionlets::{Error, Real, Result};

use crate::scene::{Proposal, NUM_CLASSES};
use crate::train::TrainConfig;

/// Feature-map depth produced by the backbone.
pub const FEAT_CHANNELS: usize = 16;
/// Image-to-feature coordinate mapping: `x_feat = (x_img - OFFSET) / STRIDE`.
pub const FEAT_STRIDE: f64 = 2.0;
pub const FEAT_OFFSET: f64 = 3.0;

#[derive(Clone, Debug)]
pub struct Detector<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub regionlets: RegionletModule<T>,
    pub trunk: Linear<T>,
    pub cls: Linear<T>,
    pub reg: Linear<T>,
    pub descriptor_s: usize,
}

/// Backbone activations for one scene, shared by all its proposals.
#[derive(Clone, Debug)]
pub struct SceneActivations<T> {
    a1: Tensor<T>,
    pub u: FeatureMap<T>,
}

/// Everything one proposal's forward pass produced.
#[derive(Clone, Debug)]
pub struct ProposalForward<T> {
    pub roi: RegionOfInterest<T>,
    desc_region: SampledRegion<T>,
    descriptor: Vec<T>,
    extract: ExtractCache<T>,
    feature: Vec<T>,
    h: Vec<T>,
    pub logits: Vec<T>,
    pub deltas: Vec<T>,
    /// Projective-divisor clamp events over all regions of this proposal.
    pub clamp_count: usize,
}

impl<T: Real> Detector<T> {
    pub fn new(cfg: &TrainConfig, rng: &mut Rng) -> Result<Self> {
        let conv1 = Conv2d::init_uniform(1, 8, 3, 2, rng);
        let conv2 = Conv2d::init_uniform(8, FEAT_CHANNELS, 3, 1, rng);
        let d_in = FEAT_CHANNELS * cfg.descriptor_s * cfg.descriptor_s;
        let regionlets = RegionletModule::new(d_in, FEAT_CHANNELS, &cfg.regionlet_config(), rng)?;
        let trunk = Linear::init_uniform(regionlets.feature_len(), 64, rng);
        let cls = Linear::init_uniform(64, NUM_CLASSES, rng);
        let reg = Linear::init_uniform(64, 4, rng);
        Ok(Detector {
            conv1,
            conv2,
            regionlets,
            trunk,
            cls,
            reg,
            descriptor_s: cfg.descriptor_s,
        })
    }

    /// Descriptor length fed to the selection heads.
    pub fn descriptor_len(&self) -> usize {
        FEAT_CHANNELS * self.descriptor_s * self.descriptor_s
    }

    pub fn forward_scene(&self, image: &Tensor<T>) -> Result<SceneActivations<T>> {
        let t1 = self.conv1.forward(image)?;
        let a1 = Tensor::from_vec(t1.dims(), relu_forward(t1.data()))?;
        let t2 = self.conv2.forward(&a1)?;
        let dims = t2.dims().to_vec();
        let u = FeatureMap::from_vec(dims[0], dims[1], dims[2], relu_forward(t2.data()))?;
        Ok(SceneActivations { a1, u })
    }

    /// Maps a proposal's image-space box onto the feature map.
    pub fn feature_roi(&self, p: &Proposal) -> Result<RegionOfInterest<T>> {
        let x0 = (p.cx - p.w / 2.0 - FEAT_OFFSET) / FEAT_STRIDE;
        let y0 = (p.cy - p.h / 2.0 - FEAT_OFFSET) / FEAT_STRIDE;
        let w = (p.w / FEAT_STRIDE).max(1.0);
        let h = (p.h / FEAT_STRIDE).max(1.0);
        RegionOfInterest::new(
            T::from_f64(x0),
            T::from_f64(y0),
            T::from_f64(w),
            T::from_f64(h),
        )
    }

    pub fn forward_proposal(
        &self,
        u: &FeatureMap<T>,
        roi: &RegionOfInterest<T>,
    ) -> Result<ProposalForward<T>> {
        let identity = ProjectiveTransform::identity();
        let s = self.descriptor_s;
        let desc_region = sample_forward(u, &identity, roi, s, s)?;
        let descriptor = desc_region.values.clone();
        let (feature, extract) = self.regionlets.forward(u, roi, &descriptor)?;
        let h = relu_forward(&self.trunk.forward(&feature)?);
        let logits = self.cls.forward(&h)?;
        let deltas = self.reg.forward(&h)?;
        let clamp_count = extract
            .per_region
            .iter()
            .map(|r| r.region.clamp_count)
            .sum();
        Ok(ProposalForward {
            roi: *roi,
            desc_region,
            descriptor,
            extract,
            feature,
            h,
            logits,
            deltas,
            clamp_count,
        })
    }

    /// Backpropagates one proposal's head gradients; parameter gradients
    /// accumulate in the layers, the feature-map gradient into `grad_u`.
    pub fn backward_proposal(
        &mut self,
        u: &FeatureMap<T>,
        fwd: &ProposalForward<T>,
        grad_logits: &[T],
        grad_deltas: &[T],
        grad_u: &mut FeatureMap<T>,
    ) -> Result<()> {
        if grad_u.data().len() != u.data().len() {
            return Err(Error::ShapeMismatch("feature gradient buffer".into()));
        }
        let mut g_h = self.cls.backward(&fwd.h, grad_logits)?;
        let g_h_reg = self.reg.backward(&fwd.h, grad_deltas)?;
        for (a, b) in g_h.iter_mut().zip(&g_h_reg) {
            *a += *b;
        }
        let g_h_pre = relu_backward(&fwd.h, &g_h);
        let g_feature = self.trunk.backward(&fwd.feature, &g_h_pre)?;
        let (g_u_regions, g_desc) =
            self.regionlets
                .backward(u, &fwd.descriptor, &fwd.extract, &g_feature)?;
        let g_u_desc = sample_backward_input(u, &fwd.desc_region, &g_desc)?;
        let acc = grad_u.data_mut();
        for (i, (a, b)) in g_u_regions.data().iter().zip(g_u_desc.data()).enumerate() {
            acc[i] += *a + *b;
        }
        Ok(())
    }

    /// Backpropagates the accumulated feature-map gradient through the
    /// backbone convolutions.
    pub fn backward_scene(
        &mut self,
        image: &Tensor<T>,
        acts: &SceneActivations<T>,
        grad_u: &FeatureMap<T>,
    ) -> Result<()> {
        let g2 = relu_backward(acts.u.data(), grad_u.data());
        let g2 = Tensor::from_vec(
            &[acts.u.channels, acts.u.height, acts.u.width],
            g2,
        )?;
        let g_a1 = self.conv2.backward(&acts.a1, &g2)?;
        let g1 = relu_backward(acts.a1.data(), g_a1.data());
        let g1 = Tensor::from_vec(acts.a1.dims(), g1)?;
        self.conv1.backward(image, &g1)?;
        Ok(())
    }

    /// All trainable parameters in a fixed order.
    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out: Vec<&mut Parameter<T>> = vec![
            &mut self.conv1.w,
            &mut self.conv1.b,
            &mut self.conv2.w,
            &mut self.conv2.b,
        ];
        out.extend(self.regionlets.parameters_mut());
        out.push(&mut self.trunk.w);
        out.push(&mut self.trunk.b);
        out.push(&mut self.cls.w);
        out.push(&mut self.cls.b);
        out.push(&mut self.reg.w);
        out.push(&mut self.reg.b);
        out
    }

    /// Snapshot of every parameter value, in [`Self::parameters_mut`] order.
    pub fn parameter_values(&mut self) -> Tensor<T> {
        let mut data = Vec::new();
        for p in self.parameters_mut() {
            data.extend_from_slice(p.value.data());
        }
        let len = data.len();
        Tensor::from_vec(&[len], data).expect("length matches by construction")
    }
}
