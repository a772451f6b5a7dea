//! Training and evaluation loops.
//!
//! Everything is deterministic given the config seed: scene generation,
//! parameter init, and the per-epoch shuffle each draw from their own
//! substream, and all computation is single threaded, so two runs with the
//! same config produce bit-identical parameters and reports.

use regionlets::net::{sgd_step, smooth_l1, softmax_cross_entropy, Rng};
use regionlets::regionlet::{PoolMode, RegionletConfig, RsnMode};
use regionlets::sampler::FeatureMap;
use regionlets::{Error, Real, Result};

use crate::detector::Detector;
use crate::scene::{apply_deltas, generate_scene, iou, make_proposals, Proposal, SyntheticScene};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub train_scenes: usize,
    pub eval_scenes: usize,
    pub proposals_per_scene: usize,
    /// Learning rate for the first two thirds of the epochs.
    pub lr_initial: f64,
    /// Learning rate for the final third.
    pub lr_final: f64,
    pub momentum: f64,
    pub region_rows: usize,
    pub region_cols: usize,
    pub sample_h: usize,
    pub sample_w: usize,
    pub mode: RsnMode,
    pub gating: bool,
    pub shared_gate: bool,
    pub pool: PoolMode,
    /// Descriptor lattice size; the descriptor is `16 * s * s` long.
    pub descriptor_s: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 17,
            epochs: 20,
            train_scenes: 2000,
            eval_scenes: 100,
            proposals_per_scene: 4,
            lr_initial: 1e-3,
            lr_final: 1e-4,
            momentum: 0.9,
            region_rows: 4,
            region_cols: 4,
            sample_h: 4,
            sample_w: 4,
            mode: RsnMode::Projective,
            gating: true,
            shared_gate: true,
            pool: PoolMode::Max,
            descriptor_s: 8,
        }
    }
}

impl TrainConfig {
    pub fn regionlet_config(&self) -> RegionletConfig {
        RegionletConfig {
            region_rows: self.region_rows,
            region_cols: self.region_cols,
            sample_h: self.sample_h,
            sample_w: self.sample_w,
            mode: self.mode,
            gating: self.gating,
            shared_gate: self.shared_gate,
            pool: self.pool,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0
            || self.train_scenes == 0
            || self.eval_scenes == 0
            || self.proposals_per_scene == 0
        {
            return Err(Error::InvalidArgument(
                "epochs, scene counts, and proposals per scene must be nonzero".into(),
            ));
        }
        if self.descriptor_s == 0 || self.region_rows == 0 || self.region_cols == 0 {
            return Err(Error::InvalidArgument(
                "descriptor and region tiling sizes must be nonzero".into(),
            ));
        }
        if !(self.lr_initial.is_finite() && self.lr_final.is_finite() && self.momentum.is_finite())
        {
            return Err(Error::NonFinite("optimizer settings".into()));
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        // drop at the two-thirds mark, like a 40k/60k step schedule
        if epoch * 3 < self.epochs * 2 {
            self.lr_initial
        } else {
            self.lr_final
        }
    }
}

/// Metrics of one training run. `to_flat` gives a stable numeric layout:
/// `[epochs, final_accuracy, final_mean_iou, clamp_events, weight_count,
/// per-epoch losses..., per-epoch accuracies...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    pub epoch_losses: Vec<f64>,
    pub epoch_accuracies: Vec<f64>,
    pub final_accuracy: f64,
    pub final_mean_iou: f64,
    pub clamp_events: u64,
    pub weight_count: usize,
}

impl TrainReport {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = vec![
            self.epochs as f64,
            self.final_accuracy,
            self.final_mean_iou,
            self.clamp_events as f64,
            self.weight_count as f64,
        ];
        out.extend_from_slice(&self.epoch_losses);
        out.extend_from_slice(&self.epoch_accuracies);
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "epochs {}  loss {:.4} -> {:.4}  accuracy {:.4}  mean_iou {:.4}  clamps {}",
            self.epochs,
            self.epoch_losses.first().copied().unwrap_or(f64::NAN),
            self.epoch_losses.last().copied().unwrap_or(f64::NAN),
            self.final_accuracy,
            self.final_mean_iou,
            self.clamp_events,
        )
    }
}

/// Scenes plus their fixed proposal sets.
pub struct Dataset<T> {
    pub scenes: Vec<SyntheticScene<T>>,
    pub proposals: Vec<Vec<Proposal>>,
}

pub fn build_dataset<T: Real>(scenes: usize, per_scene: usize, rng: &mut Rng) -> Dataset<T> {
    let mut out = Dataset {
        scenes: Vec::with_capacity(scenes),
        proposals: Vec::with_capacity(scenes),
    };
    for _ in 0..scenes {
        let scene = generate_scene::<T>(rng);
        let props = make_proposals(&scene.objects, per_scene, rng);
        out.scenes.push(scene);
        out.proposals.push(props);
    }
    out
}

/// Held-out metrics: `(proposal accuracy, mean regressed IoU on positives)`.
pub fn evaluate<T: Real>(model: &Detector<T>, data: &Dataset<T>) -> Result<(f64, f64)> {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut iou_sum = 0.0f64;
    let mut iou_count = 0usize;
    for (scene, props) in data.scenes.iter().zip(&data.proposals) {
        let acts = model.forward_scene(&scene.image)?;
        for p in props {
            let roi = model.feature_roi(p)?;
            let fwd = model.forward_proposal(&acts.u, &roi)?;
            let mut pred = 0usize;
            for (i, &l) in fwd.logits.iter().enumerate() {
                if l > fwd.logits[pred] {
                    pred = i;
                }
            }
            if pred == p.label {
                correct += 1;
            }
            total += 1;
            if p.label > 0 {
                let deltas = [
                    fwd.deltas[0].into_f64(),
                    fwd.deltas[1].into_f64(),
                    fwd.deltas[2].into_f64(),
                    fwd.deltas[3].into_f64(),
                ];
                let pred_box = apply_deltas(p.cx, p.cy, p.w, p.h, &deltas);
                iou_sum += iou(&pred_box, &scene.objects[p.object].bbox);
                iou_count += 1;
            }
        }
    }
    let acc = correct as f64 / total.max(1) as f64;
    let mean_iou = if iou_count > 0 {
        iou_sum / iou_count as f64
    } else {
        0.0
    };
    Ok((acc, mean_iou))
}

/// Trains a detector from scratch and returns per-epoch metrics along with
/// the trained model. Fails if any epoch's loss turns non-finite.
pub fn train<T: Real>(cfg: &TrainConfig) -> Result<(TrainReport, Detector<T>)> {
    cfg.validate()?;
    let mut root = Rng::new(cfg.seed);
    let mut data_rng = root.substream();
    let mut model_rng = root.substream();
    let mut shuffle_rng = root.substream();

    let train_set = build_dataset::<T>(cfg.train_scenes, cfg.proposals_per_scene, &mut data_rng);
    let eval_set = build_dataset::<T>(cfg.eval_scenes, cfg.proposals_per_scene, &mut data_rng);
    let mut model = Detector::<T>::new(cfg, &mut model_rng)?;

    let mut report = TrainReport {
        epochs: cfg.epochs,
        epoch_losses: Vec::with_capacity(cfg.epochs),
        epoch_accuracies: Vec::with_capacity(cfg.epochs),
        final_accuracy: 0.0,
        final_mean_iou: 0.0,
        clamp_events: 0,
        weight_count: model.regionlets.weight_count(),
    };

    let mut order: Vec<usize> = (0..cfg.train_scenes).collect();
    for epoch in 0..cfg.epochs {
        let lr = T::from_f64(cfg.lr_at(epoch));
        let momentum = T::from_f64(cfg.momentum);
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        let mut loss_count = 0usize;
        for &si in &order {
            let scene = &train_set.scenes[si];
            let props = &train_set.proposals[si];
            let acts = model.forward_scene(&scene.image)?;
            let mut grad_u = FeatureMap::zeros(acts.u.channels, acts.u.height, acts.u.width);
            let inv = T::from_f64(1.0 / props.len() as f64);
            for p in props {
                let roi = model.feature_roi(p)?;
                let fwd = model.forward_proposal(&acts.u, &roi)?;
                report.clamp_events += fwd.clamp_count as u64;
                let (ce, mut g_logits) = softmax_cross_entropy(&fwd.logits, p.label)?;
                let mut loss = ce;
                let mut g_deltas = vec![T::zero(); 4];
                if p.label > 0 {
                    let target: Vec<T> = p.target.iter().map(|&t| T::from_f64(t)).collect();
                    let (l1, g) = smooth_l1(&fwd.deltas, &target)?;
                    loss += l1;
                    g_deltas = g;
                }
                for g in g_logits.iter_mut() {
                    *g *= inv;
                }
                for g in g_deltas.iter_mut() {
                    *g *= inv;
                }
                model.backward_proposal(&acts.u, &fwd, &g_logits, &g_deltas, &mut grad_u)?;
                loss_sum += loss.into_f64();
                loss_count += 1;
            }
            model.backward_scene(&scene.image, &acts, &grad_u)?;
            for p in model.parameters_mut() {
                sgd_step(p, lr, momentum);
            }
        }
        let epoch_loss = loss_sum / loss_count.max(1) as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
        }
        let (acc, mean_iou) = evaluate(&model, &eval_set)?;
        report.epoch_losses.push(epoch_loss);
        report.epoch_accuracies.push(acc);
        report.final_accuracy = acc;
        report.final_mean_iou = mean_iou;
    }
    Ok((report, model))
}
