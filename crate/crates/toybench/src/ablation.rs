//! Ablation runner: the same benchmark with each component switched off in turn.

use regionlets::regionlet::RsnMode;
use regionlets::{Real, Result};

use crate::train::{train, TrainConfig, TrainReport};

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub name: &'static str,
    pub report: TrainReport,
}

/// The four configurations: one whole-window region, offsets without scaling,
/// full transforms without the gate, and the complete model.
pub const ABLATION_MODES: [(&str, RsnMode, bool); 4] = [
    ("global", RsnMode::Global, true),
    ("offset_only", RsnMode::OffsetOnly, true),
    ("non_gating", RsnMode::Projective, false),
    ("full", RsnMode::Projective, true),
];

/// Trains one run per configuration, all from the same seed and data settings.
pub fn run_ablation<T: Real>(base: &TrainConfig) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(ABLATION_MODES.len());
    for (name, mode, gating) in ABLATION_MODES {
        let cfg = TrainConfig {
            mode,
            gating,
            ..base.clone()
        };
        let (report, _) = train::<T>(&cfg)?;
        rows.push(AblationRow { name, report });
    }
    Ok(rows)
}

/// Fixed-width text table over the ablation rows.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>9} {:>9} {:>11} {:>11} {:>8}\n",
        "mode", "accuracy", "mean_iou", "first_loss", "final_loss", "clamps"
    ));
    for row in rows {
        let r = &row.report;
        out.push_str(&format!(
            "{:<12} {:>9.4} {:>9.4} {:>11.4} {:>11.4} {:>8}\n",
            row.name,
            r.final_accuracy,
            r.final_mean_iou,
            r.epoch_losses.first().copied().unwrap_or(f64::NAN),
            r.epoch_losses.last().copied().unwrap_or(f64::NAN),
            r.clamp_events,
        ));
    }
    out
}
