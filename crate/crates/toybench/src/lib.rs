//! Synthetic-shapes detection benchmark for regionlet features.
//!
//! Scenes of rendered shapes with exact bounding boxes feed a small conv
//! backbone; region features extracted under learned projective transforms
//! drive classification and box-regression heads. The point is not the
//! detector itself but exercising the full differentiable pipeline end to
//! end, deterministically enough to compare runs bit for bit.

pub mod ablation;
pub mod detector;
pub mod scene;
pub mod train;

pub use ablation::{ablation_table, run_ablation, AblationRow};
pub use detector::Detector;
pub use scene::{generate_scene, iou, make_proposals, Proposal, SceneObject, SyntheticScene};
pub use train::{build_dataset, evaluate, train, Dataset, TrainConfig, TrainReport};
