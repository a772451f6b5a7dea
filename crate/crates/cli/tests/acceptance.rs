//! Acceptance checks: one test per headline guarantee, each printing a
//! single PASS line with its measured numbers (run with --nocapture to see
//! them). Tolerances are stated inline next to each assertion.

use std::process::Command;
use std::time::Duration;

use regionlets::geometry::{cell_init_transforms, ProjectiveTransform, RegionOfInterest};
use regionlets::net::Rng;
use regionlets::regionlet::{PoolMode, RegionletConfig, RegionletModule, RsnHead, RsnMode};
use regionlets::sampler::{sample_forward, FeatureMap};
use regionlets_cli::config::print_config;
use regionlets_cli::gradcheck::{run, GradcheckSettings};
use toybench::ablation::{ablation_table, run_ablation};
use toybench::train::{train, TrainConfig};

/// 1. Analytic gradients to the transform parameters and the feature map
///    agree with central finite differences on 100 randomized f64 cases
///    (sample points kept off the interpolation lattice, divisors >= 0.1),
///    max relative error < 1e-3, in under 60 seconds.
#[test]
fn check_1_gradients_match_finite_differences() {
    let settings = GradcheckSettings::for_f64(100, 20260816);
    assert!(settings.lattice_margin >= 1e-3);
    assert!(settings.min_divisor >= 0.1);
    assert!(settings.rel_tol <= 1e-3);
    let outcome = run::<f64>(&settings).expect("gradient suite must execute");
    assert_eq!(outcome.cases, 100);
    assert!(
        outcome.passed(),
        "{} gradient components out of tolerance",
        outcome.failures
    );
    assert!(outcome.max_theta_rel < 1e-3, "theta: {}", outcome.max_theta_rel);
    assert!(outcome.max_input_rel < 1e-3, "input: {}", outcome.max_input_rel);
    assert!(
        outcome.elapsed < Duration::from_secs(60),
        "too slow: {:?}",
        outcome.elapsed
    );
    eprintln!(
        "check 1 PASS: 100 cases, max rel err theta {:.3e} / input {:.3e}, {:?}",
        outcome.max_theta_rel, outcome.max_input_rel, outcome.elapsed
    );
}

/// Independent full-sum reference: evaluates the sampled value of every
/// output cell by walking the entire map with tent weights, computing the
/// target lattice, projective division, and window mapping from scratch.
fn full_sum_reference(
    u: &FeatureMap<f64>,
    theta: &[f64; 9],
    roi: (f64, f64, f64, f64),
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let (x0, y0, w, h) = roi;
    let mut out = Vec::with_capacity(u.channels * out_h * out_w);
    for c in 0..u.channels {
        for r in 0..out_h {
            let yt = if out_h > 1 {
                ((out_h - 1) as f64 - 2.0 * r as f64) / (out_h - 1) as f64
            } else {
                0.0
            };
            for q in 0..out_w {
                let xt = if out_w > 1 {
                    (2.0 * q as f64 - (out_w - 1) as f64) / (out_w - 1) as f64
                } else {
                    0.0
                };
                let mut z = theta[6] * xt + theta[7] * yt + theta[8];
                let sign = if z < 0.0 { -1.0 } else { 1.0 };
                z = sign * z.abs().max(1e-6);
                let xs = (theta[0] * xt + theta[1] * yt + theta[2]) / z;
                let ys = (theta[3] * xt + theta[4] * yt + theta[5]) / z;
                let x_abs = x0 + (xs + 1.0) * 0.5 * (w - 1.0);
                let y_abs = y0 + (1.0 - ys) * 0.5 * (h - 1.0);
                let mut acc = 0.0;
                for n in 0..u.height {
                    let wy = (1.0 - (y_abs - n as f64).abs()).max(0.0);
                    for m in 0..u.width {
                        let wx = (1.0 - (x_abs - m as f64).abs()).max(0.0);
                        acc += u.at(c, n, m) * wx * wy;
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// 2. The 4-neighbor sampler equals the naive full-sum reference within
///    1e-12 relative on 50 random cases.
#[test]
fn check_2_sampler_matches_full_sum_oracle() {
    let mut rng = Rng::new(883);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let channels = 1 + rng.below(2);
        let height = 4 + rng.below(5);
        let width = 4 + rng.below(5);
        let data: Vec<f64> = (0..channels * height * width)
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        let u = FeatureMap::from_vec(channels, height, width, data).unwrap();
        let theta = [
            rng.uniform(0.3, 1.1),
            rng.uniform(-0.2, 0.2),
            rng.uniform(-0.5, 0.5),
            rng.uniform(-0.2, 0.2),
            rng.uniform(0.3, 1.1),
            rng.uniform(-0.5, 0.5),
            rng.uniform(-0.12, 0.12),
            rng.uniform(-0.12, 0.12),
            1.0,
        ];
        let x0 = rng.uniform(-1.0, 2.0);
        let y0 = rng.uniform(-1.0, 2.0);
        let w = rng.uniform(2.0, width as f64);
        let h = rng.uniform(2.0, height as f64);
        let out_h = 2 + rng.below(4);
        let out_w = 2 + rng.below(4);

        let mut free = [0.0; 8];
        free.copy_from_slice(&theta[..8]);
        let transform = ProjectiveTransform::from_free(free);
        let roi = RegionOfInterest::new(x0, y0, w, h).unwrap();
        let sampled = sample_forward(&u, &transform, &roi, out_h, out_w).unwrap();
        let reference = full_sum_reference(&u, &theta, (x0, y0, w, h), out_h, out_w);

        assert_eq!(sampled.values.len(), reference.len());
        for (&a, &b) in sampled.values.iter().zip(&reference) {
            let scale = a.abs().max(b.abs()).max(1.0);
            let rel = (a - b).abs() / scale;
            worst = worst.max(rel);
            assert!(rel <= 1e-12, "sampler {a} vs full sum {b} (rel {rel:.3e})");
        }
    }
    eprintln!("check 2 PASS: 50 cases, worst relative gap {worst:.3e} (bound 1e-12)");
}

/// 3. The identity transform over a whole-map window at the map's own
///    resolution reproduces every value bit for bit (0 ulp).
#[test]
fn check_3_identity_reproduces_the_map_bitwise() {
    let mut rng = Rng::new(4242);
    let (channels, height, width) = (3, 6, 5);
    let data: Vec<f64> = (0..channels * height * width)
        .map(|_| rng.uniform(-3.0, 3.0))
        .collect();
    let u = FeatureMap::from_vec(channels, height, width, data).unwrap();
    let roi = RegionOfInterest::full(height, width);
    let sampled = sample_forward(
        &u,
        &ProjectiveTransform::identity(),
        &roi,
        height,
        width,
    )
    .unwrap();
    assert_eq!(sampled.values.len(), u.data().len());
    for (k, (&got, &want)) in sampled.values.iter().zip(u.data()).enumerate() {
        assert_eq!(
            got.to_bits(),
            want.to_bits(),
            "value {k}: {got} != {want}"
        );
    }
    assert_eq!(sampled.clamp_count, 0);
    eprintln!(
        "check 3 PASS: {} values reproduced with 0 ulp error",
        u.data().len()
    );
}

/// 4. The 3x3 tiling's first cell transform hits the exact constants
///    [1/3, 0, -2/3; 0, 1/3, 2/3; 0, 0, 1], and the whole-window (global)
///    initializer is exactly the identity affine [1, 0, 0; 0, 1, 0].
#[test]
fn check_4_initializer_constants_are_exact() {
    let cells = cell_init_transforms::<f64>(3, 3).unwrap();
    let want: [f64; 9] = [
        1.0 / 3.0,
        0.0,
        -2.0 / 3.0,
        0.0,
        1.0 / 3.0,
        2.0 / 3.0,
        0.0,
        0.0,
        1.0,
    ];
    for (slot, (&got, &expect)) in cells[0].theta.iter().zip(&want).enumerate() {
        assert_eq!(got.to_bits(), expect.to_bits(), "slot {slot}: {got} != {expect}");
    }

    let global = cell_init_transforms::<f64>(1, 1).unwrap();
    let identity: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    assert_eq!(global.len(), 1);
    for (&got, &expect) in global[0].theta.iter().zip(&identity) {
        assert_eq!(got.to_bits(), expect.to_bits());
    }

    // a whole-window head predicts exactly the identity before training
    let mut rng = Rng::new(7);
    let head = RsnHead::<f64>::new(12, RsnMode::Global, global[0], &mut rng);
    let x: Vec<f64> = (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let (predicted, _) = head.forward(&x).unwrap();
    for (&got, &expect) in predicted.theta.iter().zip(&identity) {
        assert_eq!(got.to_bits(), expect.to_bits());
    }
    eprintln!("check 4 PASS: tiling and whole-window initializers are bit-exact");
}

/// 5. Sixteen selection heads on a 1024-long descriptor carry exactly
///    16 * (1024*256 + 256*256 + 256*9) = 5,279,744 weights.
#[test]
fn check_5_selection_network_weight_count() {
    let cfg = RegionletConfig {
        region_rows: 4,
        region_cols: 4,
        sample_h: 4,
        sample_w: 4,
        mode: RsnMode::Projective,
        gating: true,
        shared_gate: true,
        pool: PoolMode::Max,
    };
    let mut rng = Rng::new(1);
    let module = RegionletModule::<f64>::new(1024, 16, &cfg, &mut rng).unwrap();
    assert_eq!(module.regions(), 16);
    let expect = 16 * (1024 * 256 + 256 * 256 + 256 * 9);
    assert_eq!(expect, 5_279_744);
    assert_eq!(module.weight_count(), expect);
    eprintln!("check 5 PASS: weight count {} matches the formula", expect);
}

/// 6. Training with the default configuration reaches at least 90%
///    held-out proposal-classification accuracy within its (<= 20) epochs
///    with every epoch loss finite, and the whole-window mode also trains
///    to a finite loss.
#[test]
fn check_6_training_reaches_the_accuracy_bar() {
    let cfg = TrainConfig::default();
    assert!(cfg.epochs <= 20, "default must stay within 20 epochs");
    let (report, _model) = train::<f64>(&cfg).expect("training must not diverge");
    assert!(report.epoch_losses.iter().all(|l| l.is_finite()));
    assert!(
        report.epoch_losses.windows(2).take(4).all(|w| w[1] < w[0]),
        "loss must fall strictly over the first five epochs: {:?}",
        &report.epoch_losses[..5.min(report.epoch_losses.len())]
    );
    assert!(
        report.final_accuracy >= 0.9,
        "held-out accuracy {:.4} fell below 0.90 ({})",
        report.final_accuracy,
        report.summary()
    );

    let global_cfg = TrainConfig {
        mode: RsnMode::Global,
        epochs: 2,
        train_scenes: 8,
        eval_scenes: 4,
        proposals_per_scene: 3,
        region_rows: 2,
        region_cols: 2,
        sample_h: 3,
        sample_w: 3,
        descriptor_s: 4,
        ..TrainConfig::default()
    };
    let (global_report, _) = train::<f64>(&global_cfg).expect("whole-window mode must converge");
    assert!(global_report.epoch_losses.iter().all(|l| l.is_finite()));
    eprintln!(
        "check 6 PASS: accuracy {:.4} >= 0.90 in {} epochs (loss {:.4} -> {:.4}); whole-window loss finite at {:.4}",
        report.final_accuracy,
        report.epochs,
        report.epoch_losses.first().unwrap(),
        report.epoch_losses.last().unwrap(),
        global_report.epoch_losses.last().unwrap()
    );
}

/// 7. The ablation runner completes all four configurations on a shared
///    seed and emits the table, and the mode masks route exactly zero
///    gradient into pinned transform slots.
#[test]
fn check_7_ablation_completes_and_masks_hold() {
    let base = TrainConfig {
        seed: 11,
        epochs: 2,
        train_scenes: 8,
        eval_scenes: 4,
        proposals_per_scene: 3,
        region_rows: 2,
        region_cols: 2,
        sample_h: 3,
        sample_w: 3,
        descriptor_s: 4,
        ..TrainConfig::default()
    };
    let rows = run_ablation::<f64>(&base).expect("all four runs must complete");
    assert_eq!(rows.len(), 4);
    let names: Vec<_> = rows.iter().map(|r| r.name).collect();
    assert_eq!(names, ["global", "offset_only", "non_gating", "full"]);
    for row in &rows {
        assert!(
            row.report.epoch_losses.iter().all(|l| l.is_finite()),
            "{} diverged",
            row.name
        );
    }
    let table = ablation_table(&rows);
    assert_eq!(table.lines().count(), 5, "header plus one row per run");
    eprintln!("{table}");

    // pinned slots receive exactly zero gradient
    for (mode, pinned) in [
        (RsnMode::OffsetOnly, vec![0usize, 1, 3, 4, 6, 7]),
        (RsnMode::Affine, vec![6usize, 7]),
    ] {
        let mut rng = Rng::new(33);
        let init = cell_init_transforms::<f64>(2, 2).unwrap().remove(0);
        let mut head = RsnHead::<f64>::new(10, mode, init, &mut rng);
        let x: Vec<f64> = (0..10).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (_, cache) = head.forward(&x).unwrap();
        head.backward(&x, &cache, &[1.0; 8]).unwrap();
        for slot in 0..8 {
            let bias_grad = head.fc3.b.grad.data()[slot];
            let row = &head.fc3.w.grad.data()[slot * 256..(slot + 1) * 256];
            if pinned.contains(&slot) {
                assert_eq!(bias_grad, 0.0, "{mode:?} slot {slot} bias grad leaked");
                assert!(
                    row.iter().all(|&g| g == 0.0),
                    "{mode:?} slot {slot} weight grad leaked"
                );
            } else {
                assert_eq!(bias_grad, 1.0, "{mode:?} slot {slot} should pass through");
            }
        }
    }
    eprintln!("check 7 PASS: four configurations finished; pinned slots got exactly zero gradient");
}

/// 8. Two runs of the training command with the same seed write
///    byte-identical parameter and report files.
#[test]
fn check_8_training_binary_is_bit_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        seed: 123,
        epochs: 2,
        train_scenes: 6,
        eval_scenes: 3,
        proposals_per_scene: 3,
        region_rows: 2,
        region_cols: 2,
        sample_h: 3,
        sample_w: 3,
        descriptor_s: 4,
        ..TrainConfig::default()
    };
    let cfg_path = dir.path().join("bench.cfg");
    std::fs::write(&cfg_path, print_config(&cfg)).unwrap();

    let run_once = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let params = dir.path().join(format!("params_{tag}.bin"));
        let report = dir.path().join(format!("report_{tag}.bin"));
        let status = Command::new(env!("CARGO_BIN_EXE_regionlets"))
            .arg("train")
            .arg("--config")
            .arg(&cfg_path)
            .arg("--params-out")
            .arg(&params)
            .arg("--report-out")
            .arg(&report)
            .status()
            .expect("binary must launch");
        assert!(status.success(), "training run {tag} failed");
        (
            std::fs::read(&params).unwrap(),
            std::fs::read(&report).unwrap(),
        )
    };
    let (params_a, report_a) = run_once("a");
    let (params_b, report_b) = run_once("b");
    assert_eq!(params_a, params_b, "parameter files differ between runs");
    assert_eq!(report_a, report_b, "report files differ between runs");
    assert!(!params_a.is_empty() && !report_a.is_empty());
    eprintln!(
        "check 8 PASS: {} parameter bytes and {} report bytes identical across runs",
        params_a.len(),
        report_a.len()
    );
}
