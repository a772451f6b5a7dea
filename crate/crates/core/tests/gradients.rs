//! Finite-difference verification of every backward pass, stage by stage
//! and through the full extractor.
//!
//! The sampler is piecewise linear in its coordinates, so its cases pin the
//! transforms to values whose sample points sit well away from the lattice;
//! each case asserts that margin before differencing. Smooth layers use a
//! small step and the default relative tolerance.

use regionlets::geometry::{cell_init_transforms, ProjectiveTransform, RegionOfInterest};
use regionlets::net::{
    coord_eps, fd_check, fd_check_at, smooth_eps, Conv2d, Linear, Rng, Tensor,
};
use regionlets::regionlet::{
    GatingLayer, PoolMode, RegionletConfig, RegionletModule, RsnHead, RsnMode,
};
use regionlets::sampler::{
    sample_backward_input, sample_backward_theta, sample_forward, FeatureMap, SampledRegion,
};
use regionlets::{net, Result};

fn rand_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

/// Smallest distance of any sample coordinate from an integer lattice line.
fn lattice_margin(region: &SampledRegion<f64>) -> f64 {
    region
        .records
        .iter()
        .map(|r| {
            let fx = r.x_abs.rem_euclid(1.0);
            let fy = r.y_abs.rem_euclid(1.0);
            fx.min(1.0 - fx).min(fy.min(1.0 - fy))
        })
        .fold(f64::INFINITY, f64::min)
}

struct SamplerCase {
    u: FeatureMap<f64>,
    theta: [f64; 8],
    roi: RegionOfInterest<f64>,
    grad_v: Vec<f64>,
}

fn sampler_cases() -> Vec<SamplerCase> {
    let mut rng = Rng::new(2024);
    // hand-picked transforms: shifted, sheared, anisotropic, perspective
    let thetas: [[f64; 8]; 4] = [
        [0.63, 0.00, 0.217, 0.00, 0.58, -0.143, 0.00, 0.00],
        [0.52, 0.11, -0.083, -0.07, 0.66, 0.291, 0.00, 0.00],
        [0.71, 0.00, 0.137, 0.00, 0.44, 0.059, 0.13, -0.09],
        [0.47, -0.13, 0.311, 0.09, 0.53, -0.227, -0.17, 0.11],
    ];
    thetas
        .iter()
        .map(|theta| {
            let u = FeatureMap::from_vec(2, 7, 7, rand_vec(&mut rng, 2 * 7 * 7, -2.0, 2.0))
                .unwrap();
            let grad_v = rand_vec(&mut rng, 2 * 4 * 4, -1.0, 1.0);
            let t = ProjectiveTransform::from_free(*theta);
            // slide the window until every sample point clears the lattice
            let roi = (0..100)
                .map(|k| {
                    RegionOfInterest::new(
                        0.311 + k as f64 * 0.0137,
                        0.723 + k as f64 * 0.0119,
                        5.13,
                        4.87,
                    )
                    .unwrap()
                })
                .find(|roi| {
                    let region = sample_forward(&u, &t, roi, 4, 4).unwrap();
                    lattice_margin(&region) > 6e-3
                })
                .expect("an off-lattice window exists");
            SamplerCase {
                u,
                theta: *theta,
                roi,
                grad_v,
            }
        })
        .collect()
}

fn weighted_sum(u: &FeatureMap<f64>, theta: &[f64], case: &SamplerCase) -> Result<f64> {
    let t = ProjectiveTransform::from_free([
        theta[0], theta[1], theta[2], theta[3], theta[4], theta[5], theta[6], theta[7],
    ]);
    let region = sample_forward(u, &t, &case.roi, 4, 4)?;
    Ok(region
        .values
        .iter()
        .zip(&case.grad_v)
        .map(|(v, g)| v * g)
        .sum())
}

#[test]
fn sampler_transform_gradients_verify() {
    for case in sampler_cases() {
        let t = ProjectiveTransform::from_free(case.theta);
        let region = sample_forward(&case.u, &t, &case.roi, 4, 4).unwrap();
        assert!(
            lattice_margin(&region) > 5e-3,
            "case too close to a kink: {}",
            lattice_margin(&region)
        );
        assert!(region.records.iter().all(|r| r.z.abs() > 0.3 && !r.clamped));
        let analytic = sample_backward_theta(&case.u, &region, &case.grad_v).unwrap();
        let err = fd_check(
            |p| weighted_sum(&case.u, p, &case),
            &case.theta,
            &analytic,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "transform gradient err {err}");
    }
}

#[test]
fn sampler_input_gradients_verify() {
    let mut rng = Rng::new(7);
    for case in sampler_cases() {
        let t = ProjectiveTransform::from_free(case.theta);
        let region = sample_forward(&case.u, &t, &case.roi, 4, 4).unwrap();
        let analytic = sample_backward_input(&case.u, &region, &case.grad_v).unwrap();
        let n = case.u.data().len();
        let indices: Vec<usize> = (0..15).map(|_| rng.below(n)).collect();
        let err = fd_check_at(
            |p| {
                let u = FeatureMap::from_vec(2, 7, 7, p.to_vec())?;
                weighted_sum(&u, &case.theta, &case)
            },
            case.u.data(),
            analytic.data(),
            coord_eps(),
            &indices,
        )
        .unwrap();
        // sampling is linear in the map, so differences are exact to roundoff
        assert!(err < 1e-8, "input gradient err {err}");
    }
}

#[test]
fn linear_layer_gradients_verify() {
    let mut rng = Rng::new(11);
    let mut lin = Linear::<f64>::init_uniform(4, 3, &mut rng);
    let x = rand_vec(&mut rng, 4, -1.0, 1.0);
    let g = rand_vec(&mut rng, 3, -1.0, 1.0);
    let _y = lin.forward(&x).unwrap();
    let grad_x = lin.backward(&x, &g).unwrap();
    let loss = |lin: &Linear<f64>, x: &[f64]| -> Result<f64> {
        Ok(lin.forward(x)?.iter().zip(&g).map(|(y, g)| y * g).sum())
    };

    let err = fd_check(|p| loss(&lin, p), &x, &grad_x, smooth_eps()).unwrap();
    assert!(err < 1e-7, "input err {err}");

    let w0 = lin.w.value.data().to_vec();
    let gw = lin.w.grad.data().to_vec();
    let mut probe = lin.clone();
    let err = fd_check(
        |p| {
            probe.w.value.data_mut().copy_from_slice(p);
            loss(&probe, &x)
        },
        &w0,
        &gw,
        smooth_eps(),
    )
    .unwrap();
    assert!(err < 1e-7, "weight err {err}");

    let b0 = lin.b.value.data().to_vec();
    let gb = lin.b.grad.data().to_vec();
    let mut probe = lin.clone();
    let err = fd_check(
        |p| {
            probe.b.value.data_mut().copy_from_slice(p);
            loss(&probe, &x)
        },
        &b0,
        &gb,
        smooth_eps(),
    )
    .unwrap();
    assert!(err < 1e-7, "bias err {err}");
}

#[test]
fn conv_gradients_verify() {
    let mut rng = Rng::new(13);
    let mut conv = Conv2d::<f64>::init_uniform(1, 2, 3, 2, &mut rng);
    let x = Tensor::from_vec(&[1, 5, 5], rand_vec(&mut rng, 25, -1.0, 1.0)).unwrap();
    let y = conv.forward(&x).unwrap();
    let g = Tensor::from_vec(&[2, 2, 2], rand_vec(&mut rng, y.len(), -1.0, 1.0)).unwrap();
    let grad_x = conv.backward(&x, &g).unwrap();
    let loss = |conv: &Conv2d<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = conv.forward(x)?;
        Ok(y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum())
    };

    let err = fd_check(
        |p| {
            let x = Tensor::from_vec(&[1, 5, 5], p.to_vec())?;
            loss(&conv, &x)
        },
        x.data(),
        grad_x.data(),
        smooth_eps(),
    )
    .unwrap();
    assert!(err < 1e-7, "input err {err}");

    let w0 = conv.w.value.data().to_vec();
    let gw = conv.w.grad.data().to_vec();
    let mut probe = conv.clone();
    let err = fd_check(
        |p| {
            probe.w.value.data_mut().copy_from_slice(p);
            loss(&probe, &x)
        },
        &w0,
        &gw,
        smooth_eps(),
    )
    .unwrap();
    assert!(err < 1e-7, "weight err {err}");

    let b0 = conv.b.value.data().to_vec();
    let gb = conv.b.grad.data().to_vec();
    let mut probe = conv.clone();
    let err = fd_check(
        |p| {
            probe.b.value.data_mut().copy_from_slice(p);
            loss(&probe, &x)
        },
        &b0,
        &gb,
        smooth_eps(),
    )
    .unwrap();
    assert!(err < 1e-7, "bias err {err}");
}

#[test]
fn loss_gradients_verify() {
    let mut rng = Rng::new(17);
    let logits = rand_vec(&mut rng, 5, -2.0, 2.0);
    let (_, grad) = net::softmax_cross_entropy(&logits, 2).unwrap();
    let err = fd_check(
        |p| Ok(net::softmax_cross_entropy(p, 2)?.0),
        &logits,
        &grad,
        smooth_eps(),
    )
    .unwrap();
    assert!(err < 1e-6, "cross entropy err {err}");

    let pred = rand_vec(&mut rng, 4, -2.0, 2.0);
    let target = rand_vec(&mut rng, 4, -2.0, 2.0);
    let (_, grad) = net::smooth_l1(&pred, &target).unwrap();
    let err = fd_check(
        |p| Ok(net::smooth_l1(p, &target)?.0),
        &pred,
        &grad,
        smooth_eps(),
    )
    .unwrap();
    assert!(err < 1e-6, "smooth l1 err {err}");
}

#[test]
fn gate_gradients_verify() {
    let mut rng = Rng::new(19);
    let n = 6;
    let mut gate = GatingLayer::<f64>::zeros(n);
    for w in gate.fc.w.value.data_mut() {
        *w = rng.uniform(-0.5, 0.5);
    }
    for b in gate.fc.b.value.data_mut() {
        *b = rng.uniform(-0.2, 0.2);
    }
    let v = rand_vec(&mut rng, n, -1.5, 1.5);
    let g = rand_vec(&mut rng, n, -1.0, 1.0);
    let loss = |gate: &GatingLayer<f64>, v: &[f64]| -> Result<f64> {
        let (gated, _) = gate.forward(v)?;
        Ok(gated.iter().zip(&g).map(|(a, b)| a * b).sum())
    };
    let (_, weights) = gate.forward(&v).unwrap();
    let grad_v = gate.backward(&v, &weights, &g).unwrap();

    let err = fd_check(|p| loss(&gate, p), &v, &grad_v, smooth_eps()).unwrap();
    assert!(err < 1e-6, "gate input err {err}");

    let w0 = gate.fc.w.value.data().to_vec();
    let gw = gate.fc.w.grad.data().to_vec();
    let mut probe = gate.clone();
    let err = fd_check(
        |p| {
            probe.fc.w.value.data_mut().copy_from_slice(p);
            loss(&probe, &v)
        },
        &w0,
        &gw,
        smooth_eps(),
    )
    .unwrap();
    assert!(err < 1e-6, "gate weight err {err}");
}

#[test]
fn selection_head_gradients_verify() {
    let mut rng = Rng::new(23);
    let d_in = 10;
    let init = cell_init_transforms::<f64>(2, 2).unwrap()[1];
    let mut head = RsnHead::new(d_in, RsnMode::Projective, init, &mut rng);
    // move the last layer off its zero init so all paths carry signal,
    // keeping raw outputs strictly inside the clamp
    for w in head.fc3.w.value.data_mut() {
        *w = rng.uniform(-0.01, 0.01);
    }
    let x = rand_vec(&mut rng, d_in, -1.0, 1.0);
    let g: [f64; 8] = std::array::from_fn(|_| rng.uniform(-1.0, 1.0));
    let loss = |head: &RsnHead<f64>, x: &[f64]| -> Result<f64> {
        let (theta, _) = head.forward(x)?;
        Ok(theta.free().iter().zip(&g).map(|(t, g)| t * g).sum())
    };
    let (theta, cache) = head.forward(&x).unwrap();
    assert!(theta.free().iter().all(|t| t.abs() < 0.999), "clamped case");
    let grad_x = head.backward(&x, &cache, &g).unwrap();

    let err = fd_check(|p| loss(&head, p), &x, &grad_x, smooth_eps()).unwrap();
    assert!(err < 1e-5, "descriptor err {err}");

    // every layer's parameters, probed on a sampled index subset
    let mut idx_rng = Rng::new(29);
    type Getter = fn(&mut RsnHead<f64>) -> &mut regionlets::net::Parameter<f64>;
    let groups: [(&str, Getter); 6] = [
        ("fc1 w", |h| &mut h.fc1.w),
        ("fc1 b", |h| &mut h.fc1.b),
        ("fc2 w", |h| &mut h.fc2.w),
        ("fc2 b", |h| &mut h.fc2.b),
        ("fc3 w", |h| &mut h.fc3.w),
        ("fc3 b", |h| &mut h.fc3.b),
    ];
    for (label, get) in groups {
        let v0 = get(&mut head).value.data().to_vec();
        let gv = get(&mut head).grad.data().to_vec();
        let n = v0.len();
        let indices: Vec<usize> = (0..8.min(n)).map(|_| idx_rng.below(n)).collect();
        let mut probe = head.clone();
        let err = fd_check_at(
            |p| {
                get(&mut probe).value.data_mut().copy_from_slice(p);
                loss(&probe, &x)
            },
            &v0,
            &gv,
            smooth_eps(),
            &indices,
        )
        .unwrap();
        assert!(err < 1e-5, "{label} err {err}");
    }
}

#[test]
fn full_extractor_gradients_verify() {
    let mut rng = Rng::new(31);
    let cfg = RegionletConfig {
        region_rows: 2,
        region_cols: 2,
        sample_h: 3,
        sample_w: 3,
        mode: RsnMode::Projective,
        gating: true,
        shared_gate: true,
        pool: PoolMode::Avg,
    };
    let d_in = 12;
    let mut module = RegionletModule::<f64>::new(d_in, 2, &cfg, &mut rng).unwrap();
    // nudge the selection heads off their zero init so the transform path
    // carries signal and no sample point sits on the lattice
    for head in &mut module.heads {
        for w in head.fc3.w.value.data_mut() {
            *w = rng.uniform(-0.02, 0.02);
        }
    }
    let u = FeatureMap::from_vec(2, 7, 7, rand_vec(&mut rng, 2 * 7 * 7, -2.0, 2.0)).unwrap();
    let roi = RegionOfInterest::new(0.317, 0.823, 4.63, 4.89).unwrap();
    let x = rand_vec(&mut rng, d_in, -1.0, 1.0);
    let g = rand_vec(&mut rng, module.feature_len(), -1.0, 1.0);

    let (_, cache) = module.forward(&u, &roi, &x).unwrap();
    for rc in &cache.per_region {
        assert!(
            lattice_margin(&rc.region) > 1e-3,
            "sample points too close to a kink"
        );
    }
    let (grad_u, grad_x) = module.backward(&u, &x, &cache, &g).unwrap();

    let loss = |module: &RegionletModule<f64>, u: &FeatureMap<f64>, x: &[f64]| -> Result<f64> {
        let (feature, _) = module.forward(u, &roi, x)?;
        Ok(feature.iter().zip(&g).map(|(a, b)| a * b).sum())
    };

    // map values: linear path, checked on a subset
    let mut idx_rng = Rng::new(37);
    let n = u.data().len();
    let indices: Vec<usize> = (0..12).map(|_| idx_rng.below(n)).collect();
    let err = fd_check_at(
        |p| {
            let u2 = FeatureMap::from_vec(2, 7, 7, p.to_vec())?;
            loss(&module, &u2, &x)
        },
        u.data(),
        grad_u.data(),
        coord_eps(),
        &indices,
    )
    .unwrap();
    assert!(err < 1e-6, "map gradient err {err}");

    // descriptor: flows through every head into the transforms
    let err = fd_check(|p| loss(&module, &u, p), &x, &grad_x, smooth_eps()).unwrap();
    assert!(err < 1e-4, "descriptor gradient err {err}");

    // direct transform path: the last layer's bias shifts the predicted
    // parameters one for one
    for k in 0..module.heads.len() {
        let b0 = module.heads[k].fc3.b.value.data().to_vec();
        let gb = module.heads[k].fc3.b.grad.data().to_vec();
        let mut probe = module.clone();
        let indices: Vec<usize> = (0..8).collect();
        let err = fd_check_at(
            |p| {
                probe.heads[k].fc3.b.value.data_mut().copy_from_slice(p);
                loss(&probe, &u, &x)
            },
            &b0,
            &gb,
            smooth_eps(),
            &indices,
        )
        .unwrap();
        assert!(err < 1e-4, "head {k} transform-bias err {err}");
    }

    // gate parameters
    let w0 = module.gates[0].fc.w.value.data().to_vec();
    let gw = module.gates[0].fc.w.grad.data().to_vec();
    let n = w0.len();
    let indices: Vec<usize> = (0..10).map(|_| idx_rng.below(n)).collect();
    let mut probe = module.clone();
    let err = fd_check_at(
        |p| {
            probe.gates[0].fc.w.value.data_mut().copy_from_slice(p);
            loss(&probe, &u, &x)
        },
        &w0,
        &gw,
        smooth_eps(),
        &indices,
    )
    .unwrap();
    assert!(err < 1e-5, "gate weight err {err}");
}
