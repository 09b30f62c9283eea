use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::linalg::{kyfan_antinorm_sq, truncate_rank};
use crate::net::{Activation, LayerSpec};

fn small_net(seed: u64) -> AutoencoderNet {
    AutoencoderNet::symmetric(4, &[5], 2, seed).unwrap()
}

fn linear_net(n: usize, d: usize, seed: u64) -> AutoencoderNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = vec![LayerSpec::new(n, d, Activation::Identity)];
    let dec = vec![LayerSpec::new(d, n, Activation::Identity)];
    let count = enc[0].param_count() + dec[0].param_count();
    let theta = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
    AutoencoderNet::new(enc, dec, theta).unwrap()
}

fn points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn noise(n: usize, count: usize, sigma: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    (0..count)
        .map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect())
        .collect()
}

fn mode(kind: CurvatureKind) -> CurvatureMode {
    CurvatureMode::new(kind, 0.1).unwrap()
}

/// Central differences over every parameter; returns the worst relative error.
fn worst_fd_error(
    net: &AutoencoderNet,
    analytic: &[f64],
    f: impl Fn(&AutoencoderNet) -> f64,
) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..net.param_count() {
        let mut th = net.theta().to_vec();
        th[i] += h;
        let plus = f(&net.with_theta(th.clone()).unwrap());
        th[i] -= 2.0 * h;
        let minus = f(&net.with_theta(th).unwrap());
        let fd = (plus - minus) / (2.0 * h);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((analytic[i] - fd).abs() / denom);
    }
    worst
}

#[test]
fn identity_autoencoder_has_zero_reconstruction() {
    let n = 3;
    let mut theta = Matrix::identity(n).into_vec();
    theta.extend(vec![0.0; n]);
    theta.extend(Matrix::identity(n).into_vec());
    theta.extend(vec![0.0; n]);
    let net = AutoencoderNet::new(
        vec![LayerSpec::new(n, n, Activation::Identity)],
        vec![LayerSpec::new(n, n, Activation::Identity)],
        theta,
    )
    .unwrap();
    assert_eq!(reconstruction_loss(&net, &points(n, 7, 1)).unwrap(), 0.0);
}

#[test]
fn zero_net_on_unit_vectors_has_unit_reconstruction() {
    let net = small_net(0)
        .with_theta(vec![0.0; small_net(0).param_count()])
        .unwrap();
    let batch: Vec<Vec<f64>> = points(4, 9, 2)
        .into_iter()
        .map(|p| {
            let s = crate::linalg::norm(&p);
            p.iter().map(|v| v / s).collect()
        })
        .collect();
    assert!((reconstruction_loss(&net, &batch).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn toy_projection_reconstruction_error_is_one_sixth() {
    // g(x, y) = (x, 0) on points (x, y [x > 0]) with x, y uniform on [-1, 1].
    let theta = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let net = AutoencoderNet::new(
        vec![LayerSpec::new(2, 1, Activation::Identity)],
        vec![LayerSpec::new(1, 2, Activation::Identity)],
        theta,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = 200_000;
    let batch: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            vec![x, if x > 0.0 { y } else { 0.0 }]
        })
        .collect();
    let mean = reconstruction_loss(&net, &batch).unwrap();
    let sq: Vec<f64> = batch.iter().map(|p| p[1] * p[1]).collect();
    let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    let se = (var / m as f64).sqrt();
    assert!((mean - 1.0 / 6.0).abs() < 3.0 * se, "mean {mean}, se {se}");
}

#[test]
fn reconstruction_errors() {
    let net = small_net(1);
    let empty: Vec<Vec<f64>> = Vec::new();
    assert!(reconstruction_loss(&net, &empty).is_err());
    assert!(matches!(
        reconstruction_loss(&net, &[vec![0.0; 3]]),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn curvature_mode_rejects_non_positive_sigma() {
    assert!(CurvatureMode::new(CurvatureKind::Kappa1, 0.0).is_err());
    assert!(CurvatureMode::new(CurvatureKind::Kappa1, -1.0).is_err());
    assert!(CurvatureMode::new(CurvatureKind::Kappa1, f64::NAN).is_err());
    assert!(CurvatureKind::from_index(3).is_err());
}

#[test]
fn linear_net_has_zero_kappa0_and_kappa1_and_affine_zero_kappa2() {
    let net = linear_net(4, 2, 3);
    let batch = points(4, 6, 4);
    let eps = noise(4, 6, 0.1, 5);
    for kind in [CurvatureKind::Kappa0, CurvatureKind::Kappa1] {
        assert!(kappa_term(&net, &batch, mode(kind), &eps).unwrap().value < 1e-28);
    }
    // Nonzero biases make the net affine.
    let mut th = net.theta().to_vec();
    let len = th.len();
    for v in &mut th[len - 4..] {
        *v = 0.3;
    }
    let affine = net.with_theta(th).unwrap();
    let v = kappa_term(&affine, &batch, mode(CurvatureKind::Kappa2), &eps).unwrap();
    assert!(v.value < 1e-24, "{}", v.value);
    assert_eq!(v.guarded, 0);
}

#[test]
fn kappa1_matches_direct_two_jacobian_evaluation() {
    let net = small_net(11);
    let batch = points(4, 5, 12);
    let eps = noise(4, 5, 0.2, 13);
    let direct: f64 = batch
        .iter()
        .zip(&eps)
        .map(|(y, e)| {
            let yp: Vec<f64> = y.iter().zip(e).map(|(a, b)| a + b).collect();
            net.jacobian(&yp)
                .unwrap()
                .sub(&net.jacobian(y).unwrap())
                .frobenius_norm_sq()
        })
        .sum::<f64>()
        / 5.0;
    let v = kappa_term(&net, &batch, mode(CurvatureKind::Kappa1), &eps)
        .unwrap()
        .value;
    assert!((v - direct).abs() < 1e-13 * direct.max(1.0));
    let scaled = kappa_term_scaled(&net, &batch, mode(CurvatureKind::Kappa1), &eps, true)
        .unwrap()
        .value;
    assert!((scaled - direct / 16.0).abs() < 1e-13);
}

#[test]
fn kappa2_and_kappa0_match_direct_evaluation() {
    let net = small_net(21);
    let batch = points(4, 5, 22);
    let eps = noise(4, 5, 0.2, 23);
    let mut k2 = 0.0;
    let mut k0 = 0.0;
    for (y, e) in batch.iter().zip(&eps) {
        let yp: Vec<f64> = y.iter().zip(e).map(|(a, b)| a + b).collect();
        let j = net.jacobian(y).unwrap();
        let je = j.matvec(e);
        let g0 = net.forward(y).unwrap().1;
        let g1 = net.forward(&yp).unwrap().1;
        let r: Vec<f64> = (0..4).map(|i| g1[i] - g0[i] - je[i]).collect();
        k2 += dot(&r, &r) / dot(&je, &je);
        k0 += net
            .encoder_jacobian(&yp)
            .unwrap()
            .sub(&net.encoder_jacobian(y).unwrap())
            .frobenius_norm_sq();
    }
    let v2 = kappa_term(&net, &batch, mode(CurvatureKind::Kappa2), &eps)
        .unwrap()
        .value;
    let v0 = kappa_term(&net, &batch, mode(CurvatureKind::Kappa0), &eps)
        .unwrap()
        .value;
    assert!((v2 - k2 / 5.0).abs() < 1e-12 * v2.max(1.0));
    assert!((v0 - k0 / 5.0).abs() < 1e-12 * v0.max(1.0));
}

#[test]
fn kappa2_guard_counts_degenerate_directions() {
    let net = small_net(2)
        .with_theta(vec![0.0; small_net(2).param_count()])
        .unwrap();
    let batch = points(4, 3, 1);
    let eps = noise(4, 3, 0.1, 2);
    let v = kappa_term(&net, &batch, mode(CurvatureKind::Kappa2), &eps).unwrap();
    assert_eq!(v.value, 0.0);
    assert_eq!(v.guarded, 3);
}

#[test]
fn kappa_requires_one_noise_vector_per_point() {
    let net = small_net(2);
    let batch = points(4, 3, 1);
    assert!(kappa_term(
        &net,
        &batch,
        mode(CurvatureKind::Kappa1),
        &noise(4, 2, 0.1, 2)
    )
    .is_err());
    assert!(kappa_term(
        &net,
        &batch,
        mode(CurvatureKind::Kappa1),
        &noise(3, 3, 0.1, 2)
    )
    .is_err());
}

#[test]
fn rank_penalty_closed_forms_and_errors() {
    let net = linear_net(4, 2, 8);
    let data = points(4, 10, 9);
    let anchors = vec![1, 4, 7];
    let zero = RankTargets::zeros(anchors.clone(), 4).unwrap();
    let j = net.jacobian(&data[0]).unwrap();
    let v = rank_penalty(&net, &data, &zero, &[1, 4, 7, 4]).unwrap();
    assert!((v - 4.0 * j.frobenius_norm_sq()).abs() < 1e-12 * v);
    let exact: Vec<Matrix> = anchors
        .iter()
        .map(|&a| net.jacobian(&data[a]).unwrap())
        .collect();
    let exact = RankTargets::new(anchors, exact, 2).unwrap();
    assert!(rank_penalty(&net, &data, &exact, &[1, 4, 7]).unwrap() < 1e-28);
    assert!(matches!(
        rank_penalty(&net, &data, &exact, &[2]),
        Err(Error::Domain(_))
    ));
}

#[test]
fn rank_targets_validate() {
    assert!(RankTargets::zeros(vec![1, 1], 3).is_err());
    let full = Matrix::identity(3);
    assert!(RankTargets::new(vec![0], vec![full.clone()], 2).is_err());
    assert!(RankTargets::new(vec![0], vec![full], 3).is_ok());
    assert!(RankTargets::new(vec![0, 1], vec![Matrix::zeros(3, 3)], 1).is_err());
}

#[test]
fn rank_targets_survive_serialization() {
    let t = RankTargets::zeros(vec![5, 2, 9], 2).unwrap();
    let s = serde_json::to_string(&t).unwrap();
    let back: RankTargets = serde_json::from_str(&s).unwrap();
    assert!(back.target(9).is_ok());
    assert!(back.target(3).is_err());
}

#[test]
fn exact_b_update_leaves_kyfan_residual() {
    let net = small_net(31);
    let data = points(4, 12, 32);
    let anchors: Vec<usize> = (0..12).step_by(2).collect();
    for k in 0..=4 {
        let js: Vec<Matrix> = anchors
            .iter()
            .map(|&a| net.jacobian(&data[a]).unwrap())
            .collect();
        let bs: Vec<Matrix> = js.iter().map(|j| truncate_rank(j, k).unwrap()).collect();
        let targets = RankTargets::new(anchors.clone(), bs, k).unwrap();
        let pen = rank_penalty(&net, &data, &targets, &anchors).unwrap();
        let expect: f64 = js.iter().map(|j| kyfan_antinorm_sq(j, k).unwrap()).sum();
        assert!(
            (pen - expect).abs() <= 1e-8 * expect.max(1e-12),
            "k={k}: {pen} vs {expect}"
        );
    }
}

#[test]
fn b_update_never_increases_objective() {
    let net = small_net(41);
    let data = points(4, 20, 42);
    let anchors: Vec<usize> = (0..20).step_by(3).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for k in 1..=3 {
        for trial in 0..3 {
            // Arbitrary rank-k prior targets.
            let old: Vec<Matrix> = anchors
                .iter()
                .map(|_| {
                    let r = Matrix::from_fn(4, 4, |_, _| rng.random_range(-2.0..2.0));
                    truncate_rank(&r, k).unwrap()
                })
                .collect();
            let old = RankTargets::new(anchors.clone(), old, k).unwrap();
            let new: Vec<Matrix> = anchors
                .iter()
                .map(|&a| truncate_rank(&net.jacobian(&data[a]).unwrap(), k).unwrap())
                .collect();
            let new = RankTargets::new(anchors.clone(), new, k).unwrap();
            let w = ObjectiveWeights {
                gamma: 0.5,
                lambda: 2.0,
                curvature: mode(CurvatureKind::Kappa1),
                kappa1_dim_scaling: false,
                contractive: 0.0,
            };
            let batch = Minibatch {
                ys: (0..20).collect(),
                noise: noise(4, 20, 0.1, trial),
                zs: anchors.clone(),
            };
            let before = objective(&net, &data, &old, &w, &batch).unwrap().objective;
            let after = objective(&net, &data, &new, &w, &batch).unwrap().objective;
            assert!(after <= before, "k={k}: {after} > {before}");
        }
    }
}

#[test]
fn objective_reduces_to_reconstruction_and_matches_termwise_sum() {
    let net = small_net(51);
    let data = points(4, 8, 52);
    let anchors = vec![0, 3, 5];
    let targets = RankTargets::zeros(anchors.clone(), 4).unwrap();
    let eps = noise(4, 4, 0.1, 53);
    let ys = vec![1, 2, 6, 7];
    let ypts: Vec<Vec<f64>> = ys.iter().map(|&i| data[i].clone()).collect();
    let batch = Minibatch {
        ys: ys.clone(),
        noise: eps.clone(),
        zs: vec![0, 5, 5],
    };
    let recon = reconstruction_loss(&net, &ypts).unwrap();

    let mut w = ObjectiveWeights::reconstruction_only(mode(CurvatureKind::Kappa1));
    assert_eq!(
        objective(&net, &data, &targets, &w, &batch)
            .unwrap()
            .objective,
        recon
    );

    let lin = linear_net(4, 2, 54);
    w.gamma = 3.0;
    let lrec = reconstruction_loss(&lin, &ypts).unwrap();
    assert!(
        (objective(&lin, &data, &targets, &w, &batch)
            .unwrap()
            .objective
            - lrec)
            .abs()
            < 1e-14
    );

    for kind in [
        CurvatureKind::Kappa0,
        CurvatureKind::Kappa1,
        CurvatureKind::Kappa2,
    ] {
        let w = ObjectiveWeights {
            gamma: 0.7,
            lambda: 1.3,
            curvature: mode(kind),
            kappa1_dim_scaling: false,
            contractive: 0.0,
        };
        let k = kappa_term(&net, &ypts, mode(kind), &eps).unwrap().value;
        let r = rank_penalty(&net, &data, &targets, &[0, 5, 5]).unwrap();
        let oracle = recon + 0.7 * k + 1.3 / 3.0 * r;
        let got = objective(&net, &data, &targets, &w, &batch).unwrap();
        assert!((got.objective - oracle).abs() < 1e-13 * oracle, "{kind:?}");
    }
}

#[test]
fn terms_are_invariant_under_batch_permutation() {
    let net = small_net(61);
    let data = points(4, 10, 62);
    let targets = RankTargets::zeros(vec![0, 1, 2, 3], 4).unwrap();
    let eps = noise(4, 6, 0.1, 63);
    let ys = vec![4, 5, 6, 7, 8, 9];
    let perm = [3, 0, 5, 1, 4, 2];
    let w = ObjectiveWeights {
        gamma: 0.4,
        lambda: 2.0,
        curvature: mode(CurvatureKind::Kappa2),
        kappa1_dim_scaling: false,
        contractive: 0.0,
    };
    let a = Minibatch {
        ys: ys.clone(),
        noise: eps.clone(),
        zs: vec![0, 1, 2, 3],
    };
    let b = Minibatch {
        ys: perm.iter().map(|&p| ys[p]).collect(),
        noise: perm.iter().map(|&p| eps[p].clone()).collect(),
        zs: vec![3, 1, 0, 2],
    };
    let va = objective(&net, &data, &targets, &w, &a).unwrap();
    let vb = objective(&net, &data, &targets, &w, &b).unwrap();
    assert!((va.objective - vb.objective).abs() < 1e-13 * va.objective);
    assert!((va.kappa - vb.kappa).abs() < 1e-13 * va.kappa);
}

#[test]
fn term_gradients_match_finite_differences() {
    let net = small_net(71);
    let batch = points(4, 4, 72);
    let eps = noise(4, 4, 0.3, 73);
    let (_, g) = reconstruction_grad(&net, &batch).unwrap();
    assert!(worst_fd_error(&net, &g, |n| reconstruction_loss(n, &batch).unwrap()) < 1e-6);
    for kind in [
        CurvatureKind::Kappa0,
        CurvatureKind::Kappa1,
        CurvatureKind::Kappa2,
    ] {
        let (_, g) = kappa_grad(&net, &batch, mode(kind), &eps).unwrap();
        let err = worst_fd_error(&net, &g, |n| {
            kappa_term(n, &batch, mode(kind), &eps).unwrap().value
        });
        assert!(err < 1e-5, "{kind:?}: {err}");
    }
    let (_, g) = contractive_grad(&net, &batch).unwrap();
    assert!(worst_fd_error(&net, &g, |n| contractive_penalty(n, &batch).unwrap()) < 1e-6);

    let data = points(4, 6, 74);
    let mut rng = ChaCha8Rng::seed_from_u64(75);
    let bs: Vec<Matrix> = (0..3)
        .map(|_| {
            truncate_rank(
                &Matrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0)),
                2,
            )
            .unwrap()
        })
        .collect();
    let targets = RankTargets::new(vec![0, 2, 4], bs, 2).unwrap();
    let (_, g) = rank_penalty_grad(&net, &data, &targets, &[0, 2, 4, 2]).unwrap();
    let err = worst_fd_error(&net, &g, |n| {
        rank_penalty(n, &data, &targets, &[0, 2, 4, 2]).unwrap()
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let net = small_net(81);
    let data = points(4, 6, 82);
    let targets = RankTargets::zeros(vec![0, 3], 4).unwrap();
    let batch = Minibatch {
        ys: vec![1, 2, 5],
        noise: noise(4, 3, 0.2, 83),
        zs: vec![0, 3, 3],
    };
    for kind in [
        CurvatureKind::Kappa0,
        CurvatureKind::Kappa1,
        CurvatureKind::Kappa2,
    ] {
        let w = ObjectiveWeights {
            gamma: 0.8,
            lambda: 1.5,
            curvature: mode(kind),
            kappa1_dim_scaling: true,
            contractive: 0.25,
        };
        let (v, g) = objective_grad(&net, &data, &targets, &w, &batch).unwrap();
        assert_eq!(v, objective(&net, &data, &targets, &w, &batch).unwrap());
        let err = worst_fd_error(&net, &g, |n| {
            objective(n, &data, &targets, &w, &batch).unwrap().objective
        });
        assert!(err < 1e-5, "{kind:?}: {err}");
    }
}
