use super::*;
use crate::linalg::svd;

fn linear_net(n: usize, d: usize, we: &Matrix, wd: &Matrix) -> AutoencoderNet {
    let mut theta = we.as_slice().to_vec();
    theta.extend(vec![0.0; d]);
    theta.extend_from_slice(wd.as_slice());
    theta.extend(vec![0.0; n]);
    AutoencoderNet::new(
        vec![LayerSpec::new(n, d, Activation::Identity)],
        vec![LayerSpec::new(d, n, Activation::Identity)],
        theta,
    )
    .unwrap()
}

fn seeded_point(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Straightforward re-evaluation: loops over layers with no tangent machinery.
fn naive_forward(net: &AutoencoderNet, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let mut off = 0;
    let th = net.theta();
    for l in net.encoder_layers().iter().chain(net.decoder_layers()) {
        let mut next = Vec::new();
        for i in 0..l.out_dim {
            let mut z = th[off + l.in_dim * l.out_dim + i];
            for j in 0..l.in_dim {
                z += th[off + i * l.in_dim + j] * a[j];
            }
            next.push(match l.activation {
                Activation::Tanh => z.tanh(),
                Activation::Identity => z,
            });
        }
        off += l.param_count();
        a = next;
    }
    a
}

fn fd_jacobian(net: &AutoencoderNet, x: &[f64], h: f64) -> Matrix {
    let n = x.len();
    let mut j = Matrix::zeros(n, n);
    let mut p = x.to_vec();
    for c in 0..n {
        p[c] = x[c] + h;
        let plus = net.forward(&p).unwrap().1;
        p[c] = x[c] - h;
        let minus = net.forward(&p).unwrap().1;
        p[c] = x[c];
        for r in 0..n {
            j[(r, c)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    j
}

#[test]
fn zero_theta_linear_net_outputs_zero() {
    let net = linear_net(3, 2, &Matrix::zeros(2, 3), &Matrix::zeros(3, 2));
    let (code, out) = net.forward(&[0.4, -1.0, 2.0]).unwrap();
    assert_eq!(code, vec![0.0, 0.0]);
    assert_eq!(out, vec![0.0, 0.0, 0.0]);
}

#[test]
fn identity_autoencoder_reproduces_input() {
    let net = linear_net(3, 3, &Matrix::identity(3), &Matrix::identity(3));
    let x = [0.3, -0.7, 1.5];
    assert_eq!(net.forward(&x).unwrap().1, x.to_vec());
}

#[test]
fn forward_matches_naive_reimplementation() {
    let net = AutoencoderNet::symmetric(5, &[7, 6], 3, 21).unwrap();
    for s in 0..5 {
        let x = seeded_point(5, s);
        let out = net.forward(&x).unwrap().1;
        let naive = naive_forward(&net, &x);
        for (a, b) in out.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn dimension_and_finiteness_errors() {
    let net = AutoencoderNet::symmetric(3, &[4], 2, 0).unwrap();
    assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Dimension(_))));
    assert!(matches!(
        net.forward(&[1.0, f64::NAN, 0.0]),
        Err(Error::NonFinite(_))
    ));
    assert!(AutoencoderNet::new(
        vec![LayerSpec::new(3, 2, Activation::Tanh)],
        vec![LayerSpec::new(3, 3, Activation::Identity)],
        vec![0.0; 8 + 12],
    )
    .is_err());
}

#[test]
fn linear_jacobian_is_weight_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let we = Matrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
    let wd = Matrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
    let net = linear_net(4, 2, &we, &wd);
    let j = net.jacobian(&[0.1, 0.2, 0.3, 0.4]).unwrap();
    assert!(j.sub(&wd.matmul(&we)).max_abs() < 1e-15);
}

#[test]
fn constant_net_has_zero_jacobian() {
    let mut net = AutoencoderNet::symmetric(3, &[4], 2, 5).unwrap();
    let total = net.param_count();
    // Final decoder layer: weights 3x4 then bias 3.
    for v in &mut net.theta_mut()[total - 15..total - 3] {
        *v = 0.0;
    }
    let j = net.jacobian(&[0.5, -0.5, 0.2]).unwrap();
    assert_eq!(j.max_abs(), 0.0);
}

#[test]
fn jacobian_factorization_matches_finite_differences() {
    for seed in 0..6 {
        let net = AutoencoderNet::symmetric(4, &[6], 3, seed).unwrap();
        let x = seeded_point(4, 100 + seed);
        let pair = net.input_jacobians(&x).unwrap();
        let fd = fd_jacobian(&net, &x, 1e-5);
        let rel = pair.product().sub(&fd).frobenius_norm() / fd.frobenius_norm();
        assert!(rel < 1e-5, "seed {seed}: rel {rel}");
        assert!(pair.product().sub(&net.jacobian(&x).unwrap()).max_abs() < 1e-14);
    }
}

#[test]
fn jacobian_rank_is_capped_by_code_dimension() {
    let net = AutoencoderNet::symmetric(6, &[8], 2, 9).unwrap();
    for s in 0..4 {
        let j = net.jacobian(&seeded_point(6, s)).unwrap();
        let sv = svd(&j).unwrap().singular_values;
        assert!(sv[2] / sv[0] < 1e-10, "{sv:?}");
    }
}

#[test]
fn forward_is_bit_deterministic() {
    let a = AutoencoderNet::symmetric(4, &[5], 2, 77).unwrap();
    let b = AutoencoderNet::symmetric(4, &[5], 2, 77).unwrap();
    let x = seeded_point(4, 3);
    assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    assert_eq!(a.jacobian(&x).unwrap(), b.jacobian(&x).unwrap());
}

#[test]
fn linear_net_hessians_vanish() {
    let net = linear_net(
        3,
        2,
        &Matrix::from_fn(2, 3, |i, j| (i + j) as f64),
        &Matrix::from_fn(3, 2, |i, j| i as f64 - j as f64),
    );
    for h in net.component_hessians(&[0.2, 0.1, -0.3]).unwrap() {
        assert!(h.max_abs() < 1e-9);
    }
}

#[test]
fn scalar_tanh_hessian_matches_closed_form() {
    // g(x) = tanh(w x) through a 1-1 encoder and an identity 1-1 decoder.
    let w = 1.7;
    let net = AutoencoderNet::new(
        vec![LayerSpec::new(1, 1, Activation::Tanh)],
        vec![LayerSpec::new(1, 1, Activation::Identity)],
        vec![w, 0.0, 1.0, 0.0],
    )
    .unwrap();
    for x in [-0.8, 0.0, 0.3, 1.1] {
        let h = net.component_hessians(&[x]).unwrap()[0][(0, 0)];
        let t = (w * x).tanh();
        let exact = -2.0 * t * (1.0 - t * t) * w * w;
        assert!((h - exact).abs() < 1e-7, "x={x}: {h} vs {exact}");
    }
}

#[test]
fn hessians_are_symmetric_and_capture_taylor_remainder() {
    let net = AutoencoderNet::symmetric(3, &[5], 2, 13).unwrap();
    let x = seeded_point(3, 8);
    let hs = net.component_hessians(&x).unwrap();
    for h in &hs {
        assert!(h.sub(&h.transpose()).max_abs() < 1e-6);
    }
    let j = net.jacobian(&x).unwrap();
    let g0 = net.forward(&x).unwrap().1;
    let dir = [0.6, -0.3, 0.74];
    let mut errs = Vec::new();
    for k in 0..4 {
        let s = 0.05 / f64::powi(2.0, k);
        let eps: Vec<f64> = dir.iter().map(|d| d * s).collect();
        let xp: Vec<f64> = x.iter().zip(&eps).map(|(a, b)| a + b).collect();
        let g1 = net.forward(&xp).unwrap().1;
        let je = j.matvec(&eps);
        let mut err = 0.0f64;
        for i in 0..3 {
            let quad = 0.5 * crate::linalg::dot(&eps, &hs[i].matvec(&eps));
            err = err.max((g1[i] - g0[i] - je[i] - quad).abs());
        }
        errs.push(err);
    }
    // Remainder after the quadratic term is third order: halving eps shrinks it ~8x.
    for w in errs.windows(2) {
        assert!(w[1] < w[0] / 5.0, "{errs:?}");
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let net = AutoencoderNet::symmetric(4, &[7], 3, 1234).unwrap();
    let s = net.to_checkpoint_string().unwrap();
    let back = AutoencoderNet::from_checkpoint_str(&s).unwrap();
    assert_eq!(net, back);
    for (a, b) in net.theta().iter().zip(back.theta()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert!(AutoencoderNet::from_checkpoint_str(
        "{\"format\":\"other\",\"version\":1,\"encoder\":[],\"decoder\":[],\"theta\":[]}"
    )
    .is_err());
}

#[test]
fn backward_matches_finite_differences_for_mixed_cotangents() {
    // L = c . g(x) + <C, J_g(x)>_F + q . e(x) + <Q, J_e(x)>_F
    let net = AutoencoderNet::symmetric(3, &[4], 2, 31).unwrap();
    let x = seeded_point(3, 2);
    let c = vec![0.3, -0.2, 0.9];
    let cm = Matrix::from_fn(3, 3, |i, j| (i as f64 - j as f64) * 0.4 + 0.1);
    let q = vec![0.5, -1.0];
    let qm = Matrix::from_fn(2, 3, |i, j| 0.2 * (i + 2 * j) as f64 - 0.3);
    let loss = |n: &AutoencoderNet| {
        let t = n.trace(&x, Some(Matrix::identity(3))).unwrap();
        crate::linalg::dot(&c, t.output())
            + crate::linalg::dot(cm.as_slice(), t.output_tangent().unwrap().as_slice())
            + crate::linalg::dot(&q, t.code())
            + crate::linalg::dot(qm.as_slice(), t.code_tangent().unwrap().as_slice())
    };
    let t = net.trace(&x, Some(Matrix::identity(3))).unwrap();
    let mut grad = vec![0.0; net.param_count()];
    net.backward(
        &t,
        NetCotangent {
            output: Some(c.clone()),
            output_tangent: Some(cm.clone()),
            code: Some(q.clone()),
            code_tangent: Some(qm.clone()),
        },
        &mut grad,
    );
    let h = 1e-5;
    for i in 0..net.param_count() {
        let mut th = net.theta().to_vec();
        th[i] += h;
        let lp = loss(&net.with_theta(th.clone()).unwrap());
        th[i] -= 2.0 * h;
        let lm = loss(&net.with_theta(th).unwrap());
        let fd = (lp - lm) / (2.0 * h);
        assert!(
            (fd - grad[i]).abs() <= 1e-7 * (1.0 + fd.abs()),
            "param {i}: {} vs {fd}",
            grad[i]
        );
    }
}
