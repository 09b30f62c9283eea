//! Self-contained numerical checks: parameter gradients against central
//! differences, the Eckart–Young identity, the sphere curvature oracle and the
//! encoder/decoder curvature bound.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{theorem4_bound_with, theorem5_check, SphereMap, Theorem4Options};
use crate::linalg::{kyfan_antinorm_sq, norm, svd, truncate_rank, Matrix};
use crate::losses::{
    contractive_grad, contractive_penalty, kappa_grad, kappa_term, objective, objective_grad,
    rank_penalty, rank_penalty_grad, reconstruction_grad, reconstruction_loss, CurvatureKind,
    CurvatureMode, Minibatch, ObjectiveWeights, RankTargets,
};
use crate::net::AutoencoderNet;

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const ECKART_YOUNG_TOLERANCE: f64 = 1e-9;
pub const SPHERE_TOLERANCE: f64 = 0.05;
pub const THEOREM5_TOLERANCE: f64 = 1e-3;
/// Outer step of the extrapolated central difference.
pub const FD_STEP: f64 = 1e-3;
/// Smallest denominator of a relative gradient error.
pub const GRADIENT_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub quantity: String,
    pub tolerance: f64,
    pub observed: f64,
    pub passed: bool,
}

impl CheckOutcome {
    /// Passes when `observed` is finite and at most `tolerance`.
    pub fn at_most(
        name: impl Into<String>,
        quantity: impl Into<String>,
        observed: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            name: name.into(),
            quantity: quantity.into(),
            tolerance,
            observed,
            passed: observed.is_finite() && observed <= tolerance,
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} = {:.3e} (tolerance {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.quantity,
            self.observed,
            self.tolerance
        )
    }
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

/// Worst relative error `|a − fd| / max(|a|, |fd|, floor)` over every
/// coordinate of `theta`. `fd` is the Richardson extrapolation
/// `(4 D(h/2) − D(h)) / 3` of central differences `D`, accurate to `O(h⁴)`.
pub fn fd_gradient_error(
    theta: &[f64],
    analytic: &[f64],
    f: impl Fn(&[f64]) -> Result<f64>,
) -> Result<f64> {
    if theta.len() != analytic.len() {
        return Err(Error::Dimension(format!(
            "{} parameters, {} gradient entries",
            theta.len(),
            analytic.len()
        )));
    }
    let mut worst: f64 = 0.0;
    let mut p = theta.to_vec();
    let mut central = |i: usize, h: f64| -> Result<f64> {
        let t = p[i];
        p[i] = t + h;
        let plus = f(&p)?;
        p[i] = t - h;
        let minus = f(&p)?;
        p[i] = t;
        Ok((plus - minus) / (2.0 * h))
    };
    for (i, &a) in analytic.iter().enumerate() {
        let fd = (4.0 * central(i, FD_STEP / 2.0)? - central(i, FD_STEP)?) / 3.0;
        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(GRADIENT_FLOOR);
        if !err.is_finite() {
            return Err(Error::NonFinite(format!("gradient check at parameter {i}")));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

/// A seeded small autoencoder with its test inputs.
struct Fixture {
    net: AutoencoderNet,
    points: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
    targets: RankTargets,
    batch: Minibatch,
}

fn fixture(seed: u64) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=6);
    let code = rng.random_range(1..=3.min(n - 1));
    let hidden: Vec<usize> = (0..rng.random_range(1..=2))
        .map(|_| rng.random_range(3..=8))
        .collect();
    let net = AutoencoderNet::symmetric(n, &hidden, code, rng.random())?;
    let count = 8;
    let points: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let normal = Normal::new(0.0, 0.3).expect("valid sigma");
    let noise: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect())
        .collect();
    let k = rng.random_range(1..=code);
    let anchors = vec![0, 2, 5, 7];
    let matrices = anchors
        .iter()
        .map(|_| {
            truncate_rank(
                &Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng)),
                k,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = RankTargets::new(anchors.clone(), matrices, k)?;
    let zs = (0..5)
        .map(|_| anchors[rng.random_range(0..anchors.len())])
        .collect();
    let batch = Minibatch {
        ys: (0..count).collect(),
        noise: noise.clone(),
        zs,
    };
    Ok(Fixture {
        net,
        points,
        noise,
        targets,
        batch,
    })
}

/// Gradient checks of every loss term and of the full objective in all
/// curvature modes, on `nets` seeded networks.
pub fn gradient_checks(seed: u64, nets: usize) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let q = "max relative gradient error";
    for i in 0..nets {
        let fx = fixture(seed.wrapping_mul(1_000_003).wrapping_add(i as u64))?;
        let net = &fx.net;
        let with = |th: &[f64]| net.with_theta(th.to_vec());
        let tag = format!("net {i} ({} params)", net.param_count());

        let (_, g) = reconstruction_grad(net, &fx.points)?;
        let e = fd_gradient_error(net.theta(), &g, |th| {
            reconstruction_loss(&with(th)?, &fx.points)
        })?;
        out.push(CheckOutcome::at_most(
            format!("{tag} reconstruction"),
            q,
            e,
            GRADIENT_TOLERANCE,
        ));

        let (_, g) = contractive_grad(net, &fx.points)?;
        let e = fd_gradient_error(net.theta(), &g, |th| {
            contractive_penalty(&with(th)?, &fx.points)
        })?;
        out.push(CheckOutcome::at_most(
            format!("{tag} contractive"),
            q,
            e,
            GRADIENT_TOLERANCE,
        ));

        let (_, g) = rank_penalty_grad(net, &fx.points, &fx.targets, &fx.batch.zs)?;
        let e = fd_gradient_error(net.theta(), &g, |th| {
            rank_penalty(&with(th)?, &fx.points, &fx.targets, &fx.batch.zs)
        })?;
        out.push(CheckOutcome::at_most(
            format!("{tag} rank penalty"),
            q,
            e,
            GRADIENT_TOLERANCE,
        ));

        for kind in [
            CurvatureKind::Kappa0,
            CurvatureKind::Kappa1,
            CurvatureKind::Kappa2,
        ] {
            let mode = CurvatureMode::new(kind, 0.3)?;
            let (_, g) = kappa_grad(net, &fx.points, mode, &fx.noise)?;
            let e = fd_gradient_error(net.theta(), &g, |th| {
                Ok(kappa_term(&with(th)?, &fx.points, mode, &fx.noise)?.value)
            })?;
            out.push(CheckOutcome::at_most(
                format!("{tag} kappa{}", kind.index()),
                q,
                e,
                GRADIENT_TOLERANCE,
            ));

            let weights = ObjectiveWeights {
                gamma: 0.5,
                lambda: 10.0,
                curvature: mode,
                kappa1_dim_scaling: false,
                contractive: 0.3,
            };
            let (_, g) = objective_grad(net, &fx.points, &fx.targets, &weights, &fx.batch)?;
            let e = fd_gradient_error(net.theta(), &g, |th| {
                Ok(objective(&with(th)?, &fx.points, &fx.targets, &weights, &fx.batch)?.objective)
            })?;
            out.push(CheckOutcome::at_most(
                format!("{tag} objective kappa{}", kind.index()),
                q,
                e,
                GRADIENT_TOLERANCE,
            ));
        }
    }
    Ok(out)
}

/// `|kyfan_antinorm_sq(A, k) − ||A − truncate_rank(A, k)||²| / (1 + ||A||²)`,
/// maximized over every `k`, for `trials` seeded matrices up to 12 x 12. Every
/// third matrix is built with deficient rank.
pub fn eckart_young_checks(trials: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let (r, c) = (rng.random_range(1..=12), rng.random_range(1..=12));
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let mut a = Matrix::from_fn(r, c, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        if t % 3 == 2 {
            let rank = rng.random_range(0..=r.min(c));
            a = Matrix::from_fn(r, rank, |_, _| -> f64 { StandardNormal.sample(&mut rng) }).matmul(
                &Matrix::from_fn(rank, c, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                }),
            );
        }
        let denom = 1.0 + a.frobenius_norm_sq();
        let mut worst: f64 = 0.0;
        for k in 0..=r.min(c) {
            let lhs = kyfan_antinorm_sq(&a, k)?;
            let rhs = a.sub(&truncate_rank(&a, k)?).frobenius_norm_sq();
            worst = worst.max((lhs - rhs).abs() / denom);
        }
        out.push(CheckOutcome::at_most(
            format!("trial {t} ({r}x{c})"),
            "max_k |antinorm² − truncation residual²| / (1 + ||A||²)",
            worst,
            ECKART_YOUNG_TOLERANCE,
        ));
    }
    Ok(out)
}

/// Curvature bound of `x ↦ r x / ||x||` at a seeded point against `1 / r`.
pub fn sphere_check(n: usize, radius: f64, seed: u64) -> Result<CheckOutcome> {
    let map = SphereMap::new(n, radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let est = theorem4_bound_with(&map, &x, &Theorem4Options::defaults(n))?;
    let expected = 1.0 / radius;
    Ok(CheckOutcome::at_most(
        format!("sphere n={n} r={radius}"),
        format!("relative error of {:.6} against {expected:.6}", est.value),
        (est.value - expected).abs() / expected,
        SPHERE_TOLERANCE,
    ))
}

/// Encoder/decoder bound `C(g) ≤ RHS` on `count` seeded networks, each at a
/// point where the smallest decoder singular value exceeds `0.1`.
pub fn theorem5_checks(count: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 100 * count.max(1) {
            return Err(Error::Degenerate(
                "no well-conditioned decoder found".into(),
            ));
        }
        let n = rng.random_range(3..=5);
        let code = rng.random_range(1..n);
        let hidden = rng.random_range(3..=6);
        let net = AutoencoderNet::symmetric(n, &[hidden], code, rng.random())?;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jd = net.decoder_jacobian(&net.encode(&x)?)?;
        if *svd(&jd)?.singular_values.last().unwrap() <= 0.1 || norm(&x) == 0.0 {
            continue;
        }
        let c = theorem5_check(&net, &x, &Theorem4Options::defaults(n))?;
        out.push(CheckOutcome::at_most(
            format!("pair {} (n={n}, d={code})", out.len()),
            format!("lhs {:.4e} − rhs {:.4e}", c.lhs, c.terms.rhs),
            c.lhs - c.terms.rhs,
            THEOREM5_TOLERANCE,
        ));
    }
    Ok(out)
}
