//! End-to-end acceptance run. Prints one line per criterion and exits with a
//! failure status if any criterion misses its tolerance or time budget.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rankae::data::{make_split, orthogonal_components, sample_stiefel, toy_halfplane, StiefelSpec};
use rankae::eval::{
    knn_accuracies, knn_on_codes, stiefel_metrics, tangent_bases, train_mtc, MtcConfig,
};
use rankae::losses::reconstruction_loss;
use rankae::trainer::{train, train_cae_h_baseline, TrainConfig, TrainReport};
use rankae::verify::{
    all_passed, eckart_young_checks, fd_gradient_error, gradient_checks, sphere_check,
    theorem5_checks, CheckOutcome, GRADIENT_TOLERANCE,
};
use rankae::{AutoencoderNet, Result};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        passed,
        detail: detail.into(),
    })
}

fn first_failure(outcomes: &[CheckOutcome]) -> String {
    outcomes
        .iter()
        .find(|o| !o.passed)
        .map(|o| format!("; first failure: {o}"))
        .unwrap_or_default()
}

fn worst(outcomes: &[CheckOutcome]) -> f64 {
    outcomes
        .iter()
        .map(|o| o.observed)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn eckart_young() -> Result<Verdict> {
    let out = eckart_young_checks(200, 2024)?;
    verdict(
        all_passed(&out),
        format!(
            "200 matrices, worst relative gap {:.2e} (< 1e-9){}",
            worst(&out),
            first_failure(&out)
        ),
    )
}

fn gradients() -> Result<Verdict> {
    let out = gradient_checks(17, 20)?;
    verdict(
        all_passed(&out),
        format!(
            "{} checks on 20 nets, worst relative error {:.2e} (< 1e-4){}",
            out.len(),
            worst(&out),
            first_failure(&out)
        ),
    )
}

fn sphere() -> Result<Verdict> {
    let out = vec![
        sphere_check(3, 1.0, 1)?,
        sphere_check(5, 1.0, 2)?,
        sphere_check(3, 2.5, 3)?,
        sphere_check(5, 0.4, 4)?,
    ];
    let values: Vec<String> = out
        .iter()
        .map(|o| format!("{}: {:.2e}", o.name, o.observed))
        .collect();
    verdict(
        all_passed(&out),
        format!("relative errors [{}] (< 0.05)", values.join(", ")),
    )
}

fn theorem5() -> Result<Verdict> {
    let out = theorem5_checks(20, 55)?;
    verdict(
        all_passed(&out),
        format!(
            "20 pairs, max lhs − rhs {:.3e} (<= 1e-3){}",
            worst(&out),
            first_failure(&out)
        ),
    )
}

fn toy() -> Result<Verdict> {
    let data = toy_halfplane(5000, 1)?;
    let test = toy_halfplane(5000, 1001)?;
    let cfg = TrainConfig {
        lambda: 0.0,
        gamma: 0.0,
        alpha: 3e-3,
        rounds: 10,
        anchors: 10,
        k: 1,
        inner_max_epochs: 20,
        inner_tol: 0.0,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut errs = Vec::new();
    for code in [1, 2] {
        let (net, _) = train(&data, AutoencoderNet::symmetric(2, &[32], code, 1)?, &cfg)?;
        errs.push(reconstruction_loss(&net, test.points())?);
    }
    let ok = (0.8 / 6.0..=1.2 / 6.0).contains(&errs[0]) && errs[1] < 0.02;
    verdict(
        ok,
        format!(
            "test error code-dim 1 {:.4} (in [0.1333, 0.2]), code-dim 2 {:.5} (< 0.02)",
            errs[0], errs[1]
        ),
    )
}

fn stiefel_config(k: usize, rounds: usize, anchors: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        lambda: 1.0,
        gamma: 0.5,
        sigma: 0.1,
        alpha: 0.01,
        rounds,
        anchors,
        k,
        inner_max_epochs: 2,
        steps_per_epoch: Some(50),
        seed,
        ..TrainConfig::default()
    }
}

/// Desk-scale alternating run on St(4, 2) shared by the monotonicity,
/// soft-rank and determinism criteria.
fn soft_rank_run(lambda: f64) -> Result<TrainReport> {
    let spec = StiefelSpec {
        n1: 4,
        n2: 2,
        count: 2000,
        delta: 0.05,
        seed: 7,
    };
    let (_, noisy) = sample_stiefel(&spec)?;
    let cfg = TrainConfig {
        lambda,
        ..stiefel_config(5, 50, 200, 3)
    };
    Ok(train(&noisy, AutoencoderNet::symmetric(8, &[32], 32, 1)?, &cfg)?.1)
}

fn monotone(report: &TrainReport) -> Result<Verdict> {
    let worst = report
        .rounds
        .iter()
        .map(|r| r.objective_after_update - r.objective_before_update)
        .fold(f64::NEG_INFINITY, f64::max);
    verdict(
        worst <= 1e-10,
        format!(
            "{} rounds, max F(B_t+1) − F(B_t) = {worst:.3e} (<= 1e-10)",
            report.rounds.len()
        ),
    )
}

fn soft_rank(report: &TrainReport) -> Result<Verdict> {
    let ablation = soft_rank_run(0.0)?;
    let a = report.final_tail_ratio().unwrap_or(f64::NAN);
    let b = ablation.final_tail_ratio().unwrap_or(f64::NAN);
    verdict(
        a < 0.1 && b > 2.0 * a,
        format!(
            "mean σ6/σ1: alternating {a:.4} (< 0.1), λ=0 ablation {b:.4} (> {:.4})",
            2.0 * a
        ),
    )
}

fn determinism(report: &TrainReport) -> Result<Verdict> {
    let again = soft_rank_run(1.0)?;
    verdict(
        again.without_timing() == report.without_timing(),
        format!("{} rounds compared field by field", report.rounds.len()),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn trend() -> Result<Verdict> {
    let spec = StiefelSpec {
        n1: 5,
        n2: 2,
        count: 1000,
        delta: 0.05,
        seed: 0,
    };
    let mut wins = 0;
    let mut lines = Vec::new();
    for k in [4, 5, 6] {
        let (mut e1, mut e2) = ((Vec::new(), Vec::new()), (Vec::new(), Vec::new()));
        for seed in 0..3u64 {
            let spec = StiefelSpec {
                seed: 100 + seed,
                ..spec
            };
            let (_, noisy) = sample_stiefel(&spec)?;
            let cfg = stiefel_config(k, 40, 100, seed);
            let (as_net, _) = train(
                &noisy,
                AutoencoderNet::symmetric(10, &[32], 32, seed)?,
                &cfg,
            )?;
            let cae_cfg = TrainConfig {
                contractive_weight: 0.1,
                ..cfg
            };
            let (cae_net, _) = train_cae_h_baseline(
                &noisy,
                AutoencoderNet::symmetric(10, &[32], k, seed)?,
                &cae_cfg,
            )?;
            let m_as = stiefel_metrics(|x| Ok(as_net.forward(x)?.1), &spec, 500, 999 + seed)?;
            let m_cae = stiefel_metrics(|x| Ok(cae_net.forward(x)?.1), &spec, 500, 999 + seed)?;
            e1.0.push(m_as.e1);
            e1.1.push(m_cae.e1);
            e2.0.push(m_as.e2);
            e2.1.push(m_cae.e2);
        }
        let (a1, c1, a2, c2) = (median(e1.0), median(e1.1), median(e2.0), median(e2.1));
        if a1 <= c1 && a2 <= c2 {
            wins += 1;
        }
        lines.push(format!(
            "k={k}: e1 {a1:.3} vs {c1:.3}, e2 {a2:.3} vs {c2:.3}"
        ));
    }
    verdict(
        wins >= 2,
        format!(
            "AS vs CAE+H medians over 3 seeds [{}]; {wins}/3 settings won (>= 2)",
            lines.join("; ")
        ),
    )
}

fn classification() -> Result<Verdict> {
    let data = make_split(
        orthogonal_components(3, 500, 0.05, 11)?,
        [0.8, 0.0, 0.2],
        12,
    )?;
    let (tr, te) = (data.train()?, data.test()?);
    let cfg = stiefel_config(3, 20, 100, 5);
    let (net, _) = train(&tr, AutoencoderNet::symmetric(9, &[32], 32, 5)?, &cfg)?;
    let ks: Vec<usize> = (1..=19).collect();
    let raw = knn_accuracies(
        tr.points(),
        tr.labels().unwrap(),
        Some((te.points(), te.labels().unwrap())),
        &ks,
    )?;
    let codes = knn_on_codes(|x| net.encode(x), &tr, Some(&te), &ks)?;
    let knn_ok = raw.iter().zip(&codes).all(|(r, c)| *c > r - 0.02);
    let gap = raw
        .iter()
        .zip(&codes)
        .map(|(r, c)| r - c)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut ok = knn_ok;
    let mut parts = vec![format!("K=1..19 worst raw − codes gap {gap:.3} (< 0.02)")];
    let labels = tr.labels().unwrap();
    for beta in [0.0, 0.01, 0.1] {
        let (model, report) = train_mtc(
            &net,
            &tr,
            &MtcConfig {
                beta,
                k: 3,
                alpha: 0.01,
                ..MtcConfig::default()
            },
        )?;
        let (bases, _) = tangent_bases(&net, tr.points(), 3)?;
        let probe = 0..10;
        let (pts, lab, bas) = (
            &tr.points()[probe.clone()],
            &labels[probe.clone()],
            &bases[probe],
        );
        let (_, g) = model.loss_grad(pts, lab, bas)?;
        let err = fd_gradient_error(&model.params(), &g, |p| {
            model.with_params(p)?.loss(pts, lab, bas)
        })?;
        ok &= report.train_accuracy >= 0.95 && err < GRADIENT_TOLERANCE;
        parts.push(format!(
            "MTC β={beta}: train accuracy {:.3} (>= 0.95), gradient error {err:.1e}",
            report.train_accuracy
        ));
    }
    verdict(ok, parts.join("; "))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut run = |id: usize,
                   title: &str,
                   budget: Option<Duration>,
                   f: &mut dyn FnMut() -> Result<Verdict>| {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (passed, detail) = match outcome {
            Ok(v) => (v.passed, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = budget.is_none_or(|b| took <= b);
        let budget_note = budget
            .map(|b| format!(" / {}s", b.as_secs()))
            .unwrap_or_default();
        let ok = passed && in_time;
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {}: {title}: {detail} [{:.1}s{budget_note}]",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    };

    run(
        1,
        "Eckart–Young identity",
        Some(Duration::from_secs(10)),
        &mut eckart_young,
    );
    run(
        2,
        "gradient correctness",
        Some(Duration::from_secs(120)),
        &mut gradients,
    );
    run(
        3,
        "sphere curvature oracle",
        Some(Duration::from_secs(30)),
        &mut sphere,
    );
    run(
        4,
        "encoder/decoder curvature bound",
        Some(Duration::from_secs(120)),
        &mut theorem5,
    );
    run(
        5,
        "half-plane toy reconstruction",
        Some(Duration::from_secs(300)),
        &mut toy,
    );

    let report = soft_rank_run(1.0);
    let shared = |f: fn(&TrainReport) -> Result<Verdict>| {
        let report = &report;
        move || match report {
            Ok(r) => f(r),
            Err(e) => verdict(false, format!("training failed: {e}")),
        }
    };
    run(
        6,
        "target update never increases F",
        None,
        &mut shared(monotone),
    );
    run(
        7,
        "soft-rank effect on St(4,2)",
        None,
        &mut shared(soft_rank),
    );
    run(
        8,
        "AS vs CAE+H on St(5,2)",
        Some(Duration::from_secs(1800)),
        &mut trend,
    );
    run(
        9,
        "classification on two O(3) components",
        None,
        &mut classification,
    );
    run(10, "determinism", None, &mut shared(determinism));

    if failed == 0 {
        println!("all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} of 10 criteria failed");
        ExitCode::FAILURE
    }
}
