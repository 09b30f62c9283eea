use std::path::PathBuf;

use clap::Subcommand;

use rankae::geometry::{theorem4_bound_with, theorem5_check, SphereMap, Theorem4Options};
use rankae::verify::{
    all_passed, eckart_young_checks, gradient_checks, sphere_check, theorem5_checks, CheckOutcome,
    THEOREM5_TOLERANCE,
};
use rankae::{AutoencoderNet, Error, Result};

use crate::run::{checkpoint_path, DataSource};
use crate::Status;

#[derive(Subcommand)]
pub enum VerifyKind {
    /// Curvature bound of the radius-r sphere map against 1/r.
    Sphere {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write every (scale, direction_index, quotient) sample here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Finite-difference checks of every loss gradient on seeded small nets.
    Gradients {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        nets: usize,
    },
    /// Ky-Fan antinorm against the Eckart–Young truncation residual.
    EckartYoung {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Encoder/decoder curvature bound, on seeded nets or on a checkpoint at
    /// dataset points.
    EncoderDecoder {
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Network file or run directory; its code dimension must not
        /// exceed the input dimension.
        #[arg(long, requires = "data")]
        checkpoint: Option<PathBuf>,
        /// Points at which the checkpoint is checked (the first `count`).
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn report(outcomes: &[CheckOutcome]) -> Status {
    for o in outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} checks, {failed} failed", outcomes.len());
    if all_passed(outcomes) {
        Status::Ok
    } else {
        Status::ChecksFailed
    }
}

fn theorem5_on_checkpoint(net: &AutoencoderNet, points: &[Vec<f64>]) -> Result<Vec<CheckOutcome>> {
    let opts = Theorem4Options::defaults(net.ambient_dim());
    let mut out = Vec::new();
    for (i, x) in points.iter().enumerate() {
        match theorem5_check(net, x, &opts) {
            Ok(c) => out.push(CheckOutcome::at_most(
                format!("point {i}"),
                format!("lhs {:.4e} − rhs {:.4e}", c.lhs, c.terms.rhs),
                c.lhs - c.terms.rhs,
                THEOREM5_TOLERANCE,
            )),
            Err(Error::RankDeficient { sigma_k, .. }) => {
                eprintln!("point {i}: skipped, decoder singular value {sigma_k:.3e}")
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn run(kind: VerifyKind) -> Result<Status> {
    match kind {
        VerifyKind::Sphere {
            n,
            radius,
            seed,
            csv,
        } => {
            let outcome = sphere_check(n, radius, seed)?;
            if let Some(path) = csv {
                let map = SphereMap::new(n, radius)?;
                let x: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.5 }).collect();
                theorem4_bound_with(&map, &x, &Theorem4Options::defaults(n))?
                    .write_csv(std::fs::File::create(path)?)?;
            }
            Ok(report(&[outcome]))
        }
        VerifyKind::Gradients { seed, nets } => Ok(report(&gradient_checks(seed, nets)?)),
        VerifyKind::EckartYoung { trials, seed } => Ok(report(&eckart_young_checks(trials, seed)?)),
        VerifyKind::EncoderDecoder {
            count,
            seed,
            checkpoint,
            data,
        } => match (checkpoint, data) {
            (Some(c), Some(d)) => {
                let net = AutoencoderNet::load(checkpoint_path(&c))?;
                let dataset = DataSource::resolve(&d, None, true)?.load()?;
                let pts: Vec<Vec<f64>> = dataset.points().iter().take(count).cloned().collect();
                Ok(report(&theorem5_on_checkpoint(&net, &pts)?))
            }
            _ => Ok(report(&theorem5_checks(count, seed)?)),
        },
    }
}
