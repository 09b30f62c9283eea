use std::path::{Path, PathBuf};

use clap::Subcommand;
use serde_json::json;

use rankae::data::{
    orthogonal_components, sample_stiefel, save_csv, toy_halfplane, Dataset, Sidecar, StiefelSpec,
};
use rankae::Result;

use crate::run::sidecar_path;
use crate::Status;

#[derive(Subcommand)]
pub enum SynthKind {
    /// Uniform samples of St(n1, n2) plus Gaussian noise, vectorized column-major.
    Stiefel {
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        /// Number of samples.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noisy samples go here.
        #[arg(long)]
        out: PathBuf,
        /// Optional file for the noise-free samples.
        #[arg(long)]
        clean_out: Option<PathBuf>,
    },
    /// Half-plane toy set `(x, y·[x > 0])`.
    Toy {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Noisy orthogonal matrices labelled by the sign of the determinant.
    Components {
        /// Matrix size.
        #[arg(long, default_value_t = 3)]
        size: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(dataset: &Dataset, path: &Path, generator: serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_csv(dataset, path)?;
    Sidecar::describe(dataset, generator).save(sidecar_path(path))?;
    eprintln!(
        "wrote {} rows x {} columns to {}",
        dataset.len(),
        dataset.dim(),
        path.display()
    );
    Ok(())
}

pub fn run(kind: SynthKind) -> Result<Status> {
    match kind {
        SynthKind::Stiefel {
            n1,
            n2,
            n,
            delta,
            seed,
            out,
            clean_out,
        } => {
            let spec = StiefelSpec {
                n1,
                n2,
                count: n,
                delta,
                seed,
            };
            let (clean, noisy) = sample_stiefel(&spec)?;
            let gen = json!({ "kind": "stiefel", "n1": n1, "n2": n2, "count": n, "delta": delta, "seed": seed });
            write(&noisy, &out, gen.clone())?;
            if let Some(p) = clean_out {
                write(&clean, &p, json!({ "kind": "stiefel-clean", "of": gen }))?;
            }
        }
        SynthKind::Toy { n, seed, out } => {
            let gen = json!({ "kind": "toy", "count": n, "seed": seed });
            write(&toy_halfplane(n, seed)?, &out, gen)?;
        }
        SynthKind::Components {
            size,
            n,
            delta,
            seed,
            out,
        } => {
            let gen = json!({ "kind": "orthogonal-components", "size": size, "count": n, "delta": delta, "seed": seed });
            write(&orthogonal_components(size, n, delta, seed)?, &out, gen)?;
        }
    }
    Ok(Status::Ok)
}
