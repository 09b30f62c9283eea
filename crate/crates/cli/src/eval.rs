use std::path::PathBuf;

use clap::{Args, Subcommand};

use rankae::data::{Dataset, StiefelSpec};
use rankae::eval::{classify, knn_accuracies, knn_on_codes, stiefel_metrics, train_mtc, MtcConfig};
use rankae::{AutoencoderNet, Error, Result};

use crate::run::{checkpoint_path, DataSource};
use crate::{OutArg, Status};

#[derive(Args, Clone, Debug)]
pub struct Checkpoint {
    /// Network file, or a run directory.
    #[arg(long)]
    checkpoint: PathBuf,
}

impl Checkpoint {
    fn load(&self) -> Result<AutoencoderNet> {
        AutoencoderNet::load(checkpoint_path(&self.checkpoint))
    }
}

#[derive(Args, Clone, Debug)]
pub struct Labelled {
    /// Labelled training CSV.
    #[arg(long)]
    train: PathBuf,
    /// Labelled test CSV; without it accuracies are leave-one-out on the
    /// training set.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Zero-based label column when there is no sidecar.
    #[arg(long)]
    label_column: Option<usize>,
    #[arg(long)]
    no_header: bool,
}

impl Labelled {
    fn load(&self) -> Result<(Dataset, Option<Dataset>)> {
        let read = |p: &PathBuf| -> Result<Dataset> {
            let d = DataSource::resolve(p, self.label_column, !self.no_header)?.load()?;
            if d.labels().is_none() {
                return Err(Error::Domain(format!(
                    "{} has no labels; pass --label-column",
                    p.display()
                )));
            }
            Ok(d)
        };
        Ok((
            read(&self.train)?,
            self.test.as_ref().map(read).transpose()?,
        ))
    }
}

#[derive(Subcommand)]
pub enum EvalKind {
    /// Orthogonality and recovery errors on fresh noisy Stiefel samples.
    Stiefel {
        #[command(flatten)]
        checkpoint: Checkpoint,
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// K-nearest-neighbour accuracy on raw inputs and on codes, K = 1..=max-k.
    Knn {
        #[command(flatten)]
        checkpoint: Checkpoint,
        #[command(flatten)]
        data: Labelled,
        #[arg(long, default_value_t = 19)]
        max_k: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Tangent classifier initialized from the encoder, one row per beta.
    Mtc {
        #[command(flatten)]
        checkpoint: Checkpoint,
        #[command(flatten)]
        data: Labelled,
        /// Tangent dimension.
        #[arg(long)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.1")]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        alpha: f64,
        #[arg(long, default_value_t = 20)]
        batch_size: usize,
        #[arg(long, default_value_t = 50)]
        max_epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train only the class weights.
        #[arg(long)]
        freeze_encoder: bool,
        #[command(flatten)]
        out: OutArg,
    },
}

pub fn run(kind: EvalKind) -> Result<Status> {
    match kind {
        EvalKind::Stiefel {
            checkpoint,
            n1,
            n2,
            delta,
            samples,
            seed,
            out,
        } => {
            let net = checkpoint.load()?;
            let spec = StiefelSpec {
                n1,
                n2,
                count: samples,
                delta,
                seed,
            };
            spec.validate()?;
            let m = stiefel_metrics(|x| Ok(net.forward(x)?.1), &spec, samples, seed)?;
            let mut w = csv::Writer::from_writer(out.writer()?);
            w.write_record([
                "e1",
                "e2",
                "one_i",
                "zero_i",
                "e1_stderr",
                "e2_stderr",
                "samples",
            ])?;
            w.write_record(&[
                format!("{:e}", m.e1),
                format!("{:e}", m.e2),
                format!("{:e}", m.one_i),
                format!("{:e}", m.zero_i),
                format!("{:e}", m.e1_stderr),
                format!("{:e}", m.e2_stderr),
                m.sample_count.to_string(),
            ])?;
            w.flush()?;
        }
        EvalKind::Knn {
            checkpoint,
            data,
            max_k,
            out,
        } => {
            let net = checkpoint.load()?;
            let (train, test) = data.load()?;
            let ks: Vec<usize> = (1..=max_k).collect();
            let labels = train.labels().expect("checked on load");
            let held_out = test
                .as_ref()
                .map(|t| (t.points(), t.labels().expect("checked on load")));
            let raw = knn_accuracies(train.points(), labels, held_out, &ks)?;
            let codes = knn_on_codes(|x| net.encode(x), &train, test.as_ref(), &ks)?;
            let mut w = csv::Writer::from_writer(out.writer()?);
            w.write_record(["k", "raw_accuracy", "code_accuracy"])?;
            for (i, k) in ks.iter().enumerate() {
                w.write_record(&[k.to_string(), raw[i].to_string(), codes[i].to_string()])?;
            }
            w.flush()?;
        }
        EvalKind::Mtc {
            checkpoint,
            data,
            k,
            betas,
            alpha,
            batch_size,
            max_epochs,
            seed,
            freeze_encoder,
            out,
        } => {
            let net = checkpoint.load()?;
            let (train, test) = data.load()?;
            let mut w = csv::Writer::from_writer(out.writer()?);
            w.write_record([
                "beta",
                "train_accuracy",
                "test_accuracy",
                "epochs",
                "final_loss",
                "skipped_bases",
            ])?;
            for beta in betas {
                let cfg = MtcConfig {
                    beta,
                    k,
                    alpha,
                    batch_size,
                    max_epochs,
                    seed,
                    freeze_encoder,
                    ..MtcConfig::default()
                };
                let (model, report) = train_mtc(&net, &train, &cfg)?;
                let test_acc = match &test {
                    Some(t) => {
                        let mut hits = 0;
                        for (x, &y) in t.points().iter().zip(t.labels().expect("checked on load")) {
                            hits += usize::from(classify(&model, x)?.0 == y);
                        }
                        (hits as f64 / t.len() as f64).to_string()
                    }
                    None => String::new(),
                };
                w.write_record(&[
                    beta.to_string(),
                    report.train_accuracy.to_string(),
                    test_acc,
                    report.epoch_losses.len().to_string(),
                    format!(
                        "{:e}",
                        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
                    ),
                    report.skipped_bases.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(Status::Ok)
}
