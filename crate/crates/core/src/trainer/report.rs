use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Alternating rank-target algorithm.
    Alternating,
    /// Contractive baseline with the encoder-Jacobian robustness term.
    CaeH,
}

/// Means over every minibatch of a round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermMeans {
    pub objective: f64,
    pub reconstruction: f64,
    pub kappa: f64,
    /// Mean of `||J − B||²_F` per anchor draw.
    pub rank_penalty: f64,
    pub contractive: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub epochs: usize,
    pub steps: usize,
    pub epoch_objectives: Vec<f64>,
    pub terms: TermMeans,
    /// `F(θ_t, B_t)` on the anchor set, before the target update.
    pub objective_before_update: f64,
    /// `F(θ_t, B_{t+1})`; equals the previous value when targets are fixed.
    pub objective_after_update: f64,
    /// Singular values of `J_g` at every anchor, after the inner loop.
    pub anchor_spectra: Vec<Vec<f64>>,
    /// Mean over anchors of `σ_{k+1} / σ_1`.
    pub mean_tail_ratio: f64,
    pub kappa2_guarded: usize,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: Method,
    pub config: TrainConfig,
    pub anchors: Vec<usize>,
    pub rounds: Vec<RoundRecord>,
}

impl TrainReport {
    pub fn new(method: Method, config: TrainConfig, anchors: Vec<usize>) -> Self {
        Self {
            method,
            config,
            anchors,
            rounds: Vec::new(),
        }
    }

    pub fn rounds_completed(&self) -> usize {
        self.rounds.len()
    }

    pub fn objective_trace(&self) -> Vec<f64> {
        self.rounds
            .iter()
            .map(|r| r.objective_after_update)
            .collect()
    }

    pub fn kappa2_guarded(&self) -> usize {
        self.rounds.iter().map(|r| r.kappa2_guarded).sum()
    }

    pub fn final_tail_ratio(&self) -> Option<f64> {
        self.rounds.last().map(|r| r.mean_tail_ratio)
    }

    /// Copy with wall-clock fields zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for rec in &mut r.rounds {
            rec.wall_clock_secs = 0.0;
        }
        r
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }

    /// One CSV row per round.
    pub fn write_rounds_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "round",
            "epochs",
            "steps",
            "objective",
            "reconstruction",
            "kappa",
            "rank_penalty",
            "contractive",
            "objective_before_update",
            "objective_after_update",
            "mean_tail_ratio",
            "kappa2_guarded",
            "wall_clock_secs",
        ])?;
        for r in &self.rounds {
            w.write_record(&[
                r.round.to_string(),
                r.epochs.to_string(),
                r.steps.to_string(),
                format!("{:e}", r.terms.objective),
                format!("{:e}", r.terms.reconstruction),
                format!("{:e}", r.terms.kappa),
                format!("{:e}", r.terms.rank_penalty),
                format!("{:e}", r.terms.contractive),
                format!("{:e}", r.objective_before_update),
                format!("{:e}", r.objective_after_update),
                format!("{:e}", r.mean_tail_ratio),
                r.kappa2_guarded.to_string(),
                format!("{:.3}", r.wall_clock_secs),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
