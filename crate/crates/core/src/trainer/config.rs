use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{CurvatureKind, CurvatureMode, ObjectiveWeights};

/// Hyperparameters of the alternating algorithm.
///
/// Defaults are the published full-scale values (`T = M = 1000`, `m = 20`,
/// `γ = 0.5`, `σ = 0.8`, `λ = 10`, Adam `0.9 / 0.999 / 1e-3`). The target rank
/// `k` has no published default and must be set per problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub rounds: usize,
    pub anchors: usize,
    pub k: usize,
    pub curvature: CurvatureKind,
    pub inner_max_epochs: usize,
    pub inner_tol: f64,
    /// Steps per epoch; `None` means `ceil(N / batch_size)`.
    pub steps_per_epoch: Option<usize>,
    /// Multiply κ1 by `n^-2`.
    pub kappa1_dim_scaling: bool,
    /// Weight of `||J_e||²_F` in the contractive baseline.
    pub contractive_weight: f64,
    pub seed: u64,
}

/// Epoch window of the inner stopping rule.
pub const STOP_WINDOW: usize = 5;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 20,
            lambda: 10.0,
            gamma: 0.5,
            sigma: 0.8,
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            rounds: 1000,
            anchors: 1000,
            k: 1,
            curvature: CurvatureKind::Kappa1,
            inner_max_epochs: 50,
            inner_tol: 1e-4,
            steps_per_epoch: None,
            kappa1_dim_scaling: false,
            contractive_weight: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn curvature_mode(&self) -> Result<CurvatureMode> {
        CurvatureMode::new(self.curvature, self.sigma)
    }

    pub fn weights(&self) -> Result<ObjectiveWeights> {
        Ok(ObjectiveWeights {
            gamma: self.gamma,
            lambda: self.lambda,
            curvature: self.curvature_mode()?,
            kappa1_dim_scaling: self.kappa1_dim_scaling,
            contractive: self.contractive_weight,
        })
    }

    /// Checks the fields on their own.
    pub fn validate_fields(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        need(self.batch_size > 0, "batch_size must be positive".into());
        need(
            self.lambda >= 0.0 && self.lambda.is_finite(),
            format!("lambda must be >= 0, got {}", self.lambda),
        );
        need(
            self.gamma >= 0.0 && self.gamma.is_finite(),
            format!("gamma must be >= 0, got {}", self.gamma),
        );
        need(
            self.sigma > 0.0 && self.sigma.is_finite(),
            format!("sigma must be > 0, got {}", self.sigma),
        );
        need(
            self.alpha >= 0.0 && self.alpha.is_finite(),
            format!("alpha must be >= 0, got {}", self.alpha),
        );
        need(
            self.beta1 > 0.0 && self.beta1 < 1.0,
            format!("beta1 must lie in (0, 1), got {}", self.beta1),
        );
        need(
            self.beta2 > 0.0 && self.beta2 < 1.0,
            format!("beta2 must lie in (0, 1), got {}", self.beta2),
        );
        need(
            self.adam_eps > 0.0 && self.adam_eps.is_finite(),
            format!("adam_eps must be > 0, got {}", self.adam_eps),
        );
        need(self.rounds > 0, "rounds must be positive".into());
        need(self.anchors > 0, "anchors must be positive".into());
        need(
            self.inner_max_epochs > 0,
            "inner_max_epochs must be positive".into(),
        );
        need(
            self.inner_tol >= 0.0 && self.inner_tol.is_finite(),
            format!("inner_tol must be >= 0, got {}", self.inner_tol),
        );
        need(
            self.steps_per_epoch != Some(0),
            "steps_per_epoch must be positive".into(),
        );
        need(
            self.contractive_weight >= 0.0 && self.contractive_weight.is_finite(),
            format!(
                "contractive_weight must be >= 0, got {}",
                self.contractive_weight
            ),
        );
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Checks the fields against a dataset of `points` vectors in `R^n` and a
    /// net with code dimension `d`.
    pub fn validate(&self, points: usize, n: usize, d: usize) -> Result<()> {
        let mut errs = match self.validate_fields() {
            Ok(()) => Vec::new(),
            Err(Error::Config(e)) => e,
            Err(e) => return Err(e),
        };
        if self.batch_size > points {
            errs.push(format!(
                "batch_size {} exceeds dataset size {points}",
                self.batch_size
            ));
        }
        if self.anchors > points {
            errs.push(format!(
                "anchors {} exceeds dataset size {points}",
                self.anchors
            ));
        }
        if self.k > n.min(d) {
            errs.push(format!("k {} exceeds min(n, d) = {}", self.k, n.min(d)));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn steps_per_epoch(&self, points: usize) -> usize {
        self.steps_per_epoch
            .unwrap_or_else(|| points.div_ceil(self.batch_size))
    }
}
