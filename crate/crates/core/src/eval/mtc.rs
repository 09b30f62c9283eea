use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::geometry::tangent_basis;
use crate::linalg::Matrix;
use crate::net::AutoencoderNet;
use crate::trainer::{AdamState, STOP_WINDOW};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtcConfig {
    /// Weight of the tangent-propagation term.
    pub beta: f64,
    /// Tangent dimension, normally the autoencoder's penalty rank.
    pub k: usize,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub tol: f64,
    pub steps_per_epoch: Option<usize>,
    /// Train only the class weights.
    pub freeze_encoder: bool,
    pub seed: u64,
}

impl Default for MtcConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            k: 1,
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 20,
            max_epochs: 50,
            tol: 1e-4,
            steps_per_epoch: None,
            freeze_encoder: false,
            seed: 0,
        }
    }
}

/// Softmax classifier on encoder codes: `p(c|x) ∝ exp(w_c · e(x))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtcModel {
    pub net: AutoencoderNet,
    /// One row per class.
    pub weights: Matrix,
    pub beta: f64,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl MtcModel {
    pub fn new(net: AutoencoderNet, weights: Matrix, beta: f64) -> Result<Self> {
        if weights.cols() != net.code_dim() {
            return Err(Error::Dimension(format!(
                "class weights have {} columns, code dimension is {}",
                weights.cols(),
                net.code_dim()
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be >= 0, got {beta}")));
        }
        Ok(Self { net, weights, beta })
    }

    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.weights.matvec(&self.net.encode(x)?))
    }

    /// `[θ, W]` with `W` row-major.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.net.theta().to_vec();
        p.extend_from_slice(self.weights.as_slice());
        p
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let split = self.param_split();
        if params.len() != split + self.weights.as_slice().len() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.params().len(),
                params.len()
            )));
        }
        let net = self.net.with_theta(params[..split].to_vec())?;
        let weights = Matrix::new(
            self.classes(),
            self.net.code_dim(),
            params[split..].to_vec(),
        )?;
        Ok(Self {
            net,
            weights,
            beta: self.beta,
        })
    }

    fn param_split(&self) -> usize {
        self.net.param_count()
    }

    /// Mean of cross-entropy plus `β Σ_i ||W J_e(x) u_i||²` over the given
    /// rows; `bases[i]` is the `n x k` tangent basis at `points[i]`, or `None`
    /// to skip its tangent term.
    pub fn loss(
        &self,
        points: &[Vec<f64>],
        labels: &[usize],
        bases: &[Option<Matrix>],
    ) -> Result<f64> {
        let idx: Vec<usize> = (0..points.len()).collect();
        self.loss_inner(points, labels, bases, &idx, None)
    }

    /// [`MtcModel::loss`] and its gradient over `[θ, W]`.
    pub fn loss_grad(
        &self,
        points: &[Vec<f64>],
        labels: &[usize],
        bases: &[Option<Matrix>],
    ) -> Result<(f64, Vec<f64>)> {
        let idx: Vec<usize> = (0..points.len()).collect();
        let mut g = vec![0.0; self.params().len()];
        let v = self.loss_inner(points, labels, bases, &idx, Some(&mut g))?;
        Ok((v, g))
    }

    fn loss_inner(
        &self,
        points: &[Vec<f64>],
        labels: &[usize],
        bases: &[Option<Matrix>],
        idx: &[usize],
        mut grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        if points.len() != labels.len() || points.len() != bases.len() {
            return Err(Error::Dimension(
                "points, labels and bases must have equal length".into(),
            ));
        }
        if idx.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        let m = idx.len() as f64;
        let split = self.param_split();
        let c = self.classes();
        let mut total = 0.0;
        for &i in idx {
            let y = labels[i];
            if y >= c {
                return Err(Error::Domain(format!("label {y} but only {c} classes")));
            }
            let seed = if self.beta > 0.0 {
                bases[i].clone()
            } else {
                None
            };
            let trace = self.net.trace_encoder(&points[i], seed)?;
            let h = trace.output();
            let logits = self.weights.matvec(h);
            let p = softmax(&logits);
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + logits.iter().map(|z| (z - top).exp()).sum::<f64>().ln();
            let mut loss = lse - logits[y];
            let wt = trace.tangent().map(|t| self.weights.matmul(t));
            if let Some(wt) = &wt {
                loss += self.beta * wt.frobenius_norm_sq();
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("classifier loss at point {i}")));
            }
            total += loss;
            if let Some(g) = grad.as_deref_mut() {
                let mut dz = p;
                dz[y] -= 1.0;
                for v in &mut dz {
                    *v /= m;
                }
                let (gt, gw) = g.split_at_mut(split);
                let d = h.len();
                for a in 0..c {
                    for b in 0..d {
                        gw[a * d + b] += dz[a] * h[b];
                    }
                }
                let dh = self
                    .weights
                    .t_matmul(&Matrix::column_vector(&dz))
                    .into_vec();
                let mut d_tan = None;
                if let (Some(wt), Some(t)) = (&wt, trace.tangent()) {
                    let s = 2.0 * self.beta / m;
                    let gw_tan = wt.matmul(&t.transpose());
                    for (o, v) in gw.iter_mut().zip(gw_tan.as_slice()) {
                        *o += s * v;
                    }
                    d_tan = Some(self.weights.t_matmul(wt).scaled(s));
                }
                self.net.backward_encoder(&trace, dh, d_tan, gt);
            }
        }
        Ok(total / m)
    }
}

/// Class id with the largest probability (lowest id on ties) and the
/// probability vector.
pub fn classify(model: &MtcModel, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    let p = softmax(&model.logits(x)?);
    let mut best = 0;
    for (c, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = c;
        }
    }
    Ok((best, p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtcReport {
    pub epoch_losses: Vec<f64>,
    /// Training points whose tangent basis was rank deficient.
    pub skipped_bases: usize,
    pub train_accuracy: f64,
}

/// Tangent bases of the pre-trained autoencoder at every point.
pub fn tangent_bases(
    net: &AutoencoderNet,
    points: &[Vec<f64>],
    k: usize,
) -> Result<(Vec<Option<Matrix>>, usize)> {
    let mut skipped = 0;
    let mut out = Vec::with_capacity(points.len());
    for x in points {
        match tangent_basis(net, x, k) {
            Ok(b) => out.push(Some(b.vectors)),
            Err(Error::RankDeficient { .. }) => {
                skipped += 1;
                out.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((out, skipped))
}

/// Trains the classifier from the pre-trained encoder with Adam on
/// minibatches drawn with replacement, stopping on the same windowed
/// relative-change rule as the autoencoder trainer.
pub fn train_mtc(
    pretrained: &AutoencoderNet,
    data: &Dataset,
    cfg: &MtcConfig,
) -> Result<(MtcModel, MtcReport)> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::Domain("MTC needs labels".into()))?;
    if cfg.batch_size == 0 || cfg.max_epochs == 0 || cfg.steps_per_epoch == Some(0) {
        return Err(Error::Config(vec![
            "batch_size, max_epochs and steps_per_epoch must be positive".into(),
        ]));
    }
    let classes = labels.iter().max().copied().unwrap_or(0) + 1;
    let d = pretrained.code_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 1.0 / (d as f64).sqrt();
    let w = Matrix::from_fn(classes, d, |_, _| rng.random_range(-bound..bound));
    let mut model = MtcModel::new(pretrained.clone(), w, cfg.beta)?;
    let (bases, skipped) = if cfg.beta > 0.0 {
        tangent_bases(pretrained, data.points(), cfg.k)?
    } else {
        (vec![None; data.len()], 0)
    };
    let points = data.points();
    let mut params = model.params();
    let split = model.param_split();
    let mut adam = AdamState::new(params.len());
    let spe = cfg
        .steps_per_epoch
        .unwrap_or_else(|| data.len().div_ceil(cfg.batch_size));
    let mut epoch_losses = Vec::new();
    for _ in 0..cfg.max_epochs {
        let mut sum = 0.0;
        for _ in 0..spe {
            let idx: Vec<usize> = (0..cfg.batch_size)
                .map(|_| rng.random_range(0..data.len()))
                .collect();
            let mut g = vec![0.0; params.len()];
            sum += model.loss_inner(points, labels, &bases, &idx, Some(&mut g))?;
            if cfg.freeze_encoder {
                g[..split].fill(0.0);
            }
            adam.step(
                &mut params,
                &g,
                cfg.alpha,
                cfg.beta1,
                cfg.beta2,
                cfg.adam_eps,
            )?;
            if !cfg.freeze_encoder {
                model.net = model.net.with_theta(params[..split].to_vec())?;
            }
            model.weights = Matrix::new(classes, d, params[split..].to_vec())?;
        }
        epoch_losses.push(sum / spe as f64);
        let e = epoch_losses.len();
        if e > STOP_WINDOW {
            let (old, new) = (epoch_losses[e - 1 - STOP_WINDOW], epoch_losses[e - 1]);
            if (new - old).abs() <= cfg.tol * old.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }
    let mut hits = 0;
    for (x, &y) in points.iter().zip(labels) {
        hits += (classify(&model, x)?.0 == y) as usize;
    }
    let train_accuracy = hits as f64 / data.len() as f64;
    Ok((
        model,
        MtcReport {
            epoch_losses,
            skipped_bases: skipped,
            train_accuracy,
        },
    ))
}
