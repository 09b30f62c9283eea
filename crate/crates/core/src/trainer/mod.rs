//! The alternating algorithm: Adam on θ with the rank targets held fixed,
//! then an Eckart–Young update of every target, repeated for `T` rounds.
//!
//! Randomness comes from one ChaCha stream per round, so a run resumed at a
//! round boundary replays exactly the minibatches of an uninterrupted run.

mod adam;
mod config;
mod report;

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use adam::AdamState;
pub use config::{TrainConfig, STOP_WINDOW};
pub use report::{Method, RoundRecord, TermMeans, TrainReport};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{svd, svd_of_product, truncate_factors, Matrix, SvdFactors};
use crate::losses::{objective, objective_grad, CurvatureKind, Minibatch, RankTargets};
use crate::net::AutoencoderNet;

/// Generator for one outer round; round 0 draws the anchors.
pub fn round_rng(seed: u64, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng
}

/// Draws one minibatch: `ys`, then the noise, then `zs`.
pub fn sample_minibatch(
    rng: &mut ChaCha8Rng,
    n_points: usize,
    anchors: &[usize],
    batch_size: usize,
    dim: usize,
    sigma: f64,
) -> Result<Minibatch> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let ys = (0..batch_size)
        .map(|_| rng.random_range(0..n_points))
        .collect();
    let noise = (0..batch_size)
        .map(|_| (0..dim).map(|_| normal.sample(rng)).collect())
        .collect();
    let zs = (0..batch_size)
        .map(|_| anchors[rng.random_range(0..anchors.len())])
        .collect();
    Ok(Minibatch { ys, noise, zs })
}

/// SVD of `J_g(x)`, through the factored product when the code is narrower
/// than the input.
pub fn jacobian_factors(net: &AutoencoderNet, x: &[f64]) -> Result<(Matrix, SvdFactors)> {
    if net.code_dim() < net.ambient_dim() {
        let pair = net.input_jacobians(x)?;
        let f = svd_of_product(&pair.j_decoder, &pair.j_encoder)?;
        Ok((pair.product(), f))
    } else {
        let j = net.jacobian(x)?;
        let f = svd(&j)?;
        Ok((j, f))
    }
}

struct AnchorUpdate {
    targets: RankTargets,
    jacobians: Vec<Matrix>,
    spectra: Vec<Vec<f64>>,
}

fn factor_anchors(
    net: &AutoencoderNet,
    points: &[Vec<f64>],
    anchors: &[usize],
    k: usize,
) -> Result<AnchorUpdate> {
    let mut jacobians = Vec::with_capacity(anchors.len());
    let mut matrices = Vec::with_capacity(anchors.len());
    let mut spectra = Vec::with_capacity(anchors.len());
    for &a in anchors {
        let x = points
            .get(a)
            .ok_or_else(|| Error::Domain(format!("anchor {a} outside dataset")))?;
        let (j, f) = jacobian_factors(net, x).map_err(|e| Error::AnchorSvd {
            anchor: a,
            source: Box::new(e),
        })?;
        matrices.push(truncate_factors(&f, k.min(f.singular_values.len())));
        spectra.push(f.singular_values);
        jacobians.push(j);
    }
    Ok(AnchorUpdate {
        targets: RankTargets::build(anchors.to_vec(), matrices)?,
        jacobians,
        spectra,
    })
}

/// Eckart–Young update: `B_j = truncate_rank(J_g(x_{i_j}), k)` at every anchor.
pub fn update_rank_targets(
    net: &AutoencoderNet,
    points: &[Vec<f64>],
    anchors: &[usize],
    k: usize,
) -> Result<RankTargets> {
    Ok(factor_anchors(net, points, anchors, k)?.targets)
}

/// Mean of `σ_{k+1} / σ_1` over spectra; zero tails count as 0.
pub fn mean_tail_ratio(spectra: &[Vec<f64>], k: usize) -> f64 {
    if spectra.is_empty() {
        return 0.0;
    }
    let sum: f64 = spectra
        .iter()
        .map(|s| match (s.first(), s.get(k)) {
            (Some(&top), Some(&tail)) if top > 0.0 => tail / top,
            _ => 0.0,
        })
        .sum();
    sum / spectra.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerSummary {
    pub epochs: usize,
    pub steps: usize,
    pub epoch_objectives: Vec<f64>,
    pub terms: TermMeans,
    pub kappa2_guarded: usize,
}

/// Adam on θ with the targets fixed, until the epoch-mean objective changes by
/// less than `inner_tol` (relative) across [`STOP_WINDOW`] epochs or
/// `inner_max_epochs` is reached.
pub fn inner_minimize(
    net: &mut AutoencoderNet,
    points: &[Vec<f64>],
    targets: &RankTargets,
    config: &TrainConfig,
    adam: &mut AdamState,
    rng: &mut ChaCha8Rng,
    round: usize,
) -> Result<InnerSummary> {
    config.validate_fields()?;
    if points.len() < config.batch_size {
        return Err(Error::Config(vec![format!(
            "dataset of {} points is smaller than batch_size {}",
            points.len(),
            config.batch_size
        )]));
    }
    if targets.is_empty() {
        return Err(Error::Domain("no anchors".into()));
    }
    let weights = config.weights()?;
    let spe = config.steps_per_epoch(points.len());
    let n = net.ambient_dim();
    let mut epoch_objectives = Vec::new();
    let mut sums = TermMeans::default();
    let mut guarded = 0;
    let mut steps = 0;
    for epoch in 0..config.inner_max_epochs {
        let mut epoch_sum = 0.0;
        for step in 0..spe {
            let batch = sample_minibatch(
                rng,
                points.len(),
                targets.anchor_indices(),
                config.batch_size,
                n,
                config.sigma,
            )?;
            let diverged = |detail: String| Error::Diverged {
                round,
                epoch,
                step,
                detail,
            };
            let (tv, grad) =
                objective_grad(net, points, targets, &weights, &batch).map_err(|e| {
                    diverged(format!(
                        "{e}; |theta| = {:e}",
                        crate::linalg::norm(net.theta())
                    ))
                })?;
            if !tv.objective.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged(format!(
                    "objective {:e}, reconstruction {:e}, kappa {:e}, rank {:e}, |theta| = {:e}",
                    tv.objective,
                    tv.reconstruction,
                    tv.kappa,
                    tv.rank_penalty,
                    crate::linalg::norm(net.theta())
                )));
            }
            adam.step(
                net.theta_mut(),
                &grad,
                config.alpha,
                config.beta1,
                config.beta2,
                config.adam_eps,
            )?;
            epoch_sum += tv.objective;
            sums.objective += tv.objective;
            sums.reconstruction += tv.reconstruction;
            sums.kappa += tv.kappa;
            sums.rank_penalty += tv.rank_penalty / batch.zs.len() as f64;
            sums.contractive += tv.contractive;
            guarded += tv.kappa2_guarded;
            steps += 1;
        }
        epoch_objectives.push(epoch_sum / spe as f64);
        let e = epoch_objectives.len();
        if e > STOP_WINDOW {
            let old = epoch_objectives[e - 1 - STOP_WINDOW];
            let new = epoch_objectives[e - 1];
            if (new - old).abs() <= config.inner_tol * old.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }
    let s = steps as f64;
    let terms = TermMeans {
        objective: sums.objective / s,
        reconstruction: sums.reconstruction / s,
        kappa: sums.kappa / s,
        rank_penalty: sums.rank_penalty / s,
        contractive: sums.contractive / s,
    };
    Ok(InnerSummary {
        epochs: epoch_objectives.len(),
        steps,
        epoch_objectives,
        terms,
        kappa2_guarded: guarded,
    })
}

const STATE_FORMAT: &str = "rankae-train-state";

/// Everything needed to continue a run at a round boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub net: AutoencoderNet,
    pub adam: AdamState,
    pub targets: RankTargets,
    /// Noise used to evaluate `F` on the anchor set at every target update.
    pub anchor_noise: Vec<Vec<f64>>,
    pub report: TrainReport,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    format: String,
    version: u32,
    state: TrainState,
}

impl TrainState {
    /// Draws the anchors (uniformly, without replacement) and zero targets.
    pub fn init(
        points: &[Vec<f64>],
        net: AutoencoderNet,
        config: TrainConfig,
        method: Method,
    ) -> Result<Self> {
        let config = effective_config(config, method);
        config.validate(points.len(), net.ambient_dim(), net.code_dim())?;
        if points.iter().any(|p| p.len() != net.ambient_dim()) {
            return Err(Error::Dimension(format!(
                "dataset points must have length {}",
                net.ambient_dim()
            )));
        }
        let mut rng = round_rng(config.seed, 0);
        let anchors = rand::seq::index::sample(&mut rng, points.len(), config.anchors).into_vec();
        let normal = Normal::new(0.0, config.sigma).map_err(|e| Error::Domain(e.to_string()))?;
        let n = net.ambient_dim();
        let anchor_noise = (0..anchors.len())
            .map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let targets = RankTargets::zeros(anchors.clone(), n)?;
        let adam = AdamState::new(net.param_count());
        let report = TrainReport::new(method, config, anchors);
        Ok(Self {
            net,
            adam,
            targets,
            anchor_noise,
            report,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.report.config
    }

    pub fn is_finished(&self) -> bool {
        self.report.rounds_completed() >= self.report.config.rounds
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = StateFile {
            format: STATE_FORMAT.into(),
            version: 1,
            state: self.clone(),
        };
        let tmp = path.as_ref().with_extension("tmp");
        fs::write(&tmp, serde_json::to_string(&file)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: StateFile = serde_json::from_str(&fs::read_to_string(path)?)?;
        if file.format != STATE_FORMAT {
            return Err(Error::Domain(format!(
                "not a training state: {:?}",
                file.format
            )));
        }
        let mut state = file.state;
        state.targets.rebuild_lookup();
        let net = state.net;
        state.net = AutoencoderNet::new(
            net.encoder_layers().to_vec(),
            net.decoder_layers().to_vec(),
            net.theta().to_vec(),
        )?;
        if state.adam.first_moment.len() != state.net.param_count() {
            return Err(Error::Dimension(
                "optimizer state does not match the network".into(),
            ));
        }
        Ok(state)
    }
}

fn effective_config(mut config: TrainConfig, method: Method) -> TrainConfig {
    if method == Method::CaeH {
        config.lambda = 0.0;
        config.curvature = CurvatureKind::Kappa0;
    }
    config
}

/// Runs the remaining rounds of `state`, calling `on_round` after each one.
pub fn continue_training(
    points: &[Vec<f64>],
    state: TrainState,
    on_round: impl FnMut(&TrainState) -> Result<()>,
) -> Result<TrainState> {
    continue_rounds(points, state, usize::MAX, on_round)
}

/// Like [`continue_training`] but stops after at most `limit` rounds.
pub fn continue_rounds(
    points: &[Vec<f64>],
    mut state: TrainState,
    limit: usize,
    mut on_round: impl FnMut(&TrainState) -> Result<()>,
) -> Result<TrainState> {
    let config = state.report.config.clone();
    config.validate(points.len(), state.net.ambient_dim(), state.net.code_dim())?;
    let update_targets = state.report.method == Method::Alternating;
    let mut fixed_weights = config.weights()?;
    fixed_weights.lambda = 0.0;
    let anchors = state.report.anchors.clone();
    let fixed_batch = Minibatch {
        ys: anchors.clone(),
        noise: state.anchor_noise.clone(),
        zs: Vec::new(),
    };
    let stop = state.report.rounds_completed().saturating_add(limit);
    while !state.is_finished() && state.report.rounds_completed() < stop {
        let round = state.report.rounds_completed() + 1;
        let start = Instant::now();
        let mut rng = round_rng(config.seed, round);
        let inner = inner_minimize(
            &mut state.net,
            points,
            &state.targets,
            &config,
            &mut state.adam,
            &mut rng,
            round,
        )?;

        let fixed = objective(
            &state.net,
            points,
            &state.targets,
            &fixed_weights,
            &fixed_batch,
        )?
        .objective;
        let update = factor_anchors(&state.net, points, &anchors, config.k)?;
        let rank_part = |t: &RankTargets| -> f64 {
            let s: f64 = update
                .jacobians
                .iter()
                .zip(t.matrices())
                .map(|(j, b)| j.sub(b).frobenius_norm_sq())
                .sum();
            config.lambda * s / anchors.len() as f64
        };
        let before = fixed + rank_part(&state.targets);
        let after = if update_targets {
            let v = fixed + rank_part(&update.targets);
            state.targets = update.targets;
            v
        } else {
            before
        };
        state.report.rounds.push(RoundRecord {
            round,
            epochs: inner.epochs,
            steps: inner.steps,
            epoch_objectives: inner.epoch_objectives,
            terms: inner.terms,
            objective_before_update: before,
            objective_after_update: after,
            mean_tail_ratio: mean_tail_ratio(&update.spectra, config.k),
            anchor_spectra: update.spectra,
            kappa2_guarded: inner.kappa2_guarded,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        });
        on_round(&state)?;
    }
    Ok(state)
}

/// The alternating algorithm: targets start at zero and are refreshed after
/// every inner minimization.
pub fn train(
    dataset: &Dataset,
    net: AutoencoderNet,
    config: &TrainConfig,
) -> Result<(AutoencoderNet, TrainReport)> {
    let state = TrainState::init(dataset.points(), net, config.clone(), Method::Alternating)?;
    let state = continue_training(dataset.points(), state, |_| Ok(()))?;
    Ok((state.net, state.report))
}

/// Contractive baseline: reconstruction plus `contractive_weight · ||J_e||²`
/// plus `γ · κ0`, with no rank penalty. The optimizer and stopping rule are
/// shared with the alternating loop; anchor spectra are still recorded.
pub fn train_cae_h_baseline(
    dataset: &Dataset,
    net: AutoencoderNet,
    config: &TrainConfig,
) -> Result<(AutoencoderNet, TrainReport)> {
    let state = TrainState::init(dataset.points(), net, config.clone(), Method::CaeH)?;
    let state = continue_training(dataset.points(), state, |_| Ok(()))?;
    Ok((state.net, state.report))
}
