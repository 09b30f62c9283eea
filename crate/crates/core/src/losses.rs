//! Objective terms and their assembly.
//!
//! Every term follows the minibatch-mean convention of the trainer:
//!
//! ```text
//! L = (1/m) Σ ||y_i − g(y_i)||²
//!   + (γ/m) Σ κ(y_i, ε_i)
//!   + (λ/m) Σ ||J_g(z_i) − B_{z_i}||²_F
//! ```
//!
//! Each `*_grad` function returns the value together with `dL/dθ`, computed
//! by propagating cotangents through the tangent-carrying traces of the net.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, svd, Matrix};
use crate::net::{AutoencoderNet, NetCotangent};

/// `||J ε||²` below this multiple of `||ε||²` drops the κ2 contribution.
pub const KAPPA2_GUARD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureKind {
    /// Encoder-Jacobian perturbation norm.
    Kappa0,
    /// Full-Jacobian perturbation norm.
    Kappa1,
    /// Taylor-remainder quotient.
    Kappa2,
}

impl CurvatureKind {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            0 => Ok(Self::Kappa0),
            1 => Ok(Self::Kappa1),
            2 => Ok(Self::Kappa2),
            _ => Err(Error::Domain(format!(
                "curvature mode must be 0, 1 or 2, got {i}"
            ))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Self::Kappa0 => 0,
            Self::Kappa1 => 1,
            Self::Kappa2 => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureMode {
    pub kind: CurvatureKind,
    /// Standard deviation of the Gaussian input perturbation.
    pub noise_sigma: f64,
}

impl CurvatureMode {
    pub fn new(kind: CurvatureKind, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "noise sigma must be positive, got {noise_sigma}"
            )));
        }
        Ok(Self { kind, noise_sigma })
    }
}

/// Rank-≤k target matrices attached to a fixed set of anchor points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTargets {
    anchor_indices: Vec<usize>,
    matrices: Vec<Matrix>,
    #[serde(skip)]
    lookup: HashMap<usize, usize>,
}

impl RankTargets {
    /// All-zero targets, the starting point of the alternating algorithm.
    pub fn zeros(anchor_indices: Vec<usize>, n: usize) -> Result<Self> {
        let matrices = vec![Matrix::zeros(n, n); anchor_indices.len()];
        Self::build(anchor_indices, matrices)
    }

    /// Validates distinct anchors and `rank(B_j) <= k` (relative tolerance 1e-8).
    pub fn new(anchor_indices: Vec<usize>, matrices: Vec<Matrix>, k: usize) -> Result<Self> {
        for (j, b) in matrices.iter().enumerate() {
            let sv = svd(b)?.singular_values;
            if k < sv.len() && sv[k] > 1e-8 * sv[0].max(f64::MIN_POSITIVE) {
                return Err(Error::Domain(format!(
                    "target {j} has rank above {k}: sigma_{} = {:e}",
                    k + 1,
                    sv[k]
                )));
            }
        }
        Self::build(anchor_indices, matrices)
    }

    pub(crate) fn build(anchor_indices: Vec<usize>, matrices: Vec<Matrix>) -> Result<Self> {
        if anchor_indices.len() != matrices.len() {
            return Err(Error::Dimension(format!(
                "{} anchors but {} target matrices",
                anchor_indices.len(),
                matrices.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(anchor_indices.len());
        for (pos, &idx) in anchor_indices.iter().enumerate() {
            if lookup.insert(idx, pos).is_some() {
                return Err(Error::Domain(format!("anchor index {idx} repeated")));
            }
        }
        Ok(Self {
            anchor_indices,
            matrices,
            lookup,
        })
    }

    pub fn anchor_indices(&self) -> &[usize] {
        &self.anchor_indices
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn len(&self) -> usize {
        self.anchor_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor_indices.is_empty()
    }

    pub fn target(&self, dataset_index: usize) -> Result<&Matrix> {
        self.position(dataset_index).map(|p| &self.matrices[p])
    }

    fn position(&self, dataset_index: usize) -> Result<usize> {
        if self.lookup.len() != self.anchor_indices.len() {
            // Deserialized values arrive without the index map.
            return self
                .anchor_indices
                .iter()
                .position(|&a| a == dataset_index)
                .ok_or_else(|| Error::Domain(format!("index {dataset_index} is not an anchor")));
        }
        self.lookup
            .get(&dataset_index)
            .copied()
            .ok_or_else(|| Error::Domain(format!("index {dataset_index} is not an anchor")))
    }

    pub(crate) fn rebuild_lookup(&mut self) {
        self.lookup = self
            .anchor_indices
            .iter()
            .enumerate()
            .map(|(p, &i)| (i, p))
            .collect();
    }
}

/// Weights and switches of the objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub gamma: f64,
    pub lambda: f64,
    pub curvature: CurvatureMode,
    /// Multiply κ1 by `n^-2`.
    pub kappa1_dim_scaling: bool,
    /// Weight of `||J_e(y)||²_F`, used by the contractive baseline.
    pub contractive: f64,
}

impl ObjectiveWeights {
    pub fn reconstruction_only(curvature: CurvatureMode) -> Self {
        Self {
            gamma: 0.0,
            lambda: 0.0,
            curvature,
            kappa1_dim_scaling: false,
            contractive: 0.0,
        }
    }
}

/// One minibatch: reconstruction/curvature points `ys` with their noise
/// vectors, and anchor draws `zs`. Indices refer to the dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Minibatch {
    pub ys: Vec<usize>,
    pub noise: Vec<Vec<f64>>,
    pub zs: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermValues {
    /// Mean squared reconstruction error over `ys`.
    pub reconstruction: f64,
    /// Mean curvature term over `ys` (unweighted).
    pub kappa: f64,
    /// Sum over `zs` of `||J − B||²_F` (unweighted).
    pub rank_penalty: f64,
    /// Mean `||J_e||²_F` over `ys` (unweighted).
    pub contractive: f64,
    /// Weighted total.
    pub objective: f64,
    /// κ2 contributions dropped by the denominator guard.
    pub kappa2_guarded: usize,
}

#[derive(Clone, Copy, Default)]
struct PointWeights {
    recon: f64,
    kappa: f64,
    contractive: f64,
}

#[derive(Default)]
struct PointValues {
    recon: f64,
    kappa: f64,
    contractive: f64,
    guarded: bool,
}

fn check_finite(v: f64, what: &str, i: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} at batch element {i}")))
    }
}

fn shifted(y: &[f64], eps: &[f64]) -> Vec<f64> {
    y.iter().zip(eps).map(|(a, b)| a + b).collect()
}

/// Contributions of one point to every term except the rank penalty.
/// Terms with zero weight are neither evaluated nor differentiated.
fn point_terms(
    net: &AutoencoderNet,
    y: &[f64],
    eps: Option<&[f64]>,
    weights: &ObjectiveWeights,
    pw: PointWeights,
    grad: Option<&mut [f64]>,
) -> Result<PointValues> {
    let n = net.ambient_dim();
    let want_kappa = pw.kappa != 0.0;
    let want_contractive = pw.contractive != 0.0;
    let mut out = PointValues::default();
    let eps = match (want_kappa, eps) {
        (true, Some(e)) if e.len() == n => Some(e),
        (true, Some(e)) => {
            return Err(Error::Dimension(format!(
                "noise vector has length {}, expected {n}",
                e.len()
            )))
        }
        (true, None) => return Err(Error::Domain("curvature term needs a noise vector".into())),
        (false, _) => None,
    };
    let kind = weights.curvature.kind;
    let kappa_scale = if kind == CurvatureKind::Kappa1 && weights.kappa1_dim_scaling {
        1.0 / (n * n) as f64
    } else {
        1.0
    };

    // Main trace at y; carries the identity seed for κ1 and the noise
    // direction for κ2 so the reconstruction shares it.
    let seed = match (want_kappa, kind) {
        (true, CurvatureKind::Kappa1) => Some(Matrix::identity(n)),
        (true, CurvatureKind::Kappa2) => Some(Matrix::column_vector(eps.unwrap())),
        _ => None,
    };
    let t0 = net.trace(y, seed)?;
    let resid: Vec<f64> = t0.output().iter().zip(y).map(|(g, x)| g - x).collect();
    out.recon = dot(&resid, &resid);

    let mut cot0 = NetCotangent {
        output: Some(resid.iter().map(|r| 2.0 * pw.recon * r).collect()),
        ..Default::default()
    };
    let mut extra: Vec<(crate::net::NetTrace, NetCotangent)> = Vec::new();
    let mut enc_extra = Vec::new();

    if want_kappa {
        let e = eps.unwrap();
        let yp = shifted(y, e);
        match kind {
            CurvatureKind::Kappa1 => {
                let t1 = net.trace(&yp, Some(Matrix::identity(n)))?;
                let diff = t1
                    .output_tangent()
                    .unwrap()
                    .sub(t0.output_tangent().unwrap());
                out.kappa = kappa_scale * diff.frobenius_norm_sq();
                let c = 2.0 * pw.kappa * kappa_scale;
                cot0.output_tangent = Some(diff.scaled(-c));
                let cot1 = NetCotangent {
                    output_tangent: Some(diff.scaled(c)),
                    ..Default::default()
                };
                extra.push((t1, cot1));
            }
            CurvatureKind::Kappa2 => {
                let t1 = net.trace(&yp, None)?;
                let je = t0.output_tangent().unwrap().as_slice().to_vec();
                let q = dot(&je, &je);
                if q < KAPPA2_GUARD * dot(e, e) {
                    out.guarded = true;
                } else {
                    let r: Vec<f64> = (0..n)
                        .map(|i| t1.output()[i] - t0.output()[i] - je[i])
                        .collect();
                    let val = dot(&r, &r) / q;
                    out.kappa = val;
                    let c = pw.kappa;
                    let d_g1: Vec<f64> = r.iter().map(|ri| c * 2.0 * ri / q).collect();
                    let out0 = cot0.output.as_mut().unwrap();
                    for (o, d) in out0.iter_mut().zip(&d_g1) {
                        *o -= d;
                    }
                    let d_je: Vec<f64> = (0..n)
                        .map(|i| -d_g1[i] - c * 2.0 * val * je[i] / q)
                        .collect();
                    cot0.output_tangent = Some(Matrix::column_vector(&d_je));
                    extra.push((
                        t1,
                        NetCotangent {
                            output: Some(d_g1),
                            ..Default::default()
                        },
                    ));
                }
            }
            CurvatureKind::Kappa0 => {
                let e0 = net.trace_encoder(y, Some(Matrix::identity(n)))?;
                let e1 = net.trace_encoder(&yp, Some(Matrix::identity(n)))?;
                let diff = e1.tangent().unwrap().sub(e0.tangent().unwrap());
                out.kappa = diff.frobenius_norm_sq();
                let c = 2.0 * pw.kappa;
                let d = net.code_dim();
                let mut g0 = diff.scaled(-c);
                if want_contractive {
                    let je0 = e0.tangent().unwrap();
                    out.contractive = je0.frobenius_norm_sq();
                    g0.add_assign_scaled(je0, 2.0 * pw.contractive);
                }
                enc_extra.push((e0, g0, vec![0.0; d]));
                enc_extra.push((e1, diff.scaled(c), vec![0.0; d]));
            }
        }
    }
    if want_contractive && !(want_kappa && kind == CurvatureKind::Kappa0) {
        let e0 = net.trace_encoder(y, Some(Matrix::identity(n)))?;
        let je0 = e0.tangent().unwrap();
        out.contractive = je0.frobenius_norm_sq();
        let g0 = je0.scaled(2.0 * pw.contractive);
        enc_extra.push((e0, g0, vec![0.0; net.code_dim()]));
    }

    if let Some(grad) = grad {
        net.backward(&t0, cot0, grad);
        for (t, c) in extra {
            net.backward(&t, c, grad);
        }
        for (t, g, zero) in enc_extra {
            net.backward_encoder(&t, zero, Some(g), grad);
        }
    }
    Ok(out)
}

fn rank_point(
    net: &AutoencoderNet,
    x: &[f64],
    target: &Matrix,
    weight: f64,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let n = net.ambient_dim();
    if target.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "target is {:?}, expected {n}x{n}",
            target.shape()
        )));
    }
    let t = net.trace(x, Some(Matrix::identity(n)))?;
    let diff = t.output_tangent().unwrap().sub(target);
    let val = diff.frobenius_norm_sq();
    if let Some(grad) = grad {
        let cot = NetCotangent {
            output_tangent: Some(diff.scaled(2.0 * weight)),
            ..Default::default()
        };
        net.backward(&t, cot, grad);
    }
    Ok(val)
}

fn non_empty<T>(batch: &[T]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Domain("batch must be non-empty".into()));
    }
    Ok(())
}

fn recon_inner(
    net: &AutoencoderNet,
    batch: &[impl AsRef<[f64]>],
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    non_empty(batch)?;
    let m = batch.len() as f64;
    let w = ObjectiveWeights::reconstruction_only(CurvatureMode {
        kind: CurvatureKind::Kappa1,
        noise_sigma: 1.0,
    });
    let pw = PointWeights {
        recon: 1.0 / m,
        ..Default::default()
    };
    let mut total = 0.0;
    for (i, y) in batch.iter().enumerate() {
        let v = point_terms(net, y.as_ref(), None, &w, pw, grad.as_deref_mut())?;
        total += check_finite(v.recon, "reconstruction term", i)?;
    }
    Ok(total / m)
}

/// Mean squared reconstruction error `(1/m) Σ ||x_i − g(x_i)||²`.
pub fn reconstruction_loss(net: &AutoencoderNet, batch: &[impl AsRef<[f64]>]) -> Result<f64> {
    recon_inner(net, batch, None)
}

pub fn reconstruction_grad(
    net: &AutoencoderNet,
    batch: &[impl AsRef<[f64]>],
) -> Result<(f64, Vec<f64>)> {
    let mut g = vec![0.0; net.param_count()];
    let v = recon_inner(net, batch, Some(&mut g))?;
    Ok((v, g))
}

/// Value of a curvature term together with the number of guarded κ2 points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaValue {
    pub value: f64,
    pub guarded: usize,
}

fn kappa_inner(
    net: &AutoencoderNet,
    batch: &[impl AsRef<[f64]>],
    mode: CurvatureMode,
    noise: &[Vec<f64>],
    dim_scaling: bool,
    mut grad: Option<&mut [f64]>,
) -> Result<KappaValue> {
    non_empty(batch)?;
    if noise.len() != batch.len() {
        return Err(Error::Dimension(format!(
            "{} noise vectors for {} batch elements",
            noise.len(),
            batch.len()
        )));
    }
    let m = batch.len() as f64;
    let w = ObjectiveWeights {
        gamma: 1.0,
        lambda: 0.0,
        curvature: mode,
        kappa1_dim_scaling: dim_scaling,
        contractive: 0.0,
    };
    let pw = PointWeights {
        kappa: 1.0 / m,
        ..Default::default()
    };
    let mut total = 0.0;
    let mut guarded = 0;
    for (i, (y, e)) in batch.iter().zip(noise).enumerate() {
        let v = point_terms(net, y.as_ref(), Some(e), &w, pw, grad.as_deref_mut())?;
        total += check_finite(v.kappa, "curvature term", i)?;
        guarded += v.guarded as usize;
    }
    Ok(KappaValue {
        value: total / m,
        guarded,
    })
}

/// Mean curvature term over the batch with caller-supplied noise vectors.
pub fn kappa_term(
    net: &AutoencoderNet,
    batch: &[impl AsRef<[f64]>],
    mode: CurvatureMode,
    noise: &[Vec<f64>],
) -> Result<KappaValue> {
    kappa_inner(net, batch, mode, noise, false, None)
}

/// [`kappa_term`] with the optional `n^-2` factor on κ1.
pub fn kappa_term_scaled(
    net: &AutoencoderNet,
    batch: &[impl AsRef<[f64]>],
    mode: CurvatureMode,
    noise: &[Vec<f64>],
    dim_scaling: bool,
) -> Result<KappaValue> {
    kappa_inner(net, batch, mode, noise, dim_scaling, None)
}

pub fn kappa_grad(
    net: &AutoencoderNet,
    batch: &[impl AsRef<[f64]>],
    mode: CurvatureMode,
    noise: &[Vec<f64>],
) -> Result<(KappaValue, Vec<f64>)> {
    let mut g = vec![0.0; net.param_count()];
    let v = kappa_inner(net, batch, mode, noise, false, Some(&mut g))?;
    Ok((v, g))
}

fn contractive_inner(
    net: &AutoencoderNet,
    batch: &[impl AsRef<[f64]>],
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    non_empty(batch)?;
    let m = batch.len() as f64;
    let w = ObjectiveWeights::reconstruction_only(CurvatureMode {
        kind: CurvatureKind::Kappa1,
        noise_sigma: 1.0,
    });
    let pw = PointWeights {
        contractive: 1.0 / m,
        ..Default::default()
    };
    let mut total = 0.0;
    for (i, y) in batch.iter().enumerate() {
        let v = point_terms(net, y.as_ref(), None, &w, pw, grad.as_deref_mut())?;
        total += check_finite(v.contractive, "contractive term", i)?;
    }
    Ok(total / m)
}

/// Mean `||J_e(x)||²_F`, the classic contractive penalty.
pub fn contractive_penalty(net: &AutoencoderNet, batch: &[impl AsRef<[f64]>]) -> Result<f64> {
    contractive_inner(net, batch, None)
}

pub fn contractive_grad(
    net: &AutoencoderNet,
    batch: &[impl AsRef<[f64]>],
) -> Result<(f64, Vec<f64>)> {
    let mut g = vec![0.0; net.param_count()];
    let v = contractive_inner(net, batch, Some(&mut g))?;
    Ok((v, g))
}

fn rank_inner(
    net: &AutoencoderNet,
    points: &[Vec<f64>],
    targets: &RankTargets,
    subsample: &[usize],
    weight: f64,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, &z) in subsample.iter().enumerate() {
        let b = targets.target(z)?;
        let x = points.get(z).ok_or_else(|| {
            Error::Domain(format!(
                "anchor index {z} outside dataset of {}",
                points.len()
            ))
        })?;
        total += check_finite(
            rank_point(net, x, b, weight, grad.as_deref_mut())?,
            "rank penalty",
            i,
        )?;
    }
    Ok(total)
}

/// `Σ_{z in subsample} ||J_g(x_z) − B_z||²_F`; every index must be an anchor.
pub fn rank_penalty(
    net: &AutoencoderNet,
    points: &[Vec<f64>],
    targets: &RankTargets,
    subsample: &[usize],
) -> Result<f64> {
    rank_inner(net, points, targets, subsample, 0.0, None)
}

pub fn rank_penalty_grad(
    net: &AutoencoderNet,
    points: &[Vec<f64>],
    targets: &RankTargets,
    subsample: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let mut g = vec![0.0; net.param_count()];
    let v = rank_inner(net, points, targets, subsample, 1.0, Some(&mut g))?;
    Ok((v, g))
}

fn objective_inner(
    net: &AutoencoderNet,
    points: &[Vec<f64>],
    targets: &RankTargets,
    weights: &ObjectiveWeights,
    batch: &Minibatch,
    mut grad: Option<&mut [f64]>,
) -> Result<TermValues> {
    non_empty(&batch.ys)?;
    let want_kappa = weights.gamma != 0.0;
    if want_kappa && batch.noise.len() != batch.ys.len() {
        return Err(Error::Dimension(format!(
            "{} noise vectors for {} batch elements",
            batch.noise.len(),
            batch.ys.len()
        )));
    }
    let m = batch.ys.len() as f64;
    let pw = PointWeights {
        recon: 1.0 / m,
        kappa: weights.gamma / m,
        contractive: weights.contractive / m,
    };
    let mut tv = TermValues::default();
    for (i, &yi) in batch.ys.iter().enumerate() {
        let y = points.get(yi).ok_or_else(|| {
            Error::Domain(format!(
                "batch index {yi} outside dataset of {}",
                points.len()
            ))
        })?;
        let eps = if want_kappa {
            Some(batch.noise[i].as_slice())
        } else {
            None
        };
        let v = point_terms(net, y, eps, weights, pw, grad.as_deref_mut())?;
        tv.reconstruction += check_finite(v.recon, "reconstruction term", i)?;
        tv.kappa += check_finite(v.kappa, "curvature term", i)?;
        tv.contractive += check_finite(v.contractive, "contractive term", i)?;
        tv.kappa2_guarded += v.guarded as usize;
    }
    tv.reconstruction /= m;
    tv.kappa /= m;
    tv.contractive /= m;
    let mut rank_part = 0.0;
    if weights.lambda != 0.0 && !batch.zs.is_empty() {
        let w = weights.lambda / batch.zs.len() as f64;
        tv.rank_penalty = rank_inner(net, points, targets, &batch.zs, w, grad)?;
        rank_part = w * tv.rank_penalty;
    }
    tv.objective = tv.reconstruction
        + weights.gamma * tv.kappa
        + rank_part
        + weights.contractive * tv.contractive;
    Ok(tv)
}

/// Minibatch objective `recon + γ κ + (λ/|zs|) Σ ||J − B||² (+ c ||J_e||²)`.
pub fn objective(
    net: &AutoencoderNet,
    points: &[Vec<f64>],
    targets: &RankTargets,
    weights: &ObjectiveWeights,
    batch: &Minibatch,
) -> Result<TermValues> {
    objective_inner(net, points, targets, weights, batch, None)
}

pub fn objective_grad(
    net: &AutoencoderNet,
    points: &[Vec<f64>],
    targets: &RankTargets,
    weights: &ObjectiveWeights,
    batch: &Minibatch,
) -> Result<(TermValues, Vec<f64>)> {
    let mut g = vec![0.0; net.param_count()];
    let v = objective_inner(net, points, targets, weights, batch, Some(&mut g))?;
    Ok((v, g))
}

#[cfg(test)]
mod tests;
