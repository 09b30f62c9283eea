//! Numerical curvature: the principal-curvature upper bound of a smooth map
//! and its encoder/decoder split, plus curve curvature and tangent bases.
//!
//! The bound at `x` is the limit superior, as `ε → 0`, of
//!
//! ```text
//! min_λ || [εᵀ H_i ε]_i − λ J ε || / ||J ε||²
//! ```
//!
//! where `H_i` are the Hessians of the output components. The minimum over
//! `λ` is the residual of projecting `b = [εᵀ H_i ε]` off `a = J ε`. The limit
//! is approximated on a ladder of scales and a finite set of directions, so
//! the estimate is a lower bound on the supremum over all directions.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, svd, wedge_norm, Matrix};
use crate::net::{fd_hessians, AutoencoderNet, HESSIAN_STEP};

/// A twice-differentiable map `R^input_dim → R^output_dim`.
pub trait SmoothMap {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<Matrix>;

    /// One `input_dim x input_dim` Hessian per output component. Defaults to
    /// central differences of [`SmoothMap::jacobian`].
    fn hessians(&self, x: &[f64]) -> Result<Vec<Matrix>> {
        fd_hessians(|p| self.jacobian(p), x, HESSIAN_STEP)
    }
}

/// `x ↦ r x / ||x||`, whose image is the sphere of radius `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereMap {
    pub dim: usize,
    pub radius: f64,
}

impl SphereMap {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim < 2 || !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Domain(format!(
                "sphere needs dim >= 2 and radius > 0, got {dim}, {radius}"
            )));
        }
        Ok(Self { dim, radius })
    }

    fn check(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "sphere map expects length {}, got {}",
                self.dim,
                x.len()
            )));
        }
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::Domain(
                "sphere map is undefined at the origin".into(),
            ));
        }
        Ok(r)
    }

    /// Closed-form Hessians `r (3 x_i x xᵀ/|x|⁵ − (e_i xᵀ + x e_iᵀ + x_i I)/|x|³)`.
    pub fn exact_hessians(&self, x: &[f64]) -> Result<Vec<Matrix>> {
        let s = self.check(x)?;
        let (s3, s5) = (s.powi(3), s.powi(5));
        Ok((0..self.dim)
            .map(|i| {
                Matrix::from_fn(self.dim, self.dim, |a, b| {
                    let mut v = 3.0 * x[i] * x[a] * x[b] / s5;
                    v -= ((a == i) as u8 as f64 * x[b] + (b == i) as u8 as f64 * x[a]) / s3;
                    if a == b {
                        v -= x[i] / s3;
                    }
                    self.radius * v
                })
            })
            .collect())
    }
}

impl SmoothMap for SphereMap {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.check(x)?;
        Ok(x.iter().map(|v| self.radius * v / s).collect())
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let s = self.check(x)?;
        let s3 = s.powi(3);
        Ok(Matrix::from_fn(self.dim, self.dim, |i, j| {
            let id = if i == j { 1.0 / s } else { 0.0 };
            self.radius * (id - x[i] * x[j] / s3)
        }))
    }
}

/// `x ↦ A x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub a: Matrix,
    pub b: Vec<f64>,
}

impl AffineMap {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        if b.len() != a.rows() {
            return Err(Error::Dimension(format!(
                "offset of length {} for {} rows",
                b.len(),
                a.rows()
            )));
        }
        Ok(Self { a, b })
    }
}

impl SmoothMap for AffineMap {
    fn input_dim(&self) -> usize {
        self.a.cols()
    }

    fn output_dim(&self) -> usize {
        self.a.rows()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.a.cols() {
            return Err(Error::Dimension(format!(
                "affine map expects length {}",
                self.a.cols()
            )));
        }
        Ok(self
            .a
            .matvec(x)
            .iter()
            .zip(&self.b)
            .map(|(u, v)| u + v)
            .collect())
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.a.cols() {
            return Err(Error::Dimension(format!(
                "affine map expects length {}",
                self.a.cols()
            )));
        }
        Ok(self.a.clone())
    }

    fn hessians(&self, _x: &[f64]) -> Result<Vec<Matrix>> {
        let n = self.a.cols();
        Ok(vec![Matrix::zeros(n, n); self.a.rows()])
    }
}

impl SmoothMap for AutoencoderNet {
    fn input_dim(&self) -> usize {
        self.ambient_dim()
    }

    fn output_dim(&self) -> usize {
        self.ambient_dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.1)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        AutoencoderNet::jacobian(self, x)
    }
}

/// The encoder half of a net as a map `R^n → R^d`.
#[derive(Clone, Copy, Debug)]
pub struct EncoderMap<'a>(pub &'a AutoencoderNet);

impl SmoothMap for EncoderMap<'_> {
    fn input_dim(&self) -> usize {
        self.0.ambient_dim()
    }

    fn output_dim(&self) -> usize {
        self.0.code_dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.encode(x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.0.encoder_jacobian(x)
    }
}

/// The decoder half of a net as a map `R^d → R^n`.
#[derive(Clone, Copy, Debug)]
pub struct DecoderMap<'a>(pub &'a AutoencoderNet);

impl SmoothMap for DecoderMap<'_> {
    fn input_dim(&self) -> usize {
        self.0.code_dim()
    }

    fn output_dim(&self) -> usize {
        self.0.ambient_dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.decode(x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.0.decoder_jacobian(x)
    }
}

/// `outer ∘ inner`.
pub struct Composite<A, B> {
    pub inner: A,
    pub outer: B,
}

impl<A: SmoothMap, B: SmoothMap> SmoothMap for Composite<A, B> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.outer.output_dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.outer.eval(&self.inner.eval(x)?)
    }

    fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let y = self.inner.eval(x)?;
        self.outer
            .jacobian(&y)?
            .try_matmul(&self.inner.jacobian(x)?)
    }
}

/// `min_λ ||b − λ a||`, the residual of projecting `b` off `a`.
pub fn min_over_lambda(a: &[f64], b: &[f64]) -> Result<f64> {
    let aa = dot(a, a);
    if aa == 0.0 {
        return Ok(norm(b));
    }
    Ok(wedge_norm(a, b)? / aa.sqrt())
}

/// How the second-order vector `[εᵀ H_i ε]` is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecondOrder {
    /// From the map's Hessians; the quotient is then independent of the scale.
    #[default]
    Hessian,
    /// `2 (g(x+ε) − g(x) − J ε)`, which tends to the Hessian form as `ε → 0`.
    TaylorRemainder,
}

/// Default ladder `0.1, 0.05, …` down to `1e-4`.
pub fn default_scales() -> Vec<f64> {
    let mut s = vec![];
    let mut v = 0.1;
    while v >= 1e-4 * (1.0 - 1e-12) {
        s.push(v);
        v *= 0.5;
    }
    s
}

/// `±e_i` for every axis followed by `random` seeded unit vectors.
pub fn default_directions(n: usize, random: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(2 * n + random);
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = sign;
            dirs.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while dirs.len() < 2 * n + random {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let len = norm(&v);
        if len > 1e-8 {
            dirs.push(v.into_iter().map(|c| c / len).collect());
        }
    }
    dirs
}

/// Number of random directions in the default set.
pub const DEFAULT_RANDOM_DIRECTIONS: usize = 32;
pub const DEFAULT_DIRECTION_SEED: u64 = 0x5eed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem4Options {
    pub scales: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub mode: SecondOrder,
}

impl Theorem4Options {
    pub fn defaults(n: usize) -> Self {
        Self {
            scales: default_scales(),
            directions: default_directions(n, DEFAULT_RANDOM_DIRECTIONS, DEFAULT_DIRECTION_SEED),
            mode: SecondOrder::Hessian,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuotientSample {
    pub scale: f64,
    pub direction: usize,
    pub quotient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    /// Maximum quotient at the smallest scale.
    pub value: f64,
    pub epsilon_scale: f64,
    /// Directions outside the kernel of `J`, i.e. those that were evaluated.
    pub direction_count: usize,
    /// `(scale, max quotient)` for every scale, largest scale first.
    pub convergence_trace: Vec<(f64, f64)>,
    pub samples: Vec<QuotientSample>,
}

impl CurvatureEstimate {
    /// Rows `scale,direction_index,quotient`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["scale", "direction_index", "quotient"])?;
        for s in &self.samples {
            w.write_record(&[
                format!("{:e}", s.scale),
                s.direction.to_string(),
                format!("{:.12e}", s.quotient),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Kernel test for `J u`, relative to the size of `J`.
const KERNEL_TOL: f64 = 1e-10;

/// Curvature upper bound at `x` with Hessian quadratic forms.
pub fn theorem4_bound(
    map: &dyn SmoothMap,
    x: &[f64],
    scales: &[f64],
    directions: &[Vec<f64>],
) -> Result<CurvatureEstimate> {
    let opts = Theorem4Options {
        scales: scales.to_vec(),
        directions: directions.to_vec(),
        mode: SecondOrder::Hessian,
    };
    theorem4_bound_with(map, x, &opts)
}

pub fn theorem4_bound_with(
    map: &dyn SmoothMap,
    x: &[f64],
    opts: &Theorem4Options,
) -> Result<CurvatureEstimate> {
    let n = map.input_dim();
    if x.len() != n {
        return Err(Error::Dimension(format!(
            "point of length {} for a map on R^{n}",
            x.len()
        )));
    }
    if opts.scales.is_empty() || opts.directions.is_empty() {
        return Err(Error::Domain(
            "need at least one scale and one direction".into(),
        ));
    }
    if opts.scales.iter().any(|s| !(*s > 0.0 && s.is_finite()))
        || opts.scales.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::Domain(
            "scales must be positive and strictly decreasing".into(),
        ));
    }
    if let Some(d) = opts.directions.iter().find(|d| d.len() != n) {
        return Err(Error::Dimension(format!(
            "direction of length {}, expected {n}",
            d.len()
        )));
    }
    let j = map.jacobian(x)?;
    let jnorm = j.frobenius_norm();
    let live: Vec<usize> = (0..opts.directions.len())
        .filter(|&i| {
            let u = &opts.directions[i];
            norm(&j.matvec(u)) > KERNEL_TOL * jnorm.max(f64::MIN_POSITIVE) * norm(u)
        })
        .collect();
    if live.is_empty() {
        return Err(Error::Degenerate(format!(
            "every direction lies in the kernel of J at {x:?}"
        )));
    }
    let hessians = match opts.mode {
        SecondOrder::Hessian => Some(map.hessians(x)?),
        SecondOrder::TaylorRemainder => None,
    };
    let gx = match opts.mode {
        SecondOrder::TaylorRemainder => Some(map.eval(x)?),
        SecondOrder::Hessian => None,
    };
    let mut trace = Vec::with_capacity(opts.scales.len());
    let mut samples = Vec::with_capacity(opts.scales.len() * live.len());
    for &s in &opts.scales {
        let mut best: f64 = 0.0;
        for &di in &live {
            let eps: Vec<f64> = opts.directions[di].iter().map(|u| s * u).collect();
            let a = j.matvec(&eps);
            let b: Vec<f64> = match (&hessians, &gx) {
                (Some(h), _) => h.iter().map(|hi| dot(&eps, &hi.matvec(&eps))).collect(),
                (None, Some(g0)) => {
                    let xe: Vec<f64> = x.iter().zip(&eps).map(|(p, q)| p + q).collect();
                    let g1 = map.eval(&xe)?;
                    (0..a.len()).map(|i| 2.0 * (g1[i] - g0[i] - a[i])).collect()
                }
                _ => unreachable!(),
            };
            let q = min_over_lambda(&a, &b)? / dot(&a, &a);
            if !q.is_finite() {
                return Err(Error::NonFinite(format!(
                    "curvature quotient at scale {s}, direction {di}"
                )));
            }
            best = best.max(q);
            samples.push(QuotientSample {
                scale: s,
                direction: di,
                quotient: q,
            });
        }
        trace.push((s, best));
    }
    let &(epsilon_scale, value) = trace.last().unwrap();
    Ok(CurvatureEstimate {
        value,
        epsilon_scale,
        direction_count: live.len(),
        convergence_trace: trace,
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem5Terms {
    /// Largest singular value of the decoder Jacobian at the code.
    pub sigma_1: f64,
    /// Smallest of the `d` singular values of the decoder Jacobian.
    pub sigma_k: f64,
    /// Encoder bound `C(e)` on the same scales and directions.
    pub encoder_bound: f64,
    /// `sqrt(Σ_i ||H_{d_i}||²_F)`.
    pub decoder_hessian_norm: f64,
    pub rhs: f64,
}

/// Right-hand side `σ_1 C(e)/σ_k² + sqrt(Σ ||H_{d_i}||²_F)/σ_k²` of the
/// encoder/decoder curvature bound, with singular values ordered
/// `σ_1 ≥ … ≥ σ_k > 0`.
pub fn theorem5_rhs(
    encoder: &dyn SmoothMap,
    decoder: &dyn SmoothMap,
    x: &[f64],
    opts: &Theorem4Options,
) -> Result<Theorem5Terms> {
    if decoder.input_dim() != encoder.output_dim() {
        return Err(Error::Dimension(
            "decoder input must match encoder output".into(),
        ));
    }
    if decoder.input_dim() > decoder.output_dim() {
        return Err(Error::Dimension(
            "code dimension must not exceed the output dimension".into(),
        ));
    }
    let code = encoder.eval(x)?;
    let spectrum = svd(&decoder.jacobian(&code)?)?.singular_values;
    let sigma_1 = spectrum[0];
    let sigma_k = *spectrum.last().unwrap();
    if sigma_k < 1e-10 {
        return Err(Error::RankDeficient {
            k: spectrum.len(),
            sigma_k,
            spectrum,
        });
    }
    let encoder_bound = theorem4_bound_with(encoder, x, opts)?.value;
    let decoder_hessian_norm = decoder
        .hessians(&code)?
        .iter()
        .map(Matrix::frobenius_norm_sq)
        .sum::<f64>()
        .sqrt();
    let s2 = sigma_k * sigma_k;
    Ok(Theorem5Terms {
        sigma_1,
        sigma_k,
        encoder_bound,
        decoder_hessian_norm,
        rhs: sigma_1 * encoder_bound / s2 + decoder_hessian_norm / s2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem5Check {
    pub lhs: f64,
    pub terms: Theorem5Terms,
}

impl Theorem5Check {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.terms.rhs + tol
    }
}

/// Both sides of the encoder/decoder bound at `x`, on one direction set.
pub fn theorem5_check(
    net: &AutoencoderNet,
    x: &[f64],
    opts: &Theorem4Options,
) -> Result<Theorem5Check> {
    let terms = theorem5_rhs(&EncoderMap(net), &DecoderMap(net), x, opts)?;
    let lhs = theorem4_bound_with(net, x, opts)?.value;
    Ok(Theorem5Check { lhs, terms })
}

/// Curvature `||γ' ∧ γ''|| / ||γ'||³` of a curve from its derivatives.
pub fn curve_curvature(velocity: &[f64], acceleration: &[f64]) -> Result<f64> {
    let speed = norm(velocity);
    if speed == 0.0 {
        return Err(Error::Domain("curve has zero speed".into()));
    }
    Ok(wedge_norm(velocity, acceleration)? / speed.powi(3))
}

/// [`curve_curvature`] with derivatives from central differences of step `h`.
pub fn curve_curvature_fd(curve: impl Fn(f64) -> Vec<f64>, t: f64, h: f64) -> Result<f64> {
    let (m, c, p) = (curve(t - h), curve(t), curve(t + h));
    if m.len() != c.len() || p.len() != c.len() {
        return Err(Error::Dimension("curve changes dimension".into()));
    }
    let v: Vec<f64> = (0..c.len()).map(|i| (p[i] - m[i]) / (2.0 * h)).collect();
    let a: Vec<f64> = (0..c.len())
        .map(|i| (p[i] - 2.0 * c[i] + m[i]) / (h * h))
        .collect();
    curve_curvature(&v, &a)
}

/// Orthonormal basis of the learned tangent space at a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentBasis {
    /// `n x k`, orthonormal columns.
    pub vectors: Matrix,
    pub at_point: Vec<f64>,
    pub singular_values: Vec<f64>,
}

impl TangentBasis {
    pub fn projector(&self) -> Matrix {
        self.vectors.matmul(&self.vectors.transpose())
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.vectors.cols())
            .map(|j| self.vectors.column(j))
            .collect()
    }
}

/// Top-`k` left singular vectors of a Jacobian. Fails when `σ_k <= 1e-10 σ_1`.
pub fn tangent_basis_of(j: &Matrix, x: &[f64], k: usize) -> Result<TangentBasis> {
    let f = svd(j)?;
    let sv = f.singular_values;
    if k == 0 || k > sv.len() {
        return Err(Error::Domain(format!(
            "tangent dimension {k} outside 1..={}",
            sv.len()
        )));
    }
    let sigma_k = sv[k - 1];
    if sigma_k.is_nan() || sigma_k <= 1e-10 * sv[0] {
        return Err(Error::RankDeficient {
            k,
            sigma_k,
            spectrum: sv,
        });
    }
    Ok(TangentBasis {
        vectors: f.u.leading_columns(k),
        at_point: x.to_vec(),
        singular_values: sv,
    })
}

pub fn tangent_basis(net: &AutoencoderNet, x: &[f64], k: usize) -> Result<TangentBasis> {
    tangent_basis_of(&net.jacobian(x)?, x, k)
}
