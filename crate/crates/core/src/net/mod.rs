//! Feedforward autoencoder `g = d ∘ e` with exact input Jacobians and exact
//! parameter gradients for losses that depend on those Jacobians.

mod stack;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use stack::StackTrace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Encoder and decoder Jacobians at one point; `j_decoder * j_encoder` is the
/// full Jacobian of the autoencoder.
#[derive(Clone, Debug)]
pub struct JacobianPair {
    pub j_encoder: Matrix,
    pub j_decoder: Matrix,
}

impl JacobianPair {
    pub fn product(&self) -> Matrix {
        self.j_decoder.matmul(&self.j_encoder)
    }
}

/// Record of one evaluation through encoder and decoder.
pub struct NetTrace {
    pub encoder: StackTrace,
    pub decoder: StackTrace,
}

impl NetTrace {
    pub fn code(&self) -> &[f64] {
        self.encoder.output()
    }

    pub fn output(&self) -> &[f64] {
        self.decoder.output()
    }

    pub fn code_tangent(&self) -> Option<&Matrix> {
        self.encoder.tangent()
    }

    pub fn output_tangent(&self) -> Option<&Matrix> {
        self.decoder.tangent()
    }
}

/// Cotangents flowing into a [`NetTrace`]. Missing entries count as zero.
#[derive(Default)]
pub struct NetCotangent {
    pub output: Option<Vec<f64>>,
    pub output_tangent: Option<Matrix>,
    pub code: Option<Vec<f64>>,
    pub code_tangent: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderNet {
    encoder: Vec<LayerSpec>,
    decoder: Vec<LayerSpec>,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    #[serde(flatten)]
    net: AutoencoderNet,
}

const CHECKPOINT_FORMAT: &str = "rankae-autoencoder";

fn check_chain(name: &str, layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Dimension(format!("{name} has no layers")));
    }
    for (i, l) in layers.iter().enumerate() {
        if l.in_dim == 0 || l.out_dim == 0 {
            return Err(Error::Dimension(format!(
                "{name} layer {i} has a zero dimension"
            )));
        }
    }
    for (i, w) in layers.windows(2).enumerate() {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::Dimension(format!(
                "{name} layers {i} and {} do not chain ({} -> {})",
                i + 1,
                w[0].out_dim,
                w[1].in_dim
            )));
        }
    }
    Ok(())
}

impl AutoencoderNet {
    pub fn new(encoder: Vec<LayerSpec>, decoder: Vec<LayerSpec>, theta: Vec<f64>) -> Result<Self> {
        check_chain("encoder", &encoder)?;
        check_chain("decoder", &decoder)?;
        let code = encoder.last().unwrap().out_dim;
        let n = encoder[0].in_dim;
        if decoder[0].in_dim != code {
            return Err(Error::Dimension(format!(
                "decoder input {} != code dimension {code}",
                decoder[0].in_dim
            )));
        }
        if decoder.last().unwrap().out_dim != n {
            return Err(Error::Dimension(format!(
                "decoder output {} != ambient dimension {n}",
                decoder.last().unwrap().out_dim
            )));
        }
        let expected = stack::param_len(&encoder) + stack::param_len(&decoder);
        if theta.len() != expected {
            return Err(Error::Dimension(format!(
                "theta has {} entries, architecture needs {expected}",
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta".into()));
        }
        Ok(Self {
            encoder,
            decoder,
            theta,
        })
    }

    /// Zero biases and weights uniform in `[-s, s]`, `s = sqrt(6 / (in + out))`.
    pub fn initialized(
        encoder: Vec<LayerSpec>,
        decoder: Vec<LayerSpec>,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::new();
        for l in encoder.iter().chain(&decoder) {
            let s = (6.0 / (l.in_dim + l.out_dim) as f64).sqrt();
            theta.extend((0..l.in_dim * l.out_dim).map(|_| rng.random_range(-s..=s)));
            theta.extend(std::iter::repeat_n(0.0, l.out_dim));
        }
        Self::new(encoder, decoder, theta)
    }

    /// Symmetric architecture `n -> hidden... -> code -> reversed hidden -> n`
    /// with tanh everywhere except the final (identity) decoder layer.
    pub fn symmetric(n: usize, hidden: &[usize], code: usize, seed: u64) -> Result<Self> {
        let mut dims = vec![n];
        dims.extend_from_slice(hidden);
        dims.push(code);
        let encoder: Vec<LayerSpec> = dims
            .windows(2)
            .map(|w| LayerSpec::new(w[0], w[1], Activation::Tanh))
            .collect();
        let rev: Vec<usize> = dims.iter().rev().cloned().collect();
        let last = rev.len() - 2;
        let decoder: Vec<LayerSpec> = rev
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last {
                    Activation::Identity
                } else {
                    Activation::Tanh
                };
                LayerSpec::new(w[0], w[1], act)
            })
            .collect();
        Self::initialized(encoder, decoder, seed)
    }

    pub fn ambient_dim(&self) -> usize {
        self.encoder[0].in_dim
    }

    pub fn code_dim(&self) -> usize {
        self.decoder[0].in_dim
    }

    pub fn encoder_layers(&self) -> &[LayerSpec] {
        &self.encoder
    }

    pub fn decoder_layers(&self) -> &[LayerSpec] {
        &self.decoder
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn encoder_param_count(&self) -> usize {
        stack::param_len(&self.encoder)
    }

    pub fn encoder_params(&self) -> &[f64] {
        &self.theta[..self.encoder_param_count()]
    }

    fn decoder_params(&self) -> &[f64] {
        &self.theta[self.encoder_param_count()..]
    }

    /// Successor net with replaced parameters.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.encoder.clone(), self.decoder.clone(), theta)
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::Dimension(format!(
                "input has length {}, net expects {}",
                x.len(),
                self.ambient_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// Returns `(e(x), g(x))`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let t = self.trace(x, None)?;
        Ok((t.code().to_vec(), t.output().to_vec()))
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(stack::forward(&self.encoder, self.encoder_params(), x, None).output)
    }

    pub fn decode(&self, code: &[f64]) -> Result<Vec<f64>> {
        if code.len() != self.code_dim() {
            return Err(Error::Dimension(format!(
                "code has length {}, net expects {}",
                code.len(),
                self.code_dim()
            )));
        }
        Ok(stack::forward(&self.decoder, self.decoder_params(), code, None).output)
    }

    /// Evaluates encoder and decoder, propagating `seed` (n x p) as tangent
    /// directions when given.
    pub fn trace(&self, x: &[f64], seed: Option<Matrix>) -> Result<NetTrace> {
        let encoder = self.trace_encoder(x, seed)?;
        let code_tan = encoder.tangent().cloned();
        let decoder = stack::forward(
            &self.decoder,
            self.decoder_params(),
            encoder.output(),
            code_tan,
        );
        Ok(NetTrace { encoder, decoder })
    }

    pub fn trace_encoder(&self, x: &[f64], seed: Option<Matrix>) -> Result<StackTrace> {
        self.check_input(x)?;
        if let Some(s) = &seed {
            if s.rows() != self.ambient_dim() {
                return Err(Error::Dimension(format!(
                    "tangent seed has {} rows, net expects {}",
                    s.rows(),
                    self.ambient_dim()
                )));
            }
        }
        Ok(stack::forward(
            &self.encoder,
            self.encoder_params(),
            x,
            seed,
        ))
    }

    /// Accumulates `d loss / d theta` for the given cotangents into `grad`.
    pub fn backward(&self, trace: &NetTrace, cot: NetCotangent, grad: &mut [f64]) {
        let split = self.encoder_param_count();
        let (genc, gdec) = grad.split_at_mut(split);
        let d_out = cot.output.unwrap_or_else(|| vec![0.0; self.ambient_dim()]);
        let (mut d_code, d_code_tan) = stack::backward(
            &self.decoder,
            self.decoder_params(),
            &trace.decoder,
            d_out,
            cot.output_tangent,
            gdec,
            true,
        );
        if let Some(c) = cot.code {
            for (a, b) in d_code.iter_mut().zip(c) {
                *a += b;
            }
        }
        let d_code_tan = match (d_code_tan, cot.code_tangent) {
            (Some(mut a), Some(b)) => {
                a.add_assign_scaled(&b, 1.0);
                Some(a)
            }
            (a, b) => a.or(b),
        };
        stack::backward(
            &self.encoder,
            self.encoder_params(),
            &trace.encoder,
            d_code,
            d_code_tan,
            genc,
            false,
        );
    }

    /// Backward pass through the encoder alone; `grad` spans all of theta.
    pub fn backward_encoder(
        &self,
        trace: &StackTrace,
        d_code: Vec<f64>,
        d_code_tangent: Option<Matrix>,
        grad: &mut [f64],
    ) {
        let split = self.encoder_param_count();
        stack::backward(
            &self.encoder,
            self.encoder_params(),
            trace,
            d_code,
            d_code_tangent,
            &mut grad[..split],
            false,
        );
    }

    /// Full Jacobian `J_g(x)` (n x n).
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let n = self.ambient_dim();
        let t = self.trace(x, Some(Matrix::identity(n)))?;
        Ok(t.output_tangent().expect("seeded trace").clone())
    }

    pub fn input_jacobians(&self, x: &[f64]) -> Result<JacobianPair> {
        let n = self.ambient_dim();
        let enc = self.trace_encoder(x, Some(Matrix::identity(n)))?;
        let d = self.code_dim();
        let dec = stack::forward(
            &self.decoder,
            self.decoder_params(),
            enc.output(),
            Some(Matrix::identity(d)),
        );
        Ok(JacobianPair {
            j_encoder: enc.tangent().expect("seeded trace").clone(),
            j_decoder: dec.tangent().expect("seeded trace").clone(),
        })
    }

    pub fn encoder_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let n = self.ambient_dim();
        Ok(self
            .trace_encoder(x, Some(Matrix::identity(n)))?
            .tangent()
            .expect("seeded trace")
            .clone())
    }

    pub fn decoder_jacobian(&self, code: &[f64]) -> Result<Matrix> {
        if code.len() != self.code_dim() {
            return Err(Error::Dimension(format!("code has length {}", code.len())));
        }
        let d = self.code_dim();
        let dec = stack::forward(
            &self.decoder,
            self.decoder_params(),
            code,
            Some(Matrix::identity(d)),
        );
        Ok(dec.tangent().expect("seeded trace").clone())
    }

    /// Hessians of each output component, by central differences of the
    /// exact Jacobian.
    pub fn component_hessians(&self, x: &[f64]) -> Result<Vec<Matrix>> {
        fd_hessians(|p| self.jacobian(p), x, HESSIAN_STEP)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_checkpoint_string()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_str(&fs::read_to_string(path)?)
    }

    pub fn to_checkpoint_string(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            net: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_checkpoint_str(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Domain(format!(
                "not an autoencoder checkpoint: {:?}",
                ck.format
            )));
        }
        let AutoencoderNet {
            encoder,
            decoder,
            theta,
        } = ck.net;
        Self::new(encoder, decoder, theta)
    }
}

pub const HESSIAN_STEP: f64 = 1e-4;

/// Central-difference Hessians from a Jacobian oracle: entry `[i]` is the
/// symmetrized Hessian of output component `i`.
pub fn fd_hessians(
    jacobian: impl Fn(&[f64]) -> Result<Matrix>,
    x: &[f64],
    step: f64,
) -> Result<Vec<Matrix>> {
    let n = x.len();
    let mut columns = Vec::with_capacity(n);
    let mut p = x.to_vec();
    for b in 0..n {
        p[b] = x[b] + step;
        let plus = jacobian(&p)?;
        p[b] = x[b] - step;
        let minus = jacobian(&p)?;
        p[b] = x[b];
        columns.push(plus.sub(&minus).scaled(0.5 / step));
    }
    let m = columns.first().map_or(0, Matrix::rows);
    Ok((0..m)
        .map(|i| {
            let raw = Matrix::from_fn(n, n, |a, b| columns[b][(i, a)]);
            raw.add(&raw.transpose()).scaled(0.5)
        })
        .collect())
}

#[cfg(test)]
mod tests;
