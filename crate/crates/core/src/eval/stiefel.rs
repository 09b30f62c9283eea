use serde::{Deserialize, Serialize};

use crate::data::{sample_stiefel, unvectorize, StiefelSpec};
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};

/// Monte Carlo estimates over `sample_count` draws, with standard errors.
///
/// With `A` the output reshaped to `n1 x n2` (column-major) and `n = n1 n2`:
/// `e1 = E max_ij |AᵀA − I|_ij`, `e2 = E||a − z|| / sqrt(n δ²)`,
/// `1_I = E ||A||²_F / n²` and `0_I = E Σ_{i≠j} (AᵀA)_ij / (n² (n − 1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StiefelMetrics {
    pub e1: f64,
    pub e2: f64,
    pub one_i: f64,
    pub zero_i: f64,
    pub e1_stderr: f64,
    pub e2_stderr: f64,
    pub sample_count: usize,
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Metrics from autoencoder outputs and the clean points they should recover.
pub fn stiefel_metrics_from(
    outputs: &[Vec<f64>],
    clean: &[Vec<f64>],
    n1: usize,
    n2: usize,
    delta: f64,
) -> Result<StiefelMetrics> {
    if outputs.len() != clean.len() || outputs.is_empty() {
        return Err(Error::Dimension(format!(
            "{} outputs for {} clean points",
            outputs.len(),
            clean.len()
        )));
    }
    let n = n1 * n2;
    let mut e1 = Vec::with_capacity(outputs.len());
    let mut dist = Vec::with_capacity(outputs.len());
    let (mut one, mut zero) = (0.0, 0.0);
    for (a, z) in outputs.iter().zip(clean) {
        if a.len() != n || z.len() != n {
            return Err(Error::Dimension(format!("points must have length {n}")));
        }
        let m = unvectorize(a, n1, n2)?;
        let gram = m.t_matmul(&m);
        e1.push(gram.sub(&Matrix::identity(n2)).max_abs());
        let diff: Vec<f64> = a.iter().zip(z).map(|(p, q)| p - q).collect();
        dist.push(norm(&diff));
        one += m.frobenius_norm_sq();
        for i in 0..n2 {
            for j in 0..n2 {
                if i != j {
                    zero += gram[(i, j)];
                }
            }
        }
    }
    let count = outputs.len() as f64;
    let (e1m, e1s) = mean_and_stderr(&e1);
    let (dm, ds) = mean_and_stderr(&dist);
    let scale = (n as f64 * delta * delta).sqrt();
    let (e2, e2s) = if dm == 0.0 {
        (0.0, 0.0)
    } else if scale > 0.0 {
        (dm / scale, ds / scale)
    } else {
        return Err(Error::Domain(
            "e2 is undefined for delta = 0 unless recovery is exact".into(),
        ));
    };
    let nf = n as f64;
    Ok(StiefelMetrics {
        e1: e1m,
        e2,
        one_i: one / count / (nf * nf),
        zero_i: if n > 1 {
            zero / count / (nf * nf * (nf - 1.0))
        } else {
            0.0
        },
        e1_stderr: e1s,
        e2_stderr: e2s,
        sample_count: outputs.len(),
    })
}

/// Applies `autoencoder` to fresh noisy Stiefel samples drawn with `seed`.
pub fn stiefel_metrics(
    autoencoder: impl Fn(&[f64]) -> Result<Vec<f64>>,
    spec: &StiefelSpec,
    eval_samples: usize,
    seed: u64,
) -> Result<StiefelMetrics> {
    let draw = StiefelSpec {
        count: eval_samples,
        seed,
        ..*spec
    };
    let (clean, noisy) = sample_stiefel(&draw)?;
    let outputs = noisy
        .points()
        .iter()
        .map(|x| autoencoder(x))
        .collect::<Result<Vec<_>>>()?;
    stiefel_metrics_from(&outputs, clean.points(), spec.n1, spec.n2, spec.delta)
}
