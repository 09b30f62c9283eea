use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Thin QR factors: `q` is m x n with orthonormal columns, `r` is n x n upper
/// triangular.
#[derive(Clone, Debug)]
pub struct Qr {
    pub q: Matrix,
    pub r: Matrix,
}

/// Householder QR of a tall (m >= n) matrix.
pub fn qr_thin(a: &Matrix) -> Result<Qr> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Dimension(format!(
            "qr_thin needs rows >= cols, got {m}x{n}"
        )));
    }
    let mut r = a.clone();
    // Householder vectors, one per column, each of length m - k.
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
        let alpha = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if alpha == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        for j in k..n {
            let s: f64 = (k..m).map(|i| v[i - k] * r[(i, j)]).sum::<f64>() * 2.0 / vnorm_sq;
            for i in k..m {
                r[(i, j)] -= s * v[i - k];
            }
        }
        for i in (k + 1)..m {
            r[(i, k)] = 0.0;
        }
        let scale = vnorm_sq.sqrt();
        reflectors.push(v.into_iter().map(|x| x / scale).collect());
    }

    // Accumulate Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut q = Matrix::diag(m, n, &vec![1.0; n]);
    for k in (0..n).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        for j in 0..n {
            let s: f64 = (k..m).map(|i| v[i - k] * q[(i, j)]).sum::<f64>() * 2.0;
            for i in k..m {
                q[(i, j)] -= s * v[i - k];
            }
        }
    }
    Ok(Qr {
        q,
        r: r.leading_rows(n),
    })
}
