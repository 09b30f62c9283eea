use super::matrix::{dot, Matrix};
use super::qr::qr_thin;
use super::svd::{complete_columns, svd, SvdFactors};
use crate::error::{Error, Result};

fn check_rank(a: &Matrix, k: usize) -> Result<()> {
    let r = a.rows().min(a.cols());
    if k > r {
        return Err(Error::Domain(format!("rank {k} exceeds min dimension {r}")));
    }
    Ok(())
}

/// Squared Ky-Fan k-antinorm: the sum of squared singular values beyond the
/// k-th. Equals the squared Frobenius distance to the nearest rank-k matrix.
pub fn kyfan_antinorm_sq(a: &Matrix, k: usize) -> Result<f64> {
    check_rank(a, k)?;
    let f = svd(a)?;
    Ok(f.singular_values[k..].iter().map(|s| s * s).sum())
}

/// Best rank-k approximation in Frobenius norm (Eckart–Young).
pub fn truncate_rank(a: &Matrix, k: usize) -> Result<Matrix> {
    check_rank(a, k)?;
    Ok(truncate_factors(&svd(a)?, k))
}

pub(crate) fn truncate_factors(f: &SvdFactors, k: usize) -> Matrix {
    let (m, n) = (f.u.rows(), f.vt.cols());
    let mut out = Matrix::zeros(m, n);
    for l in 0..k {
        let s = f.singular_values[l];
        if s == 0.0 {
            continue;
        }
        for i in 0..m {
            let us = f.u[(i, l)] * s;
            if us == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += us * f.vt[(l, j)];
            }
        }
    }
    out
}

/// SVD of the product `jd * je` without forming it when the inner dimension
/// is small: QR of both factors reduces the work to an SVD of a d x d core.
pub fn svd_of_product(jd: &Matrix, je: &Matrix) -> Result<SvdFactors> {
    if jd.cols() != je.rows() {
        return Err(Error::Dimension(format!(
            "product needs jd cols == je rows, got {}x{} and {}x{}",
            jd.rows(),
            jd.cols(),
            je.rows(),
            je.cols()
        )));
    }
    let (a, d, b) = (jd.rows(), jd.cols(), je.cols());
    let r = a.min(b);
    if d >= r {
        return svd(&jd.matmul(je));
    }
    let left = qr_thin(jd)?;
    let right = qr_thin(&je.transpose())?;
    let core = left.r.matmul(&right.r.transpose());
    let inner = svd(&core)?;
    let u_small = left.q.matmul(&inner.u);
    let v_small = right.q.matmul(&inner.vt.transpose());

    let mut u = Matrix::zeros(a, r);
    let mut v = Matrix::zeros(b, r);
    for j in 0..d {
        u.set_column(j, &u_small.column(j));
        v.set_column(j, &v_small.column(j));
    }
    let filled: Vec<usize> = (0..d).collect();
    let rest: Vec<usize> = (d..r).collect();
    complete_columns(&mut u, &filled, &rest);
    complete_columns(&mut v, &filled, &rest);
    let mut singular_values = inner.singular_values;
    singular_values.resize(r, 0.0);
    let mut f = SvdFactors {
        u,
        singular_values,
        vt: v.transpose(),
    };
    f.normalize_signs();
    Ok(f)
}

/// Norm of the wedge product `a ∧ b`, computed as `||a|| * ||b - proj_a b||`,
/// which equals `sqrt(||a||² ||b||² − (a·b)²)` without the cancellation.
pub fn wedge_norm(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "wedge of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let aa = dot(a, a);
    if aa == 0.0 {
        return Ok(0.0);
    }
    let coef = dot(a, b) / aa;
    let resid: f64 = a.iter().zip(b).map(|(x, y)| (y - coef * x).powi(2)).sum();
    Ok(aa.sqrt() * resid.sqrt())
}
