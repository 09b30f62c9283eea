use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Sweep cap for the one-sided Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;

/// Columns whose norm falls below this fraction of `sigma_1` get their left
/// singular vector replaced by an orthonormal completion.
const NULL_COLUMN_RTOL: f64 = 1e-12;

/// Thin SVD `a = u * diag(singular_values) * vt` with `r = min(rows, cols)`.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub vt: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.singular_values.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.vt)
    }

    /// Flips signs so the first clearly nonzero entry of every left singular
    /// vector is non-negative; the matching right vector flips with it.
    pub(crate) fn normalize_signs(&mut self) {
        let (m, r) = self.u.shape();
        for j in 0..r {
            let lead = (0..m).map(|i| self.u[(i, j)]).find(|x| x.abs() > 1e-10);
            if matches!(lead, Some(x) if x < 0.0) {
                for i in 0..m {
                    self.u[(i, j)] = -self.u[(i, j)];
                }
                for c in 0..self.vt.cols() {
                    self.vt[(j, c)] = -self.vt[(j, c)];
                }
            }
        }
    }
}

/// Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
pub fn svd(a: &Matrix) -> Result<SvdFactors> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    let mut f = if a.rows() >= a.cols() {
        let (u, s, v) = jacobi_tall(a)?;
        SvdFactors {
            u,
            singular_values: s,
            vt: v.transpose(),
        }
    } else {
        let (u, s, v) = jacobi_tall(&a.transpose())?;
        SvdFactors {
            u: v,
            singular_values: s,
            vt: u.transpose(),
        }
    };
    f.normalize_signs();
    Ok(f)
}

/// Returns (u: m x n, s: n, v: n x n) for m >= n.
fn jacobi_tall(a: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let norm_sq = a.frobenius_norm_sq();
    let rel_tol = m as f64 * f64::EPSILON;
    // Pairs whose inner product is below this are numerically null.
    let abs_floor = 1e-30 * norm_sq;

    let mut converged = norm_sq == 0.0;
    let mut sweep = 0;
    while !converged && sweep < MAX_SWEEPS {
        sweep += 1;
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= abs_floor || gamma.abs() <= rel_tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::SvdNoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original column order among exact ties.
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma_max = norms.iter().cloned().fold(0.0, f64::max);
    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        v.set_column(dst, &vcols[src]);
        if sigma > NULL_COLUMN_RTOL * sigma_max && sigma > 0.0 {
            let col: Vec<f64> = cols[src].iter().map(|x| x / sigma).collect();
            u.set_column(dst, &col);
        } else {
            pending.push(dst);
        }
    }
    if !pending.is_empty() {
        let filled: Vec<usize> = (0..n).filter(|j| !pending.contains(j)).collect();
        complete_columns(&mut u, &filled, &pending);
    }
    Ok((u, s, v))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the columns listed in `targets` with unit vectors orthogonal to every
/// column in `filled` and to each other (Gram–Schmidt over the standard basis,
/// taking the candidate with the largest residual each time).
pub(crate) fn complete_columns(u: &mut Matrix, filled: &[usize], targets: &[usize]) {
    let m = u.rows();
    let mut basis: Vec<Vec<f64>> = filled.iter().map(|&j| u.column(j)).collect();
    for &t in targets {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for _ in 0..2 {
                for b in &basis {
                    let proj = dot(&cand, b);
                    for (c, bi) in cand.iter_mut().zip(b) {
                        *c -= proj * bi;
                    }
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if best.as_ref().is_none_or(|(bn, _)| nrm > *bn + 1e-12) {
                best = Some((nrm, cand));
            }
        }
        let (nrm, cand) = best.expect("completion needs at least one candidate");
        let unit: Vec<f64> = cand.iter().map(|x| x / nrm).collect();
        u.set_column(t, &unit);
        basis.push(unit);
    }
}
