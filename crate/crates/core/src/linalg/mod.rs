//! Dense real linear algebra.
//!
//! Everything here works on [`Matrix`], a row-major `f64` matrix. The SVD is a
//! one-sided Jacobi iteration, which is accurate for the small and medium
//! Jacobians the trainer produces.

mod lowrank;
mod matrix;
mod qr;
mod svd;

pub(crate) use lowrank::truncate_factors;
pub use lowrank::{kyfan_antinorm_sq, svd_of_product, truncate_rank, wedge_norm};
pub use matrix::{dot, norm, Matrix};
pub use qr::{qr_thin, Qr};
pub use svd::{svd, SvdFactors, MAX_SWEEPS};
