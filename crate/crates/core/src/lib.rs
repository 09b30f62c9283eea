//! Rank-constrained autoencoders.
//!
//! An autoencoder `g = d ∘ e` is trained to reconstruct its inputs while the
//! Jacobian `J_g` at a fixed set of anchor points is pulled towards rank-`k`
//! target matrices. Training alternates Adam steps on the network parameters
//! with Eckart–Young truncations of the anchor Jacobians. Curvature
//! regularizers and manifold-quality metrics live alongside the trainer.

pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod linalg;
pub mod losses;
pub mod net;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use net::AutoencoderNet;
