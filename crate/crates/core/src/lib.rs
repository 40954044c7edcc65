//! Phase retrieval under sparse arbitrary corruption.
//!
//! The library recovers a signal `x*` from magnitude-only measurements
//! `y_i = |a_i^T x*| + eta*_i + eps_i` where `eta*` is a sparse vector of
//! arbitrarily large corruptions and `eps` is bounded noise. Recovery is a
//! two-stage procedure: a thresholded spectral initialization followed by
//! gradient descent on the amplitude loss, with the corruption estimate
//! refreshed by hard thresholding before every step.
//!
//! Modules:
//! - [`primitives`]: thresholding, sign, distances and the amplitude loss.
//! - [`measure`]: seeded Gaussian ensembles, signals, corruption and noise.
//! - [`operator`]: the matrix-free measurement operator abstraction.
//! - [`solver`]: initialization, the thresholded gradient iteration and
//!   the non-robust baseline.
//! - [`cdp`]: coded diffraction patterns, the complex solver and image
//!   recovery.
//! - [`bench`]: Monte-Carlo trials, sweeps, traces and CSV output.

pub mod bench;
pub mod cdp;
pub mod error;
pub mod measure;
pub mod operator;
pub mod primitives;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use operator::MeasurementOperator;
pub use primitives::SparsityBudget;
