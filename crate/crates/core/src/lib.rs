//! Gaussian-mixture channel estimation for massive MIMO uplink.
//!
//! The crate fits complex Gaussian mixture models to channel samples offline
//! (full, block-Toeplitz and block-circulant covariances) and uses them online
//! as a closed-form approximation of the conditional-mean channel estimator.
//! Classical baselines (LS, sample-covariance LMMSE, genie-aided OMP), a
//! synthetic multipath generator for uniform rectangular arrays, metrics and an
//! experiment harness are included.

pub mod cgmm;
pub mod channel_sim;
pub mod error;
pub mod estimators;
mod fsio;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod speclin;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
