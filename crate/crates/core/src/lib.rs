//! Ensemble-based uncertainty decomposition and uncertainty-aware beam
//! search, evaluated on synthetic worlds where hallucination is exact.
//!
//! - [`prob`]: categorical distributions and entropy in nats.
//! - [`ensemble`]: total, aleatoric and epistemic uncertainty.
//! - [`model`]: tabular scorers, synthetic worlds and perturbed ensembles.
//! - [`decode`]: beam search, the penalized variant, sampling and a brute-force oracle.
//! - [`analysis`]: hallucination labels, binning, correlations and sweeps.

pub mod analysis;
pub mod decode;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod prob;

pub use error::{Error, Result};
