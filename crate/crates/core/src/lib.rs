//! Koopman-constrained latent dynamics for periodic pose sequences.
//!
//! The crate learns a 90-channel complex latent space in which a gait sequence
//! evolves under a diagonal, unit-modulus operator, and builds on it for
//! forecasting and for metric-learning based identification. It also ships the
//! detection-track smoothing used to prepare person crops.

pub mod error;
pub mod io;
pub mod lds;
pub mod nn;
pub mod pose;
pub mod recognition;
pub mod synth;
pub mod track;
pub mod train;

pub use error::{Error, Result};
