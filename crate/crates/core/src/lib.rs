//! IncepSE: an InceptionTime-style 1D CNN with squeeze-and-excitation
//! bottlenecks for multi-label ECG classification, built on a small
//! reverse-mode autodiff engine.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod signal;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
