//! Bandpass filtering and per-lead standardization.

mod filter;
mod standardize;

pub use filter::{apply_zero_phase, design_bandpass, filter_dataset, BandpassSpec, Biquad, BiquadCascade};
pub use standardize::{apply_stats, fit_stats, read_stats, standardize, write_stats, LeadStats};
