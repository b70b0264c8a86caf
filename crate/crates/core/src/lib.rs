//! Spectral unmixing by low-rank factorization `M ≈ A·Bᵀ` where every column
//! of `A` is drawn from one of several dictionaries of candidate spectra.

pub mod assignment;
#[cfg(feature = "cli")]
pub mod cli;
pub mod dictionary;
pub mod error;
pub mod io;
pub mod linalg;
pub mod m2pals;
pub mod report;
#[cfg(feature = "service")]
pub mod service;
pub mod spa;
pub mod synth;

pub use error::{Error, InfeasibilityReport, Issue, Result};
