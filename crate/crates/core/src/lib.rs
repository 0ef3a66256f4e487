//! Constrained low-rank adaptation toolkit.
//!
//! The numerical core ([`matcore`], [`spectra`], [`adapt`] and the metric
//! functions in [`eval`]) is generic over [`Scalar`]; the aliases below pin
//! it to `f64`, which is what the model, data generator and CLI use.

pub mod adapt;
pub mod domgen;
pub mod error;
pub mod eval;
pub mod matcore;
pub mod nanovit;
pub mod pipeline;
pub mod scalar;
pub mod seeds;
pub mod spectra;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = matcore::Matrix<f64>;
pub type SvdFactors = matcore::SvdFactors<f64>;
pub type SubspaceBasis = matcore::SubspaceBasis<f64>;
pub type LoraAdapter = adapt::LoraAdapter<f64>;
pub type DeltaSpec = spectra::DeltaSpec<f64>;
