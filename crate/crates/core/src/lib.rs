//! Eigenfunction coupling of a metastable one-dimensional diffusion to a
//! finite continuous-time Markov chain.
//!
//! The pipeline runs `potential` -> `spectral` -> `chain` -> `coupling`, after
//! which `oracle` evolves exact discrete laws and `simulate`/`stats` produce
//! Monte Carlo diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod coupling;
pub mod error;
pub mod oracle;
pub mod pipeline;
pub mod potential;
pub mod simulate;
pub mod stats;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
