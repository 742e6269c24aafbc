//! Random-access preamble detection with blind coherent combining.
//!
//! The crate simulates Zadoff-Chu preambles received over Kronecker-correlated
//! Rayleigh channels and detects them three ways:
//!
//! * [`legacy`]: matched filter plus non-coherent energy detector,
//! * [`pipeline`]: the same chain with a small neural denoiser blended into
//!   each spatial (and optionally temporal) slice,
//! * the MMSE genie that knows the true spatial covariance.
//!
//! [`harness`] drives paired Monte Carlo experiments over all of them.

pub mod channel;
pub mod error;
pub mod exec;
pub mod harness;
pub mod legacy;
pub mod mmse;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod sequences;

pub use error::{Error, Result};
pub use exec::Execution;
