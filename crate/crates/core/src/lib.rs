//! Signal-chain model of a vacuum-fluctuation quantum random number generator.
//!
//! The crate follows the chain from the analog front end to the extracted bits:
//!
//! - [`noise_model`]: balanced homodyne detector noise budget, transimpedance
//!   gain, QCNR, bandwidth, CMRR arithmetic and feedback design sweeps.
//! - [`entropy`]: average conditional min-entropy of the digitized output
//!   against an adversary who observes the classical noise.
//! - [`trace`]: simulated ADC noise traces and the trace file format.
//! - [`extractor`]: seeded Toeplitz hashing over GF(2), block and streaming.
//! - [`randtest`]: a six-test statistical battery plus ASCII bit export.
//! - [`pipeline`]: end-to-end run from simulation to tested output.

pub mod constants;
pub mod entropy;
mod error;
pub mod extractor;
pub mod noise_model;
pub mod pipeline;
pub mod randtest;
pub mod special;
pub mod trace;

pub use error::{Error, ErrorKind, Result};
