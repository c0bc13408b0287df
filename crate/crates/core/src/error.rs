use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter failed validation. `field` names the offending input.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("no 3-dB crossing of the TIA gain between {lo_hz} Hz and {hi_hz} Hz")]
    BandwidthNotFound { lo_hz: f64, hi_hz: f64 },

    #[error(
        "extractor block too small: {available} bits of entropy minus the security penalty leaves \
         no output; at least {min_samples} samples per block are required"
    )]
    BlockTooSmall { available: u64, min_samples: usize },

    #[error("length mismatch: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("{test}: at least {needed} bits required, got {actual}")]
    InsufficientBits {
        test: &'static str,
        needed: usize,
        actual: usize,
    },

    #[error("malformed trace file at byte offset {offset}: {reason}")]
    TraceFormat { offset: u64, reason: String },

    #[error("stream I/O failed at block {block}: {source}")]
    Stream {
        block: u64,
        #[source]
        source: io::Error,
    },

    #[error("platform entropy source unavailable: {0}")]
    EntropyUnavailable(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Computation,
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. }
            | Error::LengthMismatch { .. }
            | Error::InsufficientBits { .. }
            | Error::Json(_) => ErrorKind::Validation,
            Error::Io(_)
            | Error::Csv(_)
            | Error::Stream { .. }
            | Error::TraceFormat { .. }
            | Error::EntropyUnavailable(_) => ErrorKind::Io,
            Error::BandwidthNotFound { .. } | Error::BlockTooSmall { .. } => ErrorKind::Computation,
        }
    }
}

/// Rejects NaN, infinities and values outside `(0, inf)`.
pub(crate) fn ensure_positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            field,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

pub(crate) fn ensure_non_negative(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            field,
            format!("must be finite and >= 0, got {value}"),
        ))
    }
}
