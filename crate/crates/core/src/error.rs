use std::path::PathBuf;

use crate::machine::SimdLevel;
use crate::traffic::Residence;

/// Errors produced while loading inputs or evaluating the model.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// A field violates a documented invariant. `field` names the offending entry.
    #[error("{context}: {field} {message}")]
    Invalid {
        context: String,
        field: String,
        message: String,
    },

    #[error("machine {machine} does not support {simd} (widest is {max})")]
    UnsupportedSimd {
        machine: String,
        simd: SimdLevel,
        max: SimdLevel,
    },

    #[error("kernel {kernel} has no timing entry for ({machine}, {simd})")]
    MissingTiming {
        kernel: String,
        machine: String,
        simd: SimdLevel,
    },

    #[error("kernel {kernel} on ({machine}, {simd}) only carries a serial in-memory value, no contribution split")]
    NoContributionSplit {
        kernel: String,
        machine: String,
        simd: SimdLevel,
    },

    #[error("residence {residence} is not valid for machine {machine}")]
    InvalidResidence { machine: String, residence: Residence },

    #[error("kernel {kernel} lacks {field}")]
    MissingKernelField { kernel: String, field: &'static str },

    #[error("{0}")]
    Precondition(String),

    #[error("no prediction for measurement row {row}: {key}")]
    UnmatchedRecord { row: usize, key: String },

    #[error("fixture check failed for {fixture} ({anchor}): {message}")]
    FixtureMismatch {
        fixture: String,
        anchor: String,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(context: &str, field: &str, message: impl Into<String>) -> Error {
    Error::Invalid {
        context: context.to_string(),
        field: field.to_string(),
        message: message.into(),
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
