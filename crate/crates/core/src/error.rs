use std::path::PathBuf;

use thiserror::Error;

use crate::wavelet::SUPPORTED_WAVELETS;

/// Broad category of an error, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad parameters supplied by the caller.
    Usage,
    /// Malformed, missing or inconsistent input data.
    Data,
    /// A configuration or numerical invariant was violated.
    Invariant,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shorter than one window ({len} samples < window {window})")]
    InputShorterThanWindow { len: usize, window: usize },

    #[error("segment length {len} must be divisible by 2^{level} = {}", 1usize << level)]
    NotDivisible { len: usize, level: usize },

    #[error("unknown wavelet `{0}`; supported wavelets: {list}", list = SUPPORTED_WAVELETS.join(", "))]
    UnknownWavelet(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("entropy undefined for zero energy")]
    ZeroEnergy,

    #[error("spectrum is identically zero; crest factor and entropy are undefined")]
    ZeroSpectrum,

    #[error("feature metadata mismatch: model expects {expected}, got {found}")]
    MetadataMismatch { expected: String, found: String },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("label `{0}` has no entry in the label map")]
    UnmappedLabel(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UnknownWavelet(_) => ErrorClass::Usage,
            Error::InputShorterThanWindow { .. }
            | Error::ZeroSpectrum
            | Error::MetadataMismatch { .. }
            | Error::Dataset(_)
            | Error::UnmappedLabel(_)
            | Error::Parse { .. }
            | Error::Io { .. } => ErrorClass::Data,
            Error::NotDivisible { .. } | Error::InvalidParameter(_) | Error::ZeroEnergy => {
                ErrorClass::Invariant
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Returns `InvalidParameter` with the formatted message when `cond` is false.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if $cond {
        } else {
            return Err($crate::error::Error::InvalidParameter(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
