use std::fmt;

use thiserror::Error;

/// Which linear system a stage of the march was solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Distribution,
    Signal,
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemKind::Distribution => f.write_str("distribution"),
            SystemKind::Signal => f.write_str("signal"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeficitReason {
    /// Fewer admissible rows than unknowns, independent of the numbers involved.
    Structural,
    /// Every entry of the assembled matrix vanished.
    ZeroMatrix,
}

impl fmt::Display for DeficitReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeficitReason::Structural => f.write_str("too few equations"),
            DeficitReason::ZeroMatrix => f.write_str("coefficient matrix is identically zero"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{system} system at band {band} is underdetermined ({rows} rows, {cols} unknowns): {reason}")]
    Underdetermined {
        band: usize,
        system: SystemKind,
        rows: usize,
        cols: usize,
        reason: DeficitReason,
    },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("reflection ambiguity could not be resolved (residuals {plus:.3e} vs {minus:.3e})")]
    AmbiguousReflection { plus: f64, minus: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than by the inputs' format.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Underdetermined { .. }
                | Error::DegenerateSignal(_)
                | Error::AmbiguousReflection { .. }
                | Error::NoConvergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
