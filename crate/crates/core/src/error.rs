use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A single invariant violation, tagged with the config or parameter path it
/// belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {}", join_fields(.0))]
    Invalid(Vec<FieldError>),

    #[error("config syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown config key '{key}' at line {line}, column {column}")]
    UnknownKey {
        key: String,
        line: usize,
        column: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("zero-norm wavefunction")]
    ZeroNorm,

    #[error("accuracy guard: dt * max kinetic energy = {product:.4} (must be < 0.5)")]
    AccuracyGuard { product: f64 },

    #[error("wrap-around guard: boundary amplitude {amplitude:.3e} at t = {time} exceeds 1e-8")]
    WrapAround { amplitude: f64, time: f64 },

    #[error("initial state norm {0} is not 1 within tolerance")]
    NotNormalized(f64),

    #[error("capture target {target} unreachable on the rising branch (best achievable {best:.6} at strength {strength})")]
    TargetUnreachable {
        target: f64,
        best: f64,
        strength: f64,
    },

    #[error("empty sample set")]
    EmptySamples,

    #[error("capture record has no capture weight to normalise")]
    NoCapture,

    #[error("batch mixes reduction rules {0} and {1}")]
    MixedRules(String, String),

    #[error("malformed record in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn join_fields(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid(vec![FieldError::new(field, message)])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for validation problems, 2 for
    /// numerical-guard aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AccuracyGuard { .. }
            | Error::WrapAround { .. }
            | Error::TargetUnreachable { .. }
            | Error::NoCapture => 2,
            _ => 1,
        }
    }
}
