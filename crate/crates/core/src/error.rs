use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate lattice: cell volume {0:e} A^3")]
    DegenerateLattice(f64),

    #[error("zero Miller index: H = 0 has no reciprocal vector, use the V(0) path")]
    ZeroReflection,

    #[error("wavevector parallel to reciprocal vector: Schwinger axis undefined")]
    ParallelVectors,

    #[error("forbidden reflection: |V(H)| = 0")]
    ForbiddenReflection,

    #[error("degenerate dispersion roots (eps1 = eps2 = {0:e})")]
    DegenerateRoots(f64),

    #[error("singular boundary system: {0}")]
    SingularBoundary(String),

    #[error("Nyquist violation: |l| = {l} but n_phi = {n_phi} allows at most {max}")]
    Nyquist { l: i64, n_phi: usize, max: i64 },

    #[error("zero total intensity")]
    ZeroIntensity,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("loop crosses masked point ({0}, {1})")]
    MaskedLoop(usize, usize),

    #[error("kernel under-resolved: sigma {sigma:e} < grid step {step:e}")]
    KernelUnderResolved { sigma: f64, step: f64 },

    #[error("fit did not converge after {iterations} iterations (residual norm {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error class; the CLI maps it to its exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Config,
    Physics,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Physics => 3,
            ErrorKind::Io => 4,
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } => ErrorKind::Config,
            Error::Parse { .. } | Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Physics,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
