use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("intensity of component `{component}` is not finite at t={time} (got {value})")]
    NonFiniteIntensity {
        component: &'static str,
        time: f64,
        value: f64,
    },
    #[error("negative rate {value} from component `{component}` at t={time}")]
    NegativeIntensity {
        component: &'static str,
        time: f64,
        value: f64,
    },
    #[error("component `{component}` exceeded its thinning bound at t={time}: rate {rate} > bound {bound}")]
    BoundViolation {
        component: &'static str,
        time: f64,
        rate: f64,
        bound: f64,
    },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mark of dimension {got} does not match expected dimension {expected} for {kind}")]
    MarkDimension {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("disagreement window is inconsistent: {0}")]
    InconsistentWindow(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },
    #[error("missing tabular entry for history {0}")]
    MissingKey(String),
    #[error("history {0} has zero probability under the observational process")]
    ZeroProbabilityPrefix(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),
    #[error("parse error at {path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown graph node `{0}`")]
    UnknownNode(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
