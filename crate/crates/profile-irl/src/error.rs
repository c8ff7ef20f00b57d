//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mdp: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid gridworld spec: {0}")]
    InvalidSpec(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid supervision: {0}")]
    InvalidSupervision(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("enumeration exceeded the node budget of {budget}")]
    EnumerationBudget { budget: usize },

    #[error("no convergence after {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("transport plan row {index} has zero mass")]
    ZeroRowMass { index: usize },

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NumericalAbort { epoch: usize, detail: String },

    #[error("unsupported {kind} schema version {found}, expected {expected}")]
    SchemaVersion {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("malformed {kind}: {detail}")]
    Malformed { kind: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Groups errors for process exit codes: configuration (1), numerical (2), I/O (3).
    pub fn exit_class(&self) -> u8 {
        match self {
            Error::InvalidMdp(_)
            | Error::InvalidPolicy(_)
            | Error::InvalidTrajectory(_)
            | Error::InvalidSpec(_)
            | Error::InvalidProfile(_)
            | Error::InvalidSupervision(_)
            | Error::InvalidConfig(_)
            | Error::EmptyDataset => 1,
            Error::EnumerationBudget { .. }
            | Error::NonConvergence { .. }
            | Error::ZeroRowMass { .. }
            | Error::NumericalAbort { .. } => 2,
            Error::SchemaVersion { .. } | Error::Malformed { .. } | Error::Io(_) => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Malformed {
            kind: "json",
            detail: err.to_string(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Malformed {
            kind: "csv",
            detail: err.to_string(),
        }
    }
}
