use std::path::PathBuf;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the support of the distribution or operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A factorization or normalization failed on otherwise valid input.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A Gram or information matrix is singular.
    #[error("rank-deficient design; offending columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    /// The data cannot be used as given.
    #[error("invalid input: {0}")]
    Input(String),

    /// A configuration file or scenario is malformed.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Fewer chains than the diagnostic needs.
    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),

    /// A failure inside a Gibbs sweep, tagged with where it happened.
    #[error("chain {chain}, iteration {iteration}: {source}")]
    Sweep {
        chain: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    /// Too many Monte Carlo replications failed.
    #[error("{failed} of {total} replications failed (limit {limit:.1}%)")]
    StudyFailed {
        failed: usize,
        total: usize,
        limit: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches cluster context to a numerical error raised inside a cluster-level draw.
    pub(crate) fn in_cluster(self, cluster: usize, what: &str) -> Self {
        match self {
            Error::Numerical(msg) => Error::Numerical(format!("{what}, cluster {cluster}: {msg}")),
            Error::Domain(msg) => Error::Domain(format!("{what}, cluster {cluster}: {msg}")),
            other => other,
        }
    }

    /// True for errors caused by bad input files or configuration.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Input(_) | Error::Config(_) | Error::Csv(_) | Error::Io { .. } => true,
            Error::Sweep { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
