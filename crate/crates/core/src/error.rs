use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration diverged at t={t}: {detail}")]
    Divergence { t: f64, detail: String },

    #[error("QP Hessian is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("unknown id(s): {}", .0.join(", "))]
    UnknownIds(Vec<String>),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error("session error: {0}")]
    Session(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),

    #[error("node `{0}` has an empty label")]
    EmptyLabel(String),

    #[error("triple endpoint `{0}` does not exist")]
    DanglingEndpoint(String),

    #[error("relation `{relation}` expects {expected}, got ({head_kind} -> {tail_kind})")]
    SignatureViolation {
        relation: String,
        expected: String,
        head_kind: String,
        tail_kind: String,
    },

    #[error("self-referencing triple on `{0}`")]
    SelfLoop(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
