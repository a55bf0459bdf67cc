use proxigraph_core::graph::GraphError;
use proxigraph_core::AssociateHash;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("event log line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("snapshot manifest does not match the event log: {0}")]
    ManifestMismatch(String),
    #[error("unknown associate {0}")]
    UnknownAssociate(AssociateHash),
    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("malformed request body: {0}")]
    MalformedBody(String),
    #[error("no endpoint at {0}")]
    NotFound(String),
    #[error("the event log could not be written; restart the service to recover")]
    Unavailable,
}

impl ServiceError {
    /// Stable machine-readable code for error documents.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Config(_) => "Config",
            ServiceError::Io(_) => "Io",
            ServiceError::CorruptLog { .. } => "CorruptLog",
            ServiceError::ManifestMismatch(_) => "ManifestMismatch",
            ServiceError::UnknownAssociate(_) | ServiceError::Graph(GraphError::UnknownAssociate(_)) => {
                "UnknownAssociate"
            }
            ServiceError::InvalidParameter { .. } => "InvalidParameter",
            ServiceError::Graph(GraphError::InvalidWindow { .. }) => "InvalidWindow",
            ServiceError::Graph(_) => "InvalidRequest",
            ServiceError::MalformedBody(_) => "MalformedBody",
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::Unavailable => "Unavailable",
        }
    }

    pub fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        ServiceError::InvalidParameter { name, message: message.into() }
    }
}
