use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unknown qid {0:?}")]
    UnknownQid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("external scorer: {0}")]
    Scorer(String),

    #[error("search space of {subsets} subsets exceeds the budget of {budget}")]
    BudgetExceeded { subsets: u128, budget: u128 },

    #[error("query {qid}: {source}")]
    Query {
        qid: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Attaches a qid unless one is already attached.
    pub fn in_query(self, qid: &str) -> Self {
        match self {
            e @ Error::Query { .. } => e,
            e => Error::Query {
                qid: qid.to_string(),
                source: Box::new(e),
            },
        }
    }
}
