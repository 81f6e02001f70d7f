use thiserror::Error;

/// Errors raised by parsers, constructors and the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed line in a line-oriented input file (1-based line number).
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// A value or combination of values that violates a type invariant or an
    /// operation precondition.
    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },
    /// A distribution with no mass, for which inequality is undefined.
    #[error("degenerate distribution: {0}")]
    Degenerate(String),
    /// No query has a relevant document in the judgments.
    #[error("no evaluable queries")]
    NoEvaluableQueries,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            msg: msg.into(),
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
