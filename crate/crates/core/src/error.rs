use crate::formula::ParseError;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("sigma mismatch: {0}")]
    SigmaMismatch(String),
    #[error("not a kit: {0}")]
    NotAKit(String),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("valuation has no entry for atom {0:?}")]
    MissingAtom(String),
    #[error("resource cap exceeded: {0}")]
    CapExceeded(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("closure has {0} formulas; at most 64 are supported")]
    SigmaTooLarge(usize),
    #[error("formula {formula} uses {modality}, which is outside the decidable fragment")]
    Fragment { formula: String, modality: String },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
