use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("assumption {clause} violated: {detail}")]
    Assumption { clause: String, detail: String },

    #[error("history does not cover t = {t} (available [{from}, {to}])")]
    Coverage { t: f64, from: f64, to: f64 },

    #[error("knot time {t} is not after newest knot {newest}")]
    Ordering { t: f64, newest: f64 },

    #[error("nonpositive mass entry 1 + eps(t) lambda = {value} at t = {t}, mode {mode}")]
    Stiffness { t: f64, mode: usize, value: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("step failed at t = {t}: {source}")]
    Step { t: f64, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn assumption(clause: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Assumption {
            clause: clause.into(),
            detail: detail.into(),
        }
    }

    /// Strips any `Step` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
