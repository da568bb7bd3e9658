use thiserror::Error;

/// Errors produced by graph construction, signal handling, fitting and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("format error at row {row}: {msg}")]
    Format { row: usize, msg: String },

    #[error("insufficient data in {segment} segment: have {have} steps, need {need}")]
    InsufficientData {
        segment: &'static str,
        have: usize,
        need: usize,
    },

    #[error("normal equations are rank deficient ({0}); retry with a positive ridge_lambda")]
    RankDeficient(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("simulation became non-finite at step {step}")]
    Instability { step: usize },

    #[error("undefined normalization: {0}")]
    UndefinedNormalization(String),

    #[error("all grid points failed; first error: {0}")]
    GridFailed(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wrap an error with the name of the experiment stage it occurred in.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
