use std::path::PathBuf;

use thiserror::Error;

use crate::QuoteId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate quote id {0}")]
    DuplicateQuoteId(QuoteId),

    #[error("unknown quote id {0}")]
    UnknownQuote(QuoteId),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no context-quote pairs survived filtering")]
    EmptyDataset,

    #[error("infeasible split ({reason}); offending quotes: {quotes:?}")]
    InfeasibleSplit { reason: String, quotes: Vec<QuoteId> },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("stale quote index: built by encoder {index}, current encoder is {current}")]
    StaleIndex { index: String, current: String },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("unknown ablation {0:?}; expected one of full, no_sememe, no_retrain, no_simtrain, sim_baseline")]
    UnknownAblation(String),

    #[error("training diverged in stage {stage} at step {step} (loss {loss})")]
    Diverged {
        stage: u8,
        step: usize,
        loss: f64,
        state: Box<crate::trainer::TrainState>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
