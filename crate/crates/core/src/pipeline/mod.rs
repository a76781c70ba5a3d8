//! Dataset ingestion, prediction, bulk export, model persistence and the
//! ablation driver behind the command-line tool.

pub mod ablation;
pub mod dataset;
pub mod export;
pub mod persist;
pub mod predict;
pub mod synth;

use std::path::PathBuf;

use thiserror::Error;

use crate::encoder::EncoderError;
use crate::evaluation::EvalError;
use crate::fusion::FusionError;
use crate::numerics::NumericsError;
use crate::rulebook::RulebookError;
use crate::training::TrainError;

pub use ablation::{
    run_ablation, sweep_threshold, AblationConfig, AblationOutcome, AblationSummary, SweepPoint,
};
pub use dataset::{ingest, normalize_whitespace, write_jsonl, Dataset};
pub use export::{bulk_lines, export_bulk, parse_bulk, BulkDocument};
pub use persist::{load_model, save_model, ModelManifest};
pub use predict::{predict, predict_batch, predict_probabilities};
pub use synth::{generate_corpus, generate_off_topic, CorpusConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("unknown topic label {0:?}")]
    UnknownLabel(String),
    #[error("threshold must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("nothing to export")]
    EmptyPredictions,
    #[error("invalid model directory: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Rulebook(#[from] RulebookError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code: 2 for bad input or configuration, 3 for failures
    /// while running.
    pub fn exit_code(&self) -> i32 {
        use PipelineError::*;
        match self {
            MissingFile(_)
            | MalformedLine { .. }
            | DuplicateDocId(_)
            | UnknownLabel(_)
            | InvalidThreshold(_)
            | EmptyPredictions
            | InvalidModel(_)
            | Rulebook(_) => 2,
            Train(e) => match e {
                TrainError::NonFiniteLoss { .. } | TrainError::Numerics(_) | TrainError::Io(_) => 3,
                TrainError::Fusion(_) => 3,
                _ => 2,
            },
            Eval(_) => 2,
            Fusion(FusionError::UnknownVariant(_) | FusionError::InvalidConfig(_)) => 2,
            Encoder(
                EncoderError::MissingFile(_)
                | EncoderError::DimensionMismatch { .. }
                | EncoderError::UnknownDocId(_)
                | EncoderError::Parse { .. }
                | EncoderError::InvalidConfig(_),
            ) => 2,
            Json(_) => 2,
            Fusion(_) | Encoder(_) | Numerics(_) | Io(_) => 3,
        }
    }
}
