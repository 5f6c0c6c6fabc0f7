//! Native student: hashed word and character n-gram features feeding a
//! class-weighted multinomial logistic regression, plus the file exchange
//! that lets externally trained models join the evaluation.

mod exchange;
mod hasher;
mod model;

pub use exchange::{
    export_for_external_trainer, import_external_predictions, write_predictions, ExportManifest, ExportedFile,
    PredictionSet,
};
pub use hasher::{feature_strings, featurize, HasherConfig, SparseVector};
pub use model::{
    gradient, objective, predict, train_student, train_student_featurized, Prediction, StudentModel, TrainingConfig,
    TrainingOutcome, MODEL_FORMAT_VERSION,
};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudentError {
    #[error("text is empty")]
    EmptyText,
    #[error("invalid hasher configuration: {0}")]
    InvalidHasher(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training data covers fewer than two labels")]
    DegenerateData,
    #[error("unknown label \"{0}\"")]
    UnknownLabel(String),
    #[error("no class weight for label \"{0}\"")]
    MissingWeight(String),
    #[error("loss became non-finite in epoch {epoch}, batch {batch} (learning rate too high?)")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("line {line}: expected {expected} scores, got {got}")]
    ShapeMismatch { line: usize, expected: usize, got: usize },
    #[error("line {line}: scores are not a probability vector ({detail})")]
    NotAProbability { line: usize, detail: String },
    #[error("line {line}: unknown id \"{id}\"")]
    UnknownId { line: usize, id: String },
    #[error("line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
}
