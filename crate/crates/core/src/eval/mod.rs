//! Dataset manifests, batch evaluation, gains over a baseline and sweeps.

mod gain;
mod harness;
mod manifest;
pub mod presets;
pub mod render;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

use crate::encoders::EncoderError;
use crate::scoring::ScoringError;

pub use gain::{compare, format_gain, format_percent, GainRow};
pub use harness::{
    evaluate, CacheStats, ClassTally, ConfigEcho, EmbeddingCache, EvalOptions, EvalResult, Evaluator,
    ItemFailure, Prediction, SYMPTOM_PLACEHOLDER,
};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use presets::Preset;
pub use sweep::{BestCell, SweepCell, SweepGrid, SweepRow};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("manifest classes missing from knowledge base `{kb_id}`: {}", missing.join(", "))]
    ClassMismatch { kb_id: String, missing: Vec<String> },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("results are not comparable: {0}")]
    Incomparable(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Encode { path: PathBuf, source: EncoderError },
    #[error("text encoding failed: {0}")]
    Encoder(EncoderError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("no image could be evaluated ({failures} failures)")]
    NothingEvaluated { failures: usize },
}
