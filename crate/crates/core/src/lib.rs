//! Zero-shot image diagnosis against per-class symptom descriptions.
//!
//! An image embedding is compared with the text embeddings of short symptom
//! phrases generated for every diagnostic category; per-class scores
//! aggregate those similarities and the best-scoring class is the diagnosis.
//! The per-symptom similarities are kept so every prediction can be
//! explained.
//!
//! Modules:
//! - [`scoring`]: dot products, aggregation and argmax.
//! - [`encoders`]: image preprocessing, BPE tokenization and ONNX inference.
//! - [`knowledge`]: prompt templates, LLM querying, symptom parsing and the
//!   knowledge-base file format.
//! - [`eval`]: dataset manifests, batch evaluation, gains and sweeps.
//! - [`report`]: per-case explanations in JSON, CSV and text.

pub mod encoders;
pub mod eval;
pub mod knowledge;
pub mod report;
pub mod scoring;

pub use encoders::{Encoder, EncoderBundle, EncoderError};
pub use eval::{compare, evaluate, DatasetManifest, EvalError, EvalOptions, EvalResult, Evaluator, GainRow, SweepGrid};
pub use knowledge::{
    build_kb, load_kb, parse_symptoms, render_prompt, save_kb, ClassDescriptor, KnowledgeBase, KnowledgeError,
    LlmClient, LlmConfig, PromptTemplate, PromptVariant,
};
pub use report::{build_case_report, export_report, CaseReport, ReportFormat};
pub use scoring::{
    classify, dot, l2_normalize, score, AggregationMode, ClassScore, EmbeddedClass,
    EmbeddedSymptom, Embedding, ScoreReport, ScoringError, SymptomScore,
};
