//! Per-class symptom knowledge: prompts, LLM answers, parsing and the
//! schema-versioned JSON file format.

mod kb;
pub mod llm;
mod parse;
mod prompt;

use std::path::PathBuf;

use thiserror::Error;

pub use kb::{
    build_kb, class_id_for, load_kb, save_kb, ClassDescriptor, DescriptorSource, KnowledgeBase,
    CATEGORY_NAME_PROMPT_ID, SCHEMA_VERSION,
};
pub use llm::{query_llm, CacheEntry, LlmClient, LlmConfig, PromptRequest, ResponseCache};
pub use parse::parse_symptoms;
pub use prompt::{render_prompt, PromptTemplate, PromptVariant, BASELINE_ID, DESIGNED_ID, PLACEHOLDER};

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("category must not be empty")]
    EmptyCategory,
    #[error("duplicate category `{0}`")]
    DuplicateCategory(String),
    #[error("invalid prompt template: {0}")]
    Template(String),
    #[error("LLM transport error: {0}")]
    Transport(String),
    #[error("LLM returned an empty completion")]
    EmptyResponse,
    #[error("cannot parse symptoms: {0}")]
    Parse(String),
    #[error("class `{class}`: {source}")]
    Class { class: String, source: Box<KnowledgeError> },
    #[error("knowledge base schema error: {0}")]
    Schema(String),
    #[error("knowledge base version error: {0}")]
    Versioning(String),
    #[error("duplicate class_id `{0}`")]
    DuplicateClassId(String),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("response cache error: {0}")]
    Cache(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl KnowledgeError {
    /// Strips the class wrapper.
    pub fn root(&self) -> &KnowledgeError {
        match self {
            KnowledgeError::Class { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the LLM round trip (transport, empty answer,
    /// unparseable answer).
    pub fn is_llm_failure(&self) -> bool {
        matches!(
            self.root(),
            KnowledgeError::Transport(_) | KnowledgeError::EmptyResponse | KnowledgeError::Parse(_)
        )
    }
}
