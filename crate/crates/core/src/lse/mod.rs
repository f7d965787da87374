//! Description augmentation: a per-scene database of descriptions with
//! object locations, context selection, prompt assembly and an LLM client
//! with a consistency gate.

mod augment;
mod client;
mod prompt;
mod select;
mod sidb;

pub use augment::{
    augment_batch, augment_description, AugmentOptions, AugmentedRecord, SCENE_NOT_FOUND,
};
pub use client::{
    consistency_gate, mock_llm, GateFailure, HttpLlm, LlmClient, LlmConfig, LlmError, MockLlm,
    API_KEY_ENV, MOCK_MAX_ANCHORS,
};
pub use prompt::{
    assemble_prompt, context_line, PromptBundle, PromptTemplate, DEFAULT_TEMPLATE, SYSTEM_SEPARATOR,
};
pub use select::{contains_phrase, item_seed, select_context, tokens, DEFAULT_CONTEXT_K};
pub use sidb::{
    build_sidb, Annotation, AnnotationBoxes, BoxSource, SceneInfoDB, SidbEntry, SIDB_VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum LseError {
    #[error("duplicate desc_id `{0}`")]
    DuplicateDescId(String),
    #[error("scene `{0}` is not in the database")]
    SceneNotFound(String),
    #[error("annotation `{desc_id}`: {reason}")]
    InvalidAnnotation { desc_id: String, reason: String },
    #[error("prompt template: {0}")]
    Template(String),
    #[error("database: {0}")]
    Sidb(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("client failed for `{desc_id}`: {source}")]
    Client { desc_id: String, source: LlmError },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
