//! In-context classification: prompt templates, the LLM client boundary,
//! label parsing, metrics and the end-to-end evaluation pipeline.

pub mod client;
pub mod eval;
pub mod parse;
pub mod pipeline;
pub mod prompt;

pub use client::{ClientError, CompletionRequest, GenerationSettings, LlmClient};
pub use eval::{PredictionRecord, StrategyReport};
pub use parse::{parse_label, ParsedLabel};
pub use pipeline::{run_pipeline, Strategy};
pub use prompt::{Prompt, PromptKind, Rationales};
