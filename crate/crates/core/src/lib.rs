//! Multi-question prompting pipeline for reasoning models.
//!
//! Questions are packed several to a prompt, sent to a completions endpoint
//! (or a replay store), and the resulting reasoning spans are split back into
//! per-question traces. Traces whose answers verify against the gold answer
//! become single-question supervised fine-tuning examples. The analytics
//! module computes length, compression, accuracy, efficiency and behavior
//! statistics over the same artifacts.

pub mod analytics;
pub mod curator;
pub mod error;
pub mod ingest;
pub mod packer;
pub mod par;
pub mod parser;
pub mod pipeline;
pub mod sampler;
pub mod verifier;

pub use error::{Error, Result};
pub use ingest::{Corpus, QuestionRecord};
pub use packer::{Condition, Family, PromptSpec};
pub use parser::{ParsedTrace, TokenCounter};
pub use sampler::{DecodeParams, GenerationRecord};
pub use verifier::{AnswerForm, Verdict};
