//! Rubric discovery, LLM-judge scoring, and statistical validation for text
//! corpora.
//!
//! The crate covers the full workflow: brainstorm candidate quality criteria
//! with independent high-temperature model agents, consolidate them into a
//! compact rubric by clustering their scoring behavior, apply the rubric at
//! scale with a deterministic judge, and validate the resulting scores with
//! agreement statistics, ROC analysis, cross-validated classifiers, and
//! mixed-model rate ratios. Model access goes through a pluggable backend
//! trait with caching and a deterministic mock, so every pipeline stage can
//! run offline and reproducibly.

pub mod cli;
pub mod consolidation;
pub mod corpus;
pub mod discovery;
pub mod error;
pub mod judge;
pub mod llm;
pub mod pipeline;
pub mod rubric;
pub mod scores;
pub mod stability;
pub mod stats;
pub mod util;

pub use cli::run_cli;
pub use error::{Error, ErrorCategory, Result};
