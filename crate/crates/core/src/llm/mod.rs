//! Model access layer: prompt rendering, strict reply parsing, retries,
//! content-addressed caching, and the pluggable [`Backend`] trait with an
//! OpenAI-compatible HTTP implementation and a deterministic mock.
//!
//! Pipeline code goes through the gateway functions [`complete`] and
//! [`embed`], which consult the cache before any backend and store every
//! fresh response, so an interrupted run resumes from disk and a finished
//! manifest replays offline byte-for-byte.

pub mod backend;
pub mod cache;
pub mod mock;
pub mod openai;
pub mod parse;
pub mod prompts;
pub mod retry;
pub mod types;

pub use backend::{complete, embed, Backend};
pub use cache::{embedding_digest, ResponseCache};
pub use mock::{MockBackend, MOCK_EMBEDDING_DIM};
pub use openai::{
    OpenAiBackend, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE, DEFAULT_EMBEDDING_MODEL,
    DEFAULT_TIMEOUT, EMBEDDING_MODEL_ENV,
};
pub use parse::{
    parse_consolidated_tuple, parse_criteria_rows, parse_score_list, CriteriaParse, CriteriaRow,
    SkippedRow,
};
pub use prompts::{
    default_outcome_definitions, render_anchor_prompt, render_consolidation_prompt,
    render_discovery_prompt, render_scoring_prompt, CRITERIA_HEADER,
};
pub use retry::RetryPolicy;
pub use types::{
    CacheKey, ChatMessage, CompletionRequest, CompletionResponse, EmbeddingVector, Role,
    TokenUsage,
};
