//! Request, response, cache-key, and embedding types shared by all backends.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Who a chat message speaks as. The pipeline only ever uses the two roles
/// the prompt templates define.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// One chat-completion call. Validated on construction so a malformed
/// request never reaches a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl CompletionRequest {
    pub fn new(
        model_id: impl Into<String>,
        temperature: f64,
        messages: Vec<ChatMessage>,
    ) -> Result<Self> {
        if !(0.0..=2.0).contains(&temperature) || !temperature.is_finite() {
            return Err(Error::invalid(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        if messages.is_empty() {
            return Err(Error::invalid("completion request needs at least one message"));
        }
        for message in &messages {
            if message.content.is_empty() {
                return Err(Error::invalid("chat message content must be nonempty"));
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            temperature,
            messages,
            max_tokens: None,
        })
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Result<Self> {
        if max_tokens == 0 {
            return Err(Error::invalid("max_tokens must be positive"));
        }
        self.max_tokens = Some(max_tokens);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
    pub backend_id: String,
}

/// Content-addressed identity of a completion call.
///
/// The digest hashes the canonical JSON of (backend_id, model_id,
/// temperature, messages, replicate_tag), so equal requests under the same
/// replicate tag collide and any field change separates them. The replicate
/// tag exists so deterministic temperature-0 repeat runs still occupy
/// distinct cache entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub digest: String,
}

impl CacheKey {
    pub fn for_request(backend_id: &str, request: &CompletionRequest, replicate_tag: &str) -> Self {
        #[derive(Serialize)]
        struct Material<'a> {
            backend_id: &'a str,
            model_id: &'a str,
            temperature: f64,
            messages: &'a [ChatMessage],
            replicate_tag: &'a str,
        }
        let canonical = serde_json::to_string(&Material {
            backend_id,
            model_id: &request.model_id,
            temperature: request.temperature,
            messages: &request.messages,
            replicate_tag,
        })
        .expect("key material always serializes");
        Self {
            digest: sha256_hex(canonical.as_bytes()),
        }
    }
}

/// Unit-norm embedding. Constructed via [`EmbeddingVector::normalized`] so
/// the norm invariant holds everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes raw backend output to unit Euclidean norm.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Protocol("embedding vector is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Protocol("embedding vector has non-finite entries".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Protocol("embedding vector has zero norm".into()));
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Cosine similarity; both vectors are unit norm, so this is the dot
    /// product, clamped against rounding.
    pub fn cosine(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(-1.0, 1.0)
    }
}
