//! Backend abstraction and the cached, retrying gateway in front of it.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::cache::{embedding_digest, ResponseCache};
use super::retry::RetryPolicy;
use super::types::{CacheKey, CompletionRequest, CompletionResponse, EmbeddingVector};

/// A chat-completion plus embedding provider. Implementations must be safe
/// to share across threads; the pipeline issues calls concurrently.
pub trait Backend: Send + Sync {
    /// Stable identifier baked into cache keys; changing it invalidates
    /// every cached response for this backend.
    fn id(&self) -> &str;

    /// One completion call. `replicate_tag` is visible so test backends can
    /// behave differently across repeat runs; real backends ignore it.
    fn complete(&self, request: &CompletionRequest, replicate_tag: &str)
        -> Result<CompletionResponse>;

    /// Embeds each text into a unit vector of the backend's fixed dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

/// Cache-first completion: a hit never touches the backend; a miss goes
/// through the retry policy and is stored before returning.
pub fn complete(
    backend: &dyn Backend,
    request: &CompletionRequest,
    replicate_tag: &str,
    cache: &ResponseCache,
    retry: &RetryPolicy,
) -> Result<CompletionResponse> {
    let key = CacheKey::for_request(backend.id(), request, replicate_tag);
    if let Some(hit) = cache.get_completion(&key)? {
        return Ok(hit);
    }
    let response = retry.run(|| backend.complete(request, replicate_tag))?;
    cache.put_completion(&key, &response)?;
    Ok(response)
}

/// Cache-first embedding of many texts. Duplicate and already-cached texts
/// are collapsed before the backend sees a single deduplicated batch; the
/// output lines up with the input order.
pub fn embed(
    backend: &dyn Backend,
    texts: &[String],
    cache: &ResponseCache,
    retry: &RetryPolicy,
) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Err(Error::invalid("embed needs at least one text"));
    }
    let mut resolved: HashMap<&str, EmbeddingVector> = HashMap::new();
    let mut misses: Vec<String> = Vec::new();
    for text in texts {
        if resolved.contains_key(text.as_str()) {
            continue;
        }
        match cache.get_embedding(&embedding_digest(backend.id(), text))? {
            Some(vector) => {
                resolved.insert(text, vector);
            }
            None => {
                if !misses.contains(text) {
                    misses.push(text.clone());
                }
            }
        }
    }
    if !misses.is_empty() {
        let vectors = retry.run(|| backend.embed(&misses))?;
        if vectors.len() != misses.len() {
            return Err(Error::Protocol(format!(
                "backend embedded {} texts but returned {} vectors",
                misses.len(),
                vectors.len()
            )));
        }
        for (text, vector) in misses.iter().zip(vectors) {
            cache.put_embedding(&embedding_digest(backend.id(), text), &vector)?;
            resolved.insert(text, vector);
        }
    }
    Ok(texts.iter().map(|t| resolved[t.as_str()].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock::MockBackend;
    use crate::llm::types::ChatMessage;

    fn request(text: &str) -> CompletionRequest {
        CompletionRequest::new("mock-model", 0.0, vec![ChatMessage::user(text)]).unwrap()
    }

    #[test]
    fn second_identical_call_is_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let backend = MockBackend::new(1);
        let retry = RetryPolicy::none();

        let first = complete(&backend, &request("hello"), "", &cache, &retry).unwrap();
        assert_eq!(backend.completion_calls(), 1);
        let second = complete(&backend, &request("hello"), "", &cache, &retry).unwrap();
        assert_eq!(backend.completion_calls(), 1, "hit must not touch the backend");
        assert_eq!(first, second);

        // A different replicate tag is a different cache entry.
        let _ = complete(&backend, &request("hello"), "run2", &cache, &retry).unwrap();
        assert_eq!(backend.completion_calls(), 2);
    }

    #[test]
    fn embed_deduplicates_before_calling_the_backend() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let backend = MockBackend::new(1);
        let retry = RetryPolicy::none();

        let texts: Vec<String> = ["alpha", "beta", "alpha", "alpha"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let vectors = embed(&backend, &texts, &cache, &retry).unwrap();
        assert_eq!(vectors.len(), 4);
        assert_eq!(vectors[0], vectors[2]);
        assert_eq!(vectors[0], vectors[3]);
        assert_ne!(vectors[0], vectors[1]);
        assert_eq!(backend.embedding_calls(), 1, "one deduplicated batch");

        // Everything cached now; a rerun is free.
        let again = embed(&backend, &texts, &cache, &retry).unwrap();
        assert_eq!(again, vectors);
        assert_eq!(backend.embedding_calls(), 1);
    }

    #[test]
    fn empty_embed_input_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let backend = MockBackend::new(1);
        assert!(embed(&backend, &[], &cache, &RetryPolicy::none()).is_err());
    }
}
