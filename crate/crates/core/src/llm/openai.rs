//! OpenAI-compatible HTTP backend (chat completions + embeddings).
//!
//! Talks the standard `/chat/completions` and `/embeddings` JSON protocol,
//! so any compatible server works (hosted or local). Rate limits and server
//! errors come back as retryable transport errors for the gateway's backoff
//! loop; malformed payloads are protocol errors and are never retried.

use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};

use super::backend::Backend;
use super::types::{CompletionRequest, CompletionResponse, EmbeddingVector, TokenUsage};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "RUBRIC_API_KEY";
/// Environment variable overriding the API base URL.
pub const API_BASE_ENV: &str = "RUBRIC_API_BASE";
/// Environment variable overriding the embedding model.
pub const EMBEDDING_MODEL_ENV: &str = "RUBRIC_EMBEDDING_MODEL";

/// API base used when neither config nor environment names one.
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";
/// Embedding model used when neither config nor environment names one.
pub const DEFAULT_EMBEDDING_MODEL: &str = "text-embedding-3-small";
/// Per-request timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

pub struct OpenAiBackend {
    /// Includes base URL and embedding model, so changing either retires
    /// every cached response instead of silently serving stale ones.
    id: String,
    base_url: String,
    api_key: String,
    embedding_model: String,
    client: reqwest::blocking::Client,
}

impl OpenAiBackend {
    pub fn new(
        base_url: &str,
        api_key: &str,
        embedding_model: &str,
        timeout: Duration,
    ) -> Result<Self> {
        if api_key.is_empty() {
            return Err(Error::config("API key is empty"));
        }
        let base_url = base_url.trim_end_matches('/').to_string();
        if base_url.is_empty() {
            return Err(Error::config("API base URL is empty"));
        }
        // Proxies are deliberately not consulted; calls go straight to the
        // configured base URL.
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .no_proxy()
            .build()
            .map_err(|e| Error::config(format!("building HTTP client: {e}")))?;
        Ok(Self {
            id: format!("openai:{base_url}:{embedding_model}"),
            base_url,
            api_key: api_key.to_string(),
            embedding_model: embedding_model.to_string(),
            client,
        })
    }

    /// Reads `RUBRIC_API_KEY` (required), `RUBRIC_API_BASE`, and
    /// `RUBRIC_EMBEDDING_MODEL` (both optional with standard defaults).
    pub fn from_env() -> Result<Self> {
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| Error::config(format!("{API_KEY_ENV} is not set")))?;
        let base_url =
            std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_API_BASE.to_string());
        let embedding_model = std::env::var(EMBEDDING_MODEL_ENV)
            .unwrap_or_else(|_| DEFAULT_EMBEDDING_MODEL.to_string());
        Self::new(&base_url, &api_key, &embedding_model, DEFAULT_TIMEOUT)
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<String> {
        let url = format!("{}{path}", self.base_url);
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| Error::Transport {
                message: format!("POST {url}: {e}"),
                retryable: true,
            })?;
        let status = response.status();
        let text = response.text().map_err(|e| Error::Transport {
            message: format!("reading reply from {url}: {e}"),
            retryable: true,
        })?;
        if status.is_success() {
            return Ok(text);
        }
        let snippet: String = text.chars().take(200).collect();
        Err(Error::Transport {
            message: format!("{url} returned {status}: {snippet}"),
            retryable: status.as_u16() == 429 || status.is_server_error(),
        })
    }
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: Option<u64>,
    #[serde(default)]
    completion_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct EmbeddingReply {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

impl Backend for OpenAiBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        request: &CompletionRequest,
        _replicate_tag: &str,
    ) -> Result<CompletionResponse> {
        let mut body = serde_json::json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        if let Some(max_tokens) = request.max_tokens {
            body["max_tokens"] = max_tokens.into();
        }
        let text = self.post("/chat/completions", &body)?;
        let reply: ChatReply = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("chat completion payload: {e}")))?;
        let choice = reply
            .choices
            .first()
            .ok_or_else(|| Error::Protocol("chat completion reply has no choices".into()))?;
        let content = choice
            .message
            .content
            .clone()
            .filter(|c| !c.is_empty())
            .ok_or_else(|| Error::Protocol("chat completion reply has empty content".into()))?;
        let token_usage = reply.usage.and_then(|u| {
            Some(TokenUsage {
                prompt_tokens: u.prompt_tokens?,
                completion_tokens: u.completion_tokens?,
            })
        });
        Ok(CompletionResponse {
            text: content,
            token_usage,
            backend_id: self.id.clone(),
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let body = serde_json::json!({
            "model": self.embedding_model,
            "input": texts,
        });
        let text = self.post("/embeddings", &body)?;
        let reply: EmbeddingReply = serde_json::from_str(&text)
            .map_err(|e| Error::Protocol(format!("embedding payload: {e}")))?;
        if reply.data.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "sent {} texts, got {} embeddings",
                texts.len(),
                reply.data.len()
            )));
        }
        // The protocol tags each vector with its input index; order in the
        // data array is not guaranteed.
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for datum in reply.data {
            let slot = slots.get_mut(datum.index).ok_or_else(|| {
                Error::Protocol(format!("embedding index {} out of range", datum.index))
            })?;
            if slot.replace(datum.embedding).is_some() {
                return Err(Error::Protocol(format!(
                    "embedding index {} appears twice",
                    datum.index
                )));
            }
        }
        slots
            .into_iter()
            .enumerate()
            .map(|(i, slot)| {
                let values = slot.ok_or_else(|| {
                    Error::Protocol(format!("embedding index {i} missing from reply"))
                })?;
                EmbeddingVector::normalized(values)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::thread::JoinHandle;

    use super::*;
    use crate::llm::backend::complete as gateway_complete;
    use crate::llm::cache::ResponseCache;
    use crate::llm::retry::RetryPolicy;
    use crate::llm::types::ChatMessage;

    /// Serves one canned HTTP response per listed (status, body) pair, then
    /// returns the request bodies it saw.
    fn canned_server(responses: Vec<(u16, String)>) -> (String, JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}/v1", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                let request_body = loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let Some(header_end) = buf.windows(4).position(|w| w == b"\r\n\r\n") else {
                        continue;
                    };
                    let headers = String::from_utf8_lossy(&buf[..header_end]).to_lowercase();
                    let content_length: usize = headers
                        .lines()
                        .find_map(|l| l.strip_prefix("content-length:"))
                        .map(|v| v.trim().parse().unwrap())
                        .unwrap_or(0);
                    let body_start = header_end + 4;
                    if buf.len() >= body_start + content_length {
                        break String::from_utf8_lossy(
                            &buf[body_start..body_start + content_length],
                        )
                        .to_string();
                    }
                };
                seen.push(request_body);
                let reason = match status {
                    200 => "OK",
                    400 => "Bad Request",
                    429 => "Too Many Requests",
                    _ => "Server Error",
                };
                let reply = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
                     Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
            seen
        });
        (base, handle)
    }

    fn backend(base: &str) -> OpenAiBackend {
        OpenAiBackend::new(base, "test-key", "test-embedder", Duration::from_secs(5)).unwrap()
    }

    fn request() -> CompletionRequest {
        CompletionRequest::new(
            "test-model",
            0.0,
            vec![ChatMessage::system("sys"), ChatMessage::user("usr")],
        )
        .unwrap()
        .with_max_tokens(64)
        .unwrap()
    }

    fn chat_reply(text: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 3},
        })
        .to_string()
    }

    #[test]
    fn completion_round_trips_the_wire_format() {
        let (base, server) = canned_server(vec![(200, chat_reply("4, 2, 5"))]);
        let reply = backend(&base).complete(&request(), "run1").unwrap();
        assert_eq!(reply.text, "4, 2, 5");
        assert_eq!(
            reply.token_usage,
            Some(TokenUsage { prompt_tokens: 12, completion_tokens: 3 })
        );

        let sent = server.join().unwrap();
        let body: serde_json::Value = serde_json::from_str(&sent[0]).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 64);
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "usr");
    }

    #[test]
    fn rate_limit_then_success_is_retried_through_the_gateway() {
        let (base, server) = canned_server(vec![
            (429, "{\"error\": \"slow down\"}".to_string()),
            (200, chat_reply("ok")),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let retry = RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 1,
            factor: 1.0,
            jitter: 0.0,
        };
        let reply =
            gateway_complete(&backend(&base), &request(), "run1", &cache, &retry).unwrap();
        assert_eq!(reply.text, "ok");
        assert_eq!(server.join().unwrap().len(), 2, "exactly one retry");
    }

    #[test]
    fn status_codes_map_to_retryability() {
        let (base, _server) = canned_server(vec![(500, "oops".to_string())]);
        let err = backend(&base).complete(&request(), "run1").unwrap_err();
        assert!(matches!(err, Error::Transport { retryable: true, .. }), "{err}");

        let (base, _server) = canned_server(vec![(400, "bad".to_string())]);
        let err = backend(&base).complete(&request(), "run1").unwrap_err();
        assert!(matches!(err, Error::Transport { retryable: false, .. }), "{err}");
    }

    #[test]
    fn malformed_payloads_are_protocol_errors() {
        let (base, _server) = canned_server(vec![(200, "{\"nope\": true}".to_string())]);
        let err = backend(&base).complete(&request(), "run1").unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");

        let (base, _server) = canned_server(vec![(200, "{\"choices\": []}".to_string())]);
        let err = backend(&base).complete(&request(), "run1").unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }

    #[test]
    fn embeddings_reorder_by_index_and_normalize() {
        let reply = serde_json::json!({
            "data": [
                {"index": 1, "embedding": [0.0, 2.0]},
                {"index": 0, "embedding": [3.0, 4.0]},
            ],
        })
        .to_string();
        let (base, server) = canned_server(vec![(200, reply)]);
        let vectors = backend(&base)
            .embed(&["first".to_string(), "second".to_string()])
            .unwrap();
        assert!((vectors[0].values()[0] - 0.6).abs() < 1e-12);
        assert!((vectors[0].values()[1] - 0.8).abs() < 1e-12);
        assert_eq!(vectors[1].values(), &[0.0, 1.0]);

        let sent = server.join().unwrap();
        let body: serde_json::Value = serde_json::from_str(&sent[0]).unwrap();
        assert_eq!(body["model"], "test-embedder");
        assert_eq!(body["input"][1], "second");
    }

    #[test]
    fn embedding_count_mismatch_is_a_protocol_error() {
        let reply = serde_json::json!({
            "data": [{"index": 0, "embedding": [1.0]}],
        })
        .to_string();
        let (base, _server) = canned_server(vec![(200, reply)]);
        let err = backend(&base)
            .embed(&["a".to_string(), "b".to_string()])
            .unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }

    #[test]
    fn constructor_rejects_blank_configuration() {
        assert!(OpenAiBackend::new("", "k", "m", DEFAULT_TIMEOUT).is_err());
        assert!(OpenAiBackend::new("http://x", "", "m", DEFAULT_TIMEOUT).is_err());
    }
}
