//! Deterministic mock backend for offline runs and tests.
//!
//! Responses come from a scripted scenario (a JSON map from request
//! fingerprint to reply text) when one matches; otherwise the mock
//! synthesizes a reply in the valid format for whichever prompt shape it
//! recognizes. Synthesis is cue-aware: generated corpora plant
//! `<intensity> <stem>` word pairs in their text, and the mock reads those
//! cues back out, so discovery finds the planted stems and scoring returns
//! the planted levels. Everything is a pure function of (seed, request,
//! replicate tag), which keeps whole-pipeline runs byte-reproducible.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::corpus::INTENSITY_WORDS;
use crate::error::{Error, Result};
use crate::stats::glmm::standard_normal;
use crate::util::{derive_seed, rng_from, sha256_hex};

use super::backend::Backend;
use super::parse::read_quoted;
use super::prompts::{
    ANCHOR_MARKER, CONSOLIDATION_MARKER, DISCOVERY_MARKER, EXAMPLES_HEADING, SCORING_MARKER,
};
use super::types::{CompletionRequest, CompletionResponse, EmbeddingVector, TokenUsage};

/// Embedding dimension of the mock backend.
pub const MOCK_EMBEDDING_DIM: usize = 256;

pub struct MockBackend {
    id: String,
    seed: u64,
    scenario: HashMap<String, String>,
    /// Per-replicate-tag probability of replacing a score with a different
    /// uniformly drawn level.
    score_noise: HashMap<String, f64>,
    /// After this many successful completions, every further call fails,
    /// simulating a killed run for resume tests.
    fail_after: Option<u64>,
    completion_calls: AtomicU64,
    embedding_calls: AtomicU64,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            id: format!("mock:{seed}"),
            seed,
            scenario: HashMap::new(),
            score_noise: HashMap::new(),
            fail_after: None,
            completion_calls: AtomicU64::new(0),
            embedding_calls: AtomicU64::new(0),
        }
    }

    /// Adds scripted replies keyed by [`MockBackend::request_fingerprint`].
    pub fn with_scenario(mut self, scenario: HashMap<String, String>) -> Self {
        self.scenario.extend(scenario);
        self
    }

    /// Loads a scenario file: a JSON object mapping fingerprints to reply
    /// text.
    pub fn with_scenario_file(self, path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        let scenario: HashMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("scenario file {}: {e}", path.display())))?;
        Ok(self.with_scenario(scenario))
    }

    /// Makes scoring replies under `replicate_tag` noisy: each score is
    /// replaced with a different level with probability `fraction`.
    pub fn with_score_noise(mut self, replicate_tag: &str, fraction: f64) -> Self {
        self.score_noise.insert(replicate_tag.to_string(), fraction);
        self
    }

    /// Forces every completion after the first `n` to fail, as if the
    /// process had been killed mid-run.
    pub fn with_failure_after(mut self, n: u64) -> Self {
        self.fail_after = Some(n);
        self
    }

    /// Completions that actually reached this backend (cache hits bypass it).
    pub fn completion_calls(&self) -> u64 {
        self.completion_calls.load(Ordering::SeqCst)
    }

    /// Embedding batches that reached this backend.
    pub fn embedding_calls(&self) -> u64 {
        self.embedding_calls.load(Ordering::SeqCst)
    }

    /// Scenario key for a request: the hash of its canonical (model,
    /// temperature, messages) JSON. Replicate tags deliberately do not
    /// enter, so a script answers all repeat runs alike.
    pub fn request_fingerprint(request: &CompletionRequest) -> String {
        let material = serde_json::json!({
            "model_id": request.model_id,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        sha256_hex(material.to_string().as_bytes())
    }

    fn synthesize(&self, request: &CompletionRequest, replicate_tag: &str) -> String {
        let fingerprint = Self::request_fingerprint(request);
        let system = text_of_role(request, super::types::Role::System);
        let user = text_of_role(request, super::types::Role::User);
        if system.contains(SCORING_MARKER) {
            self.synth_scores(&system, &user, replicate_tag, &fingerprint)
        } else if system.contains(ANCHOR_MARKER) {
            synth_anchor_row(&system)
        } else if system.contains(DISCOVERY_MARKER) {
            self.synth_criteria(&system, &fingerprint)
        } else if user.contains(CONSOLIDATION_MARKER) {
            synth_tuple(&system)
        } else {
            // Unknown shape; reply something harmless but deterministic.
            format!("mock reply {}", &fingerprint[..12])
        }
    }

    fn synth_scores(
        &self,
        system: &str,
        user: &str,
        replicate_tag: &str,
        fingerprint: &str,
    ) -> String {
        let criteria: Vec<(u32, String)> = system.lines().filter_map(question_line).collect();
        let feedback = extract_feedback(user).unwrap_or_default();
        let cues = cue_pairs(&feedback);

        let mut scores: Vec<u8> = Vec::with_capacity(criteria.len());
        for (ordinal, text) in &criteria {
            let words: Vec<String> = text
                .split_whitespace()
                .map(normalize_word)
                .filter(|w| !w.is_empty())
                .collect();
            let planted = cues
                .iter()
                .find(|(_, stem)| words.iter().any(|w| w == stem))
                .map(|(intensity, _)| *intensity as u8 + 1);
            let score = planted.unwrap_or_else(|| {
                let mut rng =
                    rng_from(derive_seed(self.seed, &format!("score:{fingerprint}:{ordinal}")));
                rng.gen_range(1..=5)
            });
            scores.push(score);
        }

        if let Some(fraction) = self.score_noise.get(replicate_tag) {
            let mut rng = rng_from(derive_seed(
                self.seed,
                &format!("noise:{fingerprint}:{replicate_tag}"),
            ));
            for score in &mut scores {
                if rng.gen::<f64>() < *fraction {
                    let offset = rng.gen_range(1..=4u8);
                    *score = (*score - 1 + offset) % 5 + 1;
                }
            }
        }

        scores
            .iter()
            .map(u8::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn synth_criteria(&self, system: &str, fingerprint: &str) -> String {
        let mut stems: Vec<String> = Vec::new();
        if let Some(pos) = system.find(EXAMPLES_HEADING) {
            for line in system[pos + EXAMPLES_HEADING.len()..].lines() {
                for (_, stem) in cue_pairs(line) {
                    if !stems.contains(&stem) {
                        stems.push(stem);
                    }
                }
            }
        }
        if stems.is_empty() {
            let mut rng = rng_from(derive_seed(self.seed, &format!("criteria:{fingerprint}")));
            let n = rng.gen_range(6..=10);
            return (1..=n)
                .map(|i| {
                    format!(
                        "{i}|Aspect {i}|Synthetic criterion {i} proposed without lexical \
                         cues|absent|partly present|fully present"
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
        }
        stems
            .iter()
            .enumerate()
            .map(|(i, stem)| {
                format!(
                    "{}|{}|Measures whether the feedback conveys {stem} to the trainee.\
                     |No {stem} present|Some {stem} present|Strong {stem} throughout",
                    i + 1,
                    capitalize(stem)
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        request: &CompletionRequest,
        replicate_tag: &str,
    ) -> Result<CompletionResponse> {
        let calls = self.completion_calls.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(limit) = self.fail_after {
            if calls > limit {
                return Err(Error::Transport {
                    message: format!("mock backend stopped after {limit} completions"),
                    retryable: false,
                });
            }
        }
        let fingerprint = Self::request_fingerprint(request);
        let text = match self.scenario.get(&fingerprint) {
            Some(scripted) => scripted.clone(),
            None => self.synthesize(request, replicate_tag),
        };
        let prompt_chars: usize = request.messages.iter().map(|m| m.content.len()).sum();
        Ok(CompletionResponse {
            token_usage: Some(TokenUsage {
                prompt_tokens: (prompt_chars / 4) as u64,
                completion_tokens: (text.len() / 4) as u64,
            }),
            backend_id: self.id.clone(),
            text,
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        self.embedding_calls.fetch_add(1, Ordering::SeqCst);
        let base = derive_seed(self.seed, "embedding");
        texts
            .iter()
            .map(|text| {
                let mut rng = rng_from(derive_seed(base, text));
                let values: Vec<f64> = (0..MOCK_EMBEDDING_DIM)
                    .map(|_| standard_normal(&mut rng))
                    .collect();
                EmbeddingVector::normalized(values)
            })
            .collect()
    }
}

fn text_of_role(request: &CompletionRequest, role: super::types::Role) -> String {
    request
        .messages
        .iter()
        .filter(|m| m.role == role)
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Lowercases and strips punctuation from word edges.
fn normalize_word(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Finds `<intensity> <stem>` pairs in running text.
fn cue_pairs(text: &str) -> Vec<(usize, String)> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out = Vec::new();
    for window in words.windows(2) {
        let first = normalize_word(window[0]);
        if let Some(intensity) = INTENSITY_WORDS.iter().position(|&w| w == first) {
            let stem = normalize_word(window[1]);
            if !stem.is_empty() {
                out.push((intensity, stem));
            }
        }
    }
    out
}

/// Parses a `Qk. <rest>` line into (k, rest).
fn question_line(line: &str) -> Option<(u32, String)> {
    let rest = line.trim().strip_prefix('Q')?;
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    if digits.is_empty() {
        return None;
    }
    let after = &rest[digits.len()..];
    let body = after.strip_prefix(". ")?;
    Some((digits.parse().ok()?, body.to_string()))
}

/// Pulls the quoted feedback text back out of a scoring user message.
fn extract_feedback(user: &str) -> Option<String> {
    let start = user.find("FEEDBACK: \"")? + "FEEDBACK: ".len();
    let chars: Vec<char> = user[start..].chars().collect();
    read_quoted(&chars, 0).map(|(text, _)| text)
}

/// First `Name: "...", Definition: "..."` pair in the text.
fn first_member(system: &str) -> Option<(String, String)> {
    for line in system.lines() {
        let Some(name_at) = line.find("Name: \"") else {
            continue;
        };
        let chars: Vec<char> = line[name_at + "Name: ".len()..].chars().collect();
        let Some((name, after_name)) = read_quoted(&chars, 0) else {
            continue;
        };
        let rest: String = chars[after_name..].iter().collect();
        let Some(def_at) = rest.find("Definition: \"") else {
            continue;
        };
        let chars: Vec<char> = rest[def_at + "Definition: ".len()..].chars().collect();
        if let Some((definition, _)) = read_quoted(&chars, 0) {
            return Some((name, definition));
        }
    }
    None
}

/// Keeps synthesized pipe rows well formed whatever the inputs held.
fn pipe_safe(text: &str) -> String {
    text.replace(['|', '\n'], " ")
}

/// Echoes the first member back as the consolidated tuple, which makes
/// consolidation idempotent under the mock.
fn synth_tuple(system: &str) -> String {
    let (name, definition) = first_member(system)
        .unwrap_or_else(|| ("Unnamed".to_string(), "No definition given".to_string()));
    format!(
        "(1, \"{}\", \"{}\")",
        super::prompts::escape_quoted(&name),
        super::prompts::escape_quoted(&definition)
    )
}

fn synth_anchor_row(system: &str) -> String {
    let (name, definition) = first_member(system)
        .unwrap_or_else(|| ("Unnamed".to_string(), "No definition given".to_string()));
    let lower = name.to_lowercase();
    format!(
        "1|{}|{}|Feedback lacks {}|Feedback partly shows {}|Feedback strongly shows {}",
        pipe_safe(&name),
        pipe_safe(&definition),
        pipe_safe(&lower),
        pipe_safe(&lower),
        pipe_safe(&lower)
    )
}
