//! File-to-file orchestration of the whole workflow.
//!
//! Each command reads artifacts, runs one stage, and writes artifacts plus
//! a [`RunManifest`]; commands compose only through those files, so any
//! stage can be rerun, resumed from cache, or replayed offline. The CLI in
//! [`crate::cli`] is a thin argument layer over these functions.

mod commands;
mod config;
mod manifest;

pub use commands::{
    cmd_agreement, cmd_associate, cmd_consolidate, cmd_discover, cmd_evaluate, cmd_score,
    cmd_stability, cmd_synth, AgreementArtifacts, AssociateArtifacts, ConsolidateArtifacts,
    DiscoverArtifacts, EvaluateArtifacts, ScoreArtifacts, StabilityArtifacts, SynthArtifacts,
};
pub use config::{
    BackendKind, BackendSection, ConsolidationSection, CvSection, DiscoverySection,
    PipelineConfig, RetrySection, RunSection, ScoringSection, SeedsSection, ThresholdsSection,
};
pub use manifest::{file_digest, FileStamp, RunManifest};

use crate::error::{Error, Result};
use crate::llm::{
    Backend, MockBackend, OpenAiBackend, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE,
    DEFAULT_EMBEDDING_MODEL, DEFAULT_TIMEOUT, EMBEDDING_MODEL_ENV,
};

/// Builds the configured backend. The live backend takes its key from the
/// environment only; base URL and embedding model follow env, then config,
/// then the library defaults.
pub(crate) fn build_backend(config: &PipelineConfig) -> Result<Box<dyn Backend>> {
    match config.backend.kind {
        BackendKind::Mock => {
            let mut backend = MockBackend::new(config.backend.mock_seed);
            if let Some(path) = &config.backend.scenario_file {
                backend = backend.with_scenario_file(path)?;
            }
            for (tag, fraction) in &config.backend.mock_score_noise {
                backend = backend.with_score_noise(tag, *fraction);
            }
            Ok(Box::new(backend))
        }
        BackendKind::Openai => {
            let api_key = std::env::var(API_KEY_ENV).map_err(|_| {
                Error::config(format!(
                    "backend.kind = \"openai\" needs the {API_KEY_ENV} environment variable"
                ))
            })?;
            let base_url = std::env::var(API_BASE_ENV)
                .ok()
                .or_else(|| config.backend.api_base.clone())
                .unwrap_or_else(|| DEFAULT_API_BASE.to_string());
            let embedding_model = std::env::var(EMBEDDING_MODEL_ENV)
                .ok()
                .or_else(|| config.backend.embedding_model.clone())
                .unwrap_or_else(|| DEFAULT_EMBEDDING_MODEL.to_string());
            Ok(Box::new(OpenAiBackend::new(
                &base_url,
                &api_key,
                &embedding_model,
                DEFAULT_TIMEOUT,
            )?))
        }
    }
}
