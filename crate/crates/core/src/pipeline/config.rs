//! Declarative run configuration.
//!
//! One TOML file drives every command. Each section has complete defaults,
//! so an empty file (or none at all) gives a working mock-backend setup;
//! the API key for a live backend comes from the environment, never from
//! the file. Validation runs before any backend call and rejects
//! out-of-range values with the offending field named.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consolidation::{ClusterFeatureSpace, ConsolidationConfig, MissingPolicy};
use crate::discovery::DiscoveryConfig;
use crate::error::{Error, Result};
use crate::judge::JudgeConfig;
use crate::llm::RetryPolicy;
use crate::stats::{ClassWeighting, ForestHyperParams};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backend: BackendSection,
    pub seeds: SeedsSection,
    pub discovery: DiscoverySection,
    pub consolidation: ConsolidationSection,
    pub scoring: ScoringSection,
    pub thresholds: ThresholdsSection,
    pub cv: CvSection,
    pub run: RunSection,
    pub retry: RetrySection,
}

/// Which backend serves completions and embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub model_id: String,
    /// Seed for the deterministic mock backend.
    pub mock_seed: u64,
    /// Optional scripted replies for the mock backend, keyed by request
    /// fingerprint.
    pub scenario_file: Option<PathBuf>,
    /// Mock score-noise fractions by replicate tag, for agreement drills.
    pub mock_score_noise: BTreeMap<String, f64>,
    /// Live-backend base URL; `RUBRIC_API_BASE` overrides, the key itself
    /// only ever comes from `RUBRIC_API_KEY`.
    pub api_base: Option<String>,
    /// Embedding model id; `RUBRIC_EMBEDDING_MODEL` overrides.
    pub embedding_model: Option<String>,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            model_id: "mock-judge".to_string(),
            mock_seed: 7,
            scenario_file: None,
            mock_score_noise: BTreeMap::new(),
            api_base: None,
            embedding_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedsSection {
    pub discovery: u64,
    pub consolidation: u64,
    pub cv: u64,
    pub bootstrap: u64,
}

impl Default for SeedsSection {
    fn default() -> Self {
        Self { discovery: 101, consolidation: 211, cv: 307, bootstrap: 401 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoverySection {
    pub n_agents: usize,
    pub subset_size: usize,
    pub temperature: f64,
    pub max_criteria_per_agent: usize,
}

impl Default for DiscoverySection {
    fn default() -> Self {
        Self { n_agents: 5, subset_size: 50, temperature: 1.0, max_criteria_per_agent: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsolidationSection {
    pub temperature: f64,
    /// Smallest cluster count tried; omitted means 2.
    pub k_min: Option<usize>,
    /// Largest cluster count tried; omitted means min(10, candidates − 1).
    pub k_max: Option<usize>,
    pub feature_space: ClusterFeatureSpace,
    pub missing_policy: MissingPolicy,
}

impl Default for ConsolidationSection {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            k_min: None,
            k_max: None,
            feature_space: ClusterFeatureSpace::default(),
            missing_policy: MissingPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringSection {
    /// Judge calls are specified at temperature 0; anything else is a
    /// config error, the field exists so the value is visible and diffable.
    pub temperature: f64,
    pub max_reprompts: u32,
    pub failure_cap: f64,
}

impl Default for ScoringSection {
    fn default() -> Self {
        Self { temperature: 0.0, max_reprompts: 1, failure_cap: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdsSection {
    /// Mean cross-seed cosine distance below this counts as stable wording.
    pub drift: f64,
    /// Minimum cosine similarity for a brainstormed term to count as kept.
    pub coverage: f64,
}

impl Default for ThresholdsSection {
    fn default() -> Self {
        Self { drift: 0.05, coverage: 0.80 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub outer_k: usize,
    pub inner_k: usize,
    /// Hyperparameter grid for the random forest; the logistic model has
    /// no grid.
    pub forest_grid: Vec<ForestHyperParams>,
    /// "none" or "rare_event" (King-Zeng style prior correction).
    pub class_weighting: String,
    /// Resamples behind every bootstrap confidence interval.
    pub bootstrap_resamples: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        Self {
            outer_k: 5,
            inner_k: 5,
            forest_grid: vec![
                ForestHyperParams {
                    n_estimators: 100,
                    max_features: 2,
                    max_depth: 8,
                    min_samples_leaf: 5,
                },
                ForestHyperParams {
                    n_estimators: 100,
                    max_features: 3,
                    max_depth: 12,
                    min_samples_leaf: 2,
                },
            ],
            class_weighting: "rare_event".to_string(),
            bootstrap_resamples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub parallelism: usize,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            parallelism: 8,
            cache_dir: PathBuf::from("cache"),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrySection {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
    pub jitter: f64,
}

impl Default for RetrySection {
    fn default() -> Self {
        let policy = RetryPolicy::default();
        Self {
            max_attempts: policy.max_attempts,
            base_delay_ms: policy.base_delay_ms,
            factor: policy.factor,
            jitter: policy.jitter,
        }
    }
}

impl PipelineConfig {
    /// Parses and validates a TOML config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        let config: Self = toml::from_str(&text)
            .map_err(|e| Error::config(format!("config file {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Rejects out-of-range values before any backend call is made.
    pub fn validate(&self) -> Result<()> {
        fn bounded(name: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
            if !(value.is_finite() && (lo..=hi).contains(&value)) {
                return Err(Error::config(format!(
                    "{name} must be in [{lo}, {hi}], got {value}"
                )));
            }
            Ok(())
        }
        fn positive(name: &str, value: usize) -> Result<()> {
            if value == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
            Ok(())
        }

        if self.backend.model_id.is_empty() {
            return Err(Error::config("backend.model_id must not be empty"));
        }
        for (tag, fraction) in &self.backend.mock_score_noise {
            bounded(&format!("backend.mock_score_noise.{tag}"), *fraction, 0.0, 1.0)?;
        }

        positive("discovery.n_agents", self.discovery.n_agents)?;
        positive("discovery.subset_size", self.discovery.subset_size)?;
        positive("discovery.max_criteria_per_agent", self.discovery.max_criteria_per_agent)?;
        bounded("discovery.temperature", self.discovery.temperature, 0.0, 2.0)?;

        bounded("consolidation.temperature", self.consolidation.temperature, 0.0, 2.0)?;
        let (k_min, k_max) = (self.consolidation.k_min, self.consolidation.k_max);
        if let Some(k) = k_min {
            if k < 2 {
                return Err(Error::config("consolidation.k_min must be at least 2"));
            }
        }
        if let (Some(lo), Some(hi)) = (k_min, k_max) {
            if lo > hi {
                return Err(Error::config(format!(
                    "consolidation.k_min ({lo}) exceeds k_max ({hi})"
                )));
            }
        }

        bounded("scoring.temperature", self.scoring.temperature, 0.0, 2.0)?;
        if self.scoring.temperature != 0.0 {
            return Err(Error::config(
                "scoring.temperature must be 0.0: the judge protocol is deterministic",
            ));
        }
        bounded("scoring.failure_cap", self.scoring.failure_cap, 0.0, 1.0)?;
        if self.scoring.max_reprompts > 10 {
            return Err(Error::config("scoring.max_reprompts above 10 is a misconfiguration"));
        }

        if !(self.thresholds.drift.is_finite() && self.thresholds.drift >= 0.0) {
            return Err(Error::config("thresholds.drift must be a nonnegative real"));
        }
        bounded("thresholds.coverage", self.thresholds.coverage, -1.0, 1.0)?;

        if self.cv.outer_k < 2 || self.cv.inner_k < 2 {
            return Err(Error::config("cv.outer_k and cv.inner_k must be at least 2"));
        }
        if self.cv.forest_grid.is_empty() {
            return Err(Error::config("cv.forest_grid must hold at least one cell"));
        }
        for (i, cell) in self.cv.forest_grid.iter().enumerate() {
            if cell.n_estimators == 0
                || cell.max_features == 0
                || cell.max_depth == 0
                || cell.min_samples_leaf == 0
            {
                return Err(Error::config(format!(
                    "cv.forest_grid[{i}] has a zero hyperparameter"
                )));
            }
        }
        self.class_weighting()?;
        if self.cv.bootstrap_resamples < 2 {
            return Err(Error::config("cv.bootstrap_resamples must be at least 2"));
        }

        positive("run.parallelism", self.run.parallelism)?;

        if self.retry.max_attempts == 0 {
            return Err(Error::config("retry.max_attempts must be positive"));
        }
        if !(self.retry.factor.is_finite() && self.retry.factor >= 1.0) {
            return Err(Error::config("retry.factor must be at least 1"));
        }
        bounded("retry.jitter", self.retry.jitter, 0.0, 0.99)?;
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.retry.max_attempts,
            base_delay_ms: self.retry.base_delay_ms,
            factor: self.retry.factor,
            jitter: self.retry.jitter,
        }
    }

    pub fn discovery_config(&self) -> DiscoveryConfig {
        let mut config = DiscoveryConfig::new(&self.backend.model_id);
        config.n_agents = self.discovery.n_agents;
        config.subset_size = self.discovery.subset_size;
        config.temperature = self.discovery.temperature;
        config.max_criteria_per_agent = self.discovery.max_criteria_per_agent;
        config.parallelism = self.run.parallelism;
        config.retry = self.retry_policy();
        config
    }

    pub fn judge_config(&self) -> JudgeConfig {
        let mut config = JudgeConfig::new(&self.backend.model_id);
        config.max_reprompts = self.scoring.max_reprompts;
        config.failure_cap = self.scoring.failure_cap;
        config.parallelism = self.run.parallelism;
        config.retry = self.retry_policy();
        config
    }

    pub fn consolidation_config(&self) -> ConsolidationConfig {
        let mut config = ConsolidationConfig::new(&self.backend.model_id);
        config.temperature = self.consolidation.temperature;
        config.parallelism = self.run.parallelism;
        config.retry = self.retry_policy();
        config
    }

    /// Cluster-count range for silhouette selection, None for the default.
    pub fn k_range(&self) -> Option<RangeInclusive<usize>> {
        match (self.consolidation.k_min, self.consolidation.k_max) {
            (None, None) => None,
            (lo, hi) => Some(lo.unwrap_or(2)..=hi.unwrap_or(10)),
        }
    }

    pub fn class_weighting(&self) -> Result<ClassWeighting> {
        match self.cv.class_weighting.as_str() {
            "none" => Ok(ClassWeighting::None),
            "rare_event" => Ok(ClassWeighting::RareEvent),
            other => Err(Error::config(format!(
                "cv.class_weighting must be \"none\" or \"rare_event\", got {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_yields_the_default_config() {
        let parsed: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(parsed, PipelineConfig::default());
        assert!(parsed.validate().is_ok());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let parsed: PipelineConfig = toml::from_str(
            "[discovery]\nn_agents = 3\n\n[run]\nparallelism = 2\n",
        )
        .unwrap();
        assert_eq!(parsed.discovery.n_agents, 3);
        assert_eq!(parsed.discovery.subset_size, 50);
        assert_eq!(parsed.run.parallelism, 2);
        assert_eq!(parsed.backend.kind, BackendKind::Mock);
    }

    #[test]
    fn out_of_range_values_are_rejected_with_field_names() {
        let cases = [
            ("[discovery]\nn_agents = 0\n", "n_agents"),
            ("[discovery]\ntemperature = 2.5\n", "temperature"),
            ("[scoring]\ntemperature = 0.7\n", "scoring.temperature"),
            ("[scoring]\nfailure_cap = 1.5\n", "failure_cap"),
            ("[cv]\nouter_k = 1\n", "outer_k"),
            ("[cv]\nforest_grid = []\n", "forest_grid"),
            ("[cv]\nclass_weighting = \"balanced\"\n", "class_weighting"),
            ("[retry]\nfactor = 0.5\n", "factor"),
            ("[consolidation]\nk_min = 5\nk_max = 3\n", "k_min"),
        ];
        for (toml_text, needle) in cases {
            let parsed: PipelineConfig = toml::from_str(toml_text).unwrap();
            let err = parsed.validate().unwrap_err().to_string();
            assert!(err.contains(needle), "{toml_text:?} gave {err:?}");
        }
    }

    #[test]
    fn unknown_keys_fail_at_parse_time() {
        let err = toml::from_str::<PipelineConfig>("[discovery]\nn_agent = 3\n").unwrap_err();
        assert!(err.to_string().contains("n_agent"), "{err}");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = PipelineConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn forest_grid_parses_from_array_of_tables() {
        let parsed: PipelineConfig = toml::from_str(
            "[[cv.forest_grid]]\nn_estimators = 50\nmax_features = 2\nmax_depth = 4\nmin_samples_leaf = 3\n",
        )
        .unwrap();
        assert_eq!(parsed.cv.forest_grid.len(), 1);
        assert_eq!(parsed.cv.forest_grid[0].n_estimators, 50);
        assert!(parsed.validate().is_ok());
    }

    #[test]
    fn derived_module_configs_carry_the_shared_settings() {
        let mut config = PipelineConfig::default();
        config.run.parallelism = 3;
        config.retry.max_attempts = 2;
        assert_eq!(config.discovery_config().parallelism, 3);
        assert_eq!(config.judge_config().retry.max_attempts, 2);
        assert_eq!(config.consolidation_config().temperature, 0.0);
        assert!(config.k_range().is_none());
        config.consolidation.k_max = Some(6);
        assert_eq!(config.k_range(), Some(2..=6));
    }
}
