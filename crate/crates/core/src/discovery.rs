//! Criteria brainstorming: independent high-temperature agents, each shown
//! its own corpus subset, propose candidate scoring criteria.
//!
//! Agents never see each other's output; they are parallel samples from the
//! same prompt distribution over different example subsets. Each agent's
//! reply is parsed strictly, malformed rows are recorded rather than
//! silently dropped, and an agent that yields nothing usable fails the run
//! by name while the other agents' results are saved for inspection.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{sample_discovery_subsets, Corpus};
use crate::error::{Error, Result};
use crate::llm::{
    complete, parse_criteria_rows, render_discovery_prompt, Backend, CacheKey, CompletionRequest,
    ResponseCache, RetryPolicy, SkippedRow,
};
use crate::rubric::CandidateCriterion;
use crate::util::{atomic_write, parallel_map};

pub struct DiscoveryConfig {
    pub model_id: String,
    pub n_agents: usize,
    pub subset_size: usize,
    pub temperature: f64,
    /// Criteria kept per agent; rows beyond this are reported as skipped.
    pub max_criteria_per_agent: usize,
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl DiscoveryConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            n_agents: 5,
            subset_size: 50,
            temperature: 1.0,
            max_criteria_per_agent: 12,
            parallelism: 8,
            retry: RetryPolicy::default(),
        }
    }
}

/// One agent's brainstorming result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentRun {
    /// 1-based, matching the subset sampler's agent numbering.
    pub agent_id: usize,
    /// Instance ids shown to this agent, in prompt order.
    pub subset_ids: Vec<String>,
    /// Cache key digest of the completion call, for offline replay.
    pub cache_key: String,
    pub criteria: Vec<CandidateCriterion>,
    /// Reply rows that were dropped (malformed or beyond the cap).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedRow>,
}

/// Runs `n_agents` independent brainstorming completions and parses each
/// into candidate criteria.
///
/// Subsets come from [`sample_discovery_subsets`], so a fixed seed fixes
/// the subsets, the prompts, and (through the cache) the replies. If any
/// agent produces zero usable criteria the run fails naming that agent;
/// when `partial_output` is given, the successful agents' runs are written
/// there first as JSON.
pub fn run_discovery(
    backend: &dyn Backend,
    cache: &ResponseCache,
    config: &DiscoveryConfig,
    corpus: &Corpus,
    outcome_definitions: &[(String, String)],
    seed: u64,
    partial_output: Option<&Path>,
) -> Result<Vec<AgentRun>> {
    let subsets = sample_discovery_subsets(corpus, config.n_agents, config.subset_size, seed)?;

    let results = parallel_map(&subsets, config.parallelism, |agent_index, subset_ids| {
        run_agent(
            backend,
            cache,
            config,
            corpus,
            outcome_definitions,
            agent_index + 1,
            subset_ids,
        )
    });

    let mut runs = Vec::with_capacity(results.len());
    let mut empty_agents = Vec::new();
    for result in results {
        match result {
            Ok(run) if run.criteria.is_empty() => empty_agents.push(run.agent_id),
            Ok(run) => runs.push(run),
            Err(e) => return Err(e),
        }
    }
    if !empty_agents.is_empty() {
        let mut message = format!(
            "agent(s) {} returned no usable criteria",
            empty_agents
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        );
        if let Some(path) = partial_output {
            let json = serde_json::to_vec_pretty(&runs)
                .map_err(|e| Error::invalid(format!("serializing partial runs: {e}")))?;
            atomic_write(path, &json)?;
            message.push_str(&format!(
                "; {} successful agent run(s) saved to {}",
                runs.len(),
                path.display()
            ));
        }
        return Err(Error::Scoring {
            instance_id: format!("agent {}", empty_agents[0]),
            message,
        });
    }
    Ok(runs)
}

fn run_agent(
    backend: &dyn Backend,
    cache: &ResponseCache,
    config: &DiscoveryConfig,
    corpus: &Corpus,
    outcome_definitions: &[(String, String)],
    agent_id: usize,
    subset_ids: &[String],
) -> Result<AgentRun> {
    let examples: Vec<String> = subset_ids
        .iter()
        .map(|id| {
            corpus
                .instance(id)
                .map(|inst| inst.text.clone())
                .ok_or_else(|| Error::invalid(format!("sampled id {id} missing from corpus")))
        })
        .collect::<Result<_>>()?;
    let messages = render_discovery_prompt(outcome_definitions, &examples)?;
    let request = CompletionRequest::new(&config.model_id, config.temperature, messages.to_vec())?;
    // One tag per agent: even two agents whose subsets render to identical
    // prompts stay separate completions, the way independent samples should.
    let replicate_tag = format!("agent{agent_id}");
    let cache_key = CacheKey::for_request(backend.id(), &request, &replicate_tag);
    let response = complete(backend, &request, &replicate_tag, cache, &config.retry)?;

    let parsed = match parse_criteria_rows(&response.text) {
        Ok(parsed) => parsed,
        Err(Error::Parse { what, detail, raw }) => {
            // Turn "nothing parseable" into an empty run; the caller decides
            // whether that fails the whole discovery.
            return Ok(AgentRun {
                agent_id,
                subset_ids: subset_ids.to_vec(),
                cache_key: cache_key.digest,
                criteria: Vec::new(),
                skipped: vec![SkippedRow {
                    line: 0,
                    content: raw,
                    reason: format!("{what}: {detail}"),
                }],
            });
        }
        Err(other) => return Err(other),
    };

    let mut criteria = Vec::new();
    let mut skipped = parsed.skipped;
    for row in parsed.rows {
        if criteria.len() >= config.max_criteria_per_agent {
            skipped.push(SkippedRow {
                line: 0,
                content: row.name.clone(),
                reason: format!(
                    "beyond the {}-criterion cap per agent",
                    config.max_criteria_per_agent
                ),
            });
            continue;
        }
        let candidate = CandidateCriterion {
            agent_id,
            ordinal: row.ordinal,
            name: row.name,
            definition: row.definition,
            anchors: BTreeMap::from([(1, row.anchor1), (3, row.anchor3), (5, row.anchor5)]),
        };
        match candidate.validate() {
            Ok(()) => criteria.push(candidate),
            Err(e) => skipped.push(SkippedRow {
                line: 0,
                content: candidate.name.clone(),
                reason: e.to_string(),
            }),
        }
    }

    Ok(AgentRun {
        agent_id,
        subset_ids: subset_ids.to_vec(),
        cache_key: cache_key.digest,
        criteria,
        skipped,
    })
}

/// Writes agent runs as pretty JSON.
pub fn save_agent_runs(runs: &[AgentRun], path: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(runs)
        .map_err(|e| Error::invalid(format!("serializing agent runs: {e}")))?;
    atomic_write(path, &json)
}

/// Reads agent runs saved by [`save_agent_runs`].
pub fn load_agent_runs(path: &Path) -> Result<Vec<AgentRun>> {
    let text = crate::util::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("agent runs file {}: {e}", path.display())))
}
