//! Applies a rubric to a corpus, one temperature-0 completion per instance.
//!
//! Every instance is scored in its own request so no instance can leak into
//! another's context. Unparseable replies get one re-ask with a format
//! reminder; instances that still fail are masked in the output matrix and
//! reported, and the run only errors when the failed fraction exceeds a cap.
//! Repeat runs under distinct replicate tags feed the AI consistency check.

use crate::corpus::{Corpus, FeedbackInstance};
use crate::error::{Error, Result};
use crate::llm::{
    complete, parse_score_list, render_scoring_prompt, Backend, ChatMessage, CompletionRequest,
    ResponseCache, RetryPolicy,
};
use crate::rubric::Rubric;
use crate::scores::ScoreMatrix;
use crate::stats::kappa::{bootstrap_kappa_ci, KappaEstimate};
use crate::util::{derive_seed, parallel_map};

pub struct JudgeConfig {
    pub model_id: String,
    /// Re-asks allowed after an unparseable reply before the instance fails.
    pub max_reprompts: u32,
    /// Fraction of instances allowed to fail before the whole run errors.
    pub failure_cap: f64,
    /// Maximum in-flight requests.
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl JudgeConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            max_reprompts: 1,
            failure_cap: 0.02,
            parallelism: 8,
            retry: RetryPolicy::default(),
        }
    }
}

/// One instance that could not be scored; its matrix row stays masked.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ScoreFailure {
    pub instance_id: String,
    pub message: String,
}

fn reprompt_reminder(raw: &str, expected: usize) -> String {
    let snippet: String = raw.chars().take(500).collect();
    format!(
        "Your previous reply was:\n{snippet}\nIt could not be parsed. Reply with exactly \
         {expected} comma-separated integers between 1 and 5 and nothing else."
    )
}

/// Scores one feedback instance against every rubric dimension.
///
/// Renders the scoring prompt, calls the backend at temperature 0.0 through
/// the cache, and parses the reply as an ordered score list. An unparseable
/// reply triggers up to `max_reprompts` re-asks, each appending a format
/// reminder (a distinct request, so it gets its own cache entry).
pub fn score_instance(
    backend: &dyn Backend,
    cache: &ResponseCache,
    config: &JudgeConfig,
    rubric: &Rubric,
    instance: &FeedbackInstance,
    replicate_tag: &str,
) -> Result<Vec<u8>> {
    let messages = render_scoring_prompt(rubric, &instance.text)?;
    let mut request = CompletionRequest::new(&config.model_id, 0.0, messages.to_vec())?;
    for attempt in 0..=config.max_reprompts {
        let response = complete(backend, &request, replicate_tag, cache, &config.retry)?;
        let failure = match parse_score_list(&response.text, rubric.len()) {
            Ok(scores) => return Ok(scores),
            Err(failure) => failure,
        };
        if attempt == config.max_reprompts {
            let snippet: String = response.text.chars().take(200).collect();
            return Err(Error::Scoring {
                instance_id: instance.id.clone(),
                message: format!(
                    "unparseable after {} re-prompt(s): {failure}; last reply: {snippet:?}",
                    config.max_reprompts
                ),
            });
        }
        let mut messages = request.messages.clone();
        messages.push(ChatMessage::user(reprompt_reminder(
            &response.text,
            rubric.len(),
        )));
        request = CompletionRequest::new(&config.model_id, 0.0, messages)?;
    }
    unreachable!("loop returns or errors on the final attempt");
}

/// Scores the whole corpus with bounded parallelism.
///
/// The returned matrix has one row per instance in corpus order; rows whose
/// instance failed remain masked and appear in the failure list. Exceeding
/// the configured failure cap turns the partial result into an error.
pub fn score_corpus(
    backend: &dyn Backend,
    cache: &ResponseCache,
    config: &JudgeConfig,
    rubric: &Rubric,
    corpus: &Corpus,
    replicate_tag: &str,
) -> Result<(ScoreMatrix, Vec<ScoreFailure>)> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot score an empty corpus"));
    }
    let results = parallel_map(corpus.instances(), config.parallelism, |_, instance| {
        score_instance(backend, cache, config, rubric, instance, replicate_tag)
            .map_err(|e| (instance.id.clone(), e))
    });

    let mut matrix = ScoreMatrix::new(corpus.ids(), corpus.case_ids(), rubric.dimension_names())?;
    let mut failures = Vec::new();
    for (row, result) in results.into_iter().enumerate() {
        match result {
            Ok(scores) => {
                for (col, &value) in scores.iter().enumerate() {
                    matrix.set(row, col, value)?;
                }
            }
            Err((instance_id, err)) => failures.push(ScoreFailure {
                instance_id,
                message: err.to_string(),
            }),
        }
    }

    let fraction = failures.len() as f64 / corpus.len() as f64;
    if fraction > config.failure_cap {
        return Err(Error::Scoring {
            instance_id: failures[0].instance_id.clone(),
            message: format!(
                "{} of {} instances failed ({:.1}%), above the {:.1}% cap; first failure: {}",
                failures.len(),
                corpus.len(),
                100.0 * fraction,
                100.0 * config.failure_cap,
                failures[0].message
            ),
        });
    }
    Ok((matrix, failures))
}

/// Ratings for one dimension from two repeat scoring runs.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DimensionAgreement {
    pub dimension: String,
    pub estimate: KappaEstimate,
}

/// Extracts the jointly unmasked values of column `col` from two aligned
/// score matrices (same instances, same order).
pub fn paired_scores(a: &ScoreMatrix, b: &ScoreMatrix, col: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if a.instance_ids() != b.instance_ids() {
        return Err(Error::invalid(
            "score matrices cover different instances and cannot be paired",
        ));
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    for row in 0..a.n_instances() {
        if let (Some(x), Some(y)) = (a.get(row, col), b.get(row, col)) {
            left.push(x);
            right.push(y);
        }
    }
    Ok((left, right))
}

/// Scores the corpus twice (replicate tags `run1` and `run2`) and reports
/// quadratically weighted kappa with a bootstrap CI per dimension, computed
/// over instances unmasked in both runs.
pub fn repeat_agreement(
    backend: &dyn Backend,
    cache: &ResponseCache,
    config: &JudgeConfig,
    rubric: &Rubric,
    corpus: &Corpus,
    bootstrap_resamples: usize,
    seed: u64,
) -> Result<Vec<DimensionAgreement>> {
    let (run1, _) = score_corpus(backend, cache, config, rubric, corpus, "run1")?;
    let (run2, _) = score_corpus(backend, cache, config, rubric, corpus, "run2")?;
    let mut out = Vec::with_capacity(rubric.len());
    for (col, dimension) in rubric.dimension_names().iter().enumerate() {
        let (r1, r2) = paired_scores(&run1, &run2, col)?;
        let estimate = bootstrap_kappa_ci(
            &r1,
            &r2,
            5,
            bootstrap_resamples,
            derive_seed(seed, &format!("aiai-kappa-{dimension}")),
        )?;
        out.push(DimensionAgreement {
            dimension: dimension.clone(),
            estimate,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, HashMap};

    use super::*;
    use crate::corpus::FeedbackInstance;
    use crate::llm::MockBackend;
    use crate::rubric::{Anchor, RubricDimension};

    fn rubric(names: &[&str]) -> Rubric {
        let dimensions = names
            .iter()
            .map(|name| RubricDimension {
                name: name.to_string(),
                definition: format!("Measures {name} in the feedback."),
                anchors: BTreeMap::from([
                    (1, Anchor { description: "low".into(), examples: vec![] }),
                    (3, Anchor { description: "mid".into(), examples: vec![] }),
                    (5, Anchor { description: "high".into(), examples: vec![] }),
                ]),
                source_cluster: Vec::new(),
            })
            .collect();
        Rubric::new(dimensions, 0, "test").unwrap()
    }

    fn instance(id: &str, text: &str) -> FeedbackInstance {
        FeedbackInstance {
            id: id.to_string(),
            case_id: "case1".to_string(),
            text: text.to_string(),
            outcomes: None,
            external_features: None,
        }
    }

    fn corpus_of(texts: &[&str]) -> Corpus {
        let instances = texts
            .iter()
            .enumerate()
            .map(|(i, text)| instance(&format!("i{i:03}"), text))
            .collect();
        Corpus::new(instances, "test").unwrap()
    }

    fn config() -> JudgeConfig {
        let mut config = JudgeConfig::new("mock-model");
        config.retry = RetryPolicy::none();
        config
    }

    /// Fingerprint of the request score_instance sends first for `inst`.
    fn first_request(config: &JudgeConfig, rubric: &Rubric, inst: &FeedbackInstance)
        -> CompletionRequest {
        let messages = render_scoring_prompt(rubric, &inst.text).unwrap();
        CompletionRequest::new(&config.model_id, 0.0, messages.to_vec()).unwrap()
    }

    /// Scripts both the first ask and the re-ask for `inst` to garbage.
    fn script_failure(
        map: &mut HashMap<String, String>,
        config: &JudgeConfig,
        rubric: &Rubric,
        inst: &FeedbackInstance,
    ) {
        let req1 = first_request(config, rubric, inst);
        map.insert(
            MockBackend::request_fingerprint(&req1),
            "no scores here".to_string(),
        );
        let mut messages = req1.messages.clone();
        messages.push(ChatMessage::user(reprompt_reminder(
            "no scores here",
            rubric.len(),
        )));
        let req2 = CompletionRequest::new(&config.model_id, 0.0, messages).unwrap();
        map.insert(
            MockBackend::request_fingerprint(&req2),
            "still not a list".to_string(),
        );
    }

    #[test]
    fn scripted_reply_passes_straight_through() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let config = config();
        let rubric = rubric(&["a", "b", "c", "d", "e", "f"]);
        let inst = instance("s1", "tighten the knot");
        let fingerprint = MockBackend::request_fingerprint(&first_request(&config, &rubric, &inst));
        let backend = MockBackend::new(1)
            .with_scenario(HashMap::from([(fingerprint, "4, 2, 5, 3, 1, 4".to_string())]));
        let scores =
            score_instance(&backend, &cache, &config, &rubric, &inst, "run1").unwrap();
        assert_eq!(scores, vec![4, 2, 5, 3, 1, 4]);
        assert_eq!(backend.completion_calls(), 1);
    }

    #[test]
    fn one_reprompt_recovers_from_a_bad_reply() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let config = config();
        let rubric = rubric(&["a", "b"]);
        let inst = instance("s1", "watch the tension");

        let req1 = first_request(&config, &rubric, &inst);
        let mut messages = req1.messages.clone();
        messages.push(ChatMessage::user(reprompt_reminder("four and two", 2)));
        let req2 = CompletionRequest::new(&config.model_id, 0.0, messages).unwrap();
        let backend = MockBackend::new(1).with_scenario(HashMap::from([
            (MockBackend::request_fingerprint(&req1), "four and two".to_string()),
            (MockBackend::request_fingerprint(&req2), "4, 2".to_string()),
        ]));

        let scores =
            score_instance(&backend, &cache, &config, &rubric, &inst, "run1").unwrap();
        assert_eq!(scores, vec![4, 2]);
        assert_eq!(backend.completion_calls(), 2);
    }

    #[test]
    fn persistent_garbage_becomes_a_scoring_error_naming_the_instance() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let config = config();
        let rubric = rubric(&["a", "b"]);
        let inst = instance("s42", "some feedback");
        let mut script = HashMap::new();
        script_failure(&mut script, &config, &rubric, &inst);
        let backend = MockBackend::new(1).with_scenario(script);

        let err =
            score_instance(&backend, &cache, &config, &rubric, &inst, "run1").unwrap_err();
        match err {
            Error::Scoring { instance_id, message } => {
                assert_eq!(instance_id, "s42");
                assert!(message.contains("still not a list"), "{message}");
            }
            other => panic!("expected scoring error, got {other}"),
        }
        assert_eq!(backend.completion_calls(), 2);
    }

    #[test]
    fn failed_instances_are_masked_and_reported_below_the_cap() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let mut config = config();
        config.failure_cap = 0.02;
        let rubric = rubric(&["a", "b"]);
        let texts: Vec<String> = (0..100).map(|i| format!("feedback number {i}")).collect();
        let corpus = corpus_of(&texts.iter().map(String::as_str).collect::<Vec<_>>());

        let mut script = HashMap::new();
        script_failure(&mut script, &config, &rubric, &corpus.instances()[7]);
        let backend = MockBackend::new(1).with_scenario(script);

        let (matrix, failures) =
            score_corpus(&backend, &cache, &config, &rubric, &corpus, "run1").unwrap();
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].instance_id, "i007");
        assert!(matrix.is_masked(7, 0) && matrix.is_masked(7, 1));
        assert_eq!(matrix.n_scored(), 99 * 2);
    }

    #[test]
    fn failure_fraction_above_the_cap_fails_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let mut config = config();
        config.failure_cap = 0.02;
        let rubric = rubric(&["a", "b"]);
        let texts: Vec<String> = (0..100).map(|i| format!("feedback number {i}")).collect();
        let corpus = corpus_of(&texts.iter().map(String::as_str).collect::<Vec<_>>());

        let mut script = HashMap::new();
        for inst in &corpus.instances()[10..15] {
            script_failure(&mut script, &config, &rubric, inst);
        }
        let backend = MockBackend::new(1).with_scenario(script);

        let err = score_corpus(&backend, &cache, &config, &rubric, &corpus, "run1").unwrap_err();
        assert!(matches!(err, Error::Scoring { .. }), "{err}");
        assert!(err.to_string().contains("5 of 100"), "{err}");
    }

    #[test]
    fn row_order_follows_corpus_order_even_when_scored_in_parallel() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let mut config = config();
        config.parallelism = 4;
        let rubric = rubric(&["clarity"]);
        // Planted cues give every instance a known score, so any row mixup
        // would be visible.
        let texts: Vec<String> = (0..20)
            .map(|i| {
                let word = crate::corpus::INTENSITY_WORDS[i % 5];
                format!("The feedback shows {word} clarity.")
            })
            .collect();
        let corpus = corpus_of(&texts.iter().map(String::as_str).collect::<Vec<_>>());
        let backend = MockBackend::new(1);

        let (matrix, failures) =
            score_corpus(&backend, &cache, &config, &rubric, &corpus, "run1").unwrap();
        assert!(failures.is_empty());
        for row in 0..20 {
            assert_eq!(matrix.get(row, 0), Some((row % 5) as u8 + 1));
        }
    }

    #[test]
    fn deterministic_judge_agrees_with_itself_perfectly() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let config = config();
        let rubric = rubric(&["clarity", "urgency"]);
        let texts: Vec<String> = (0..40).map(|i| format!("line {i}")).collect();
        let corpus = corpus_of(&texts.iter().map(String::as_str).collect::<Vec<_>>());
        let backend = MockBackend::new(3);

        let agreement =
            repeat_agreement(&backend, &cache, &config, &rubric, &corpus, 200, 11).unwrap();
        assert_eq!(agreement.len(), 2);
        for dim in &agreement {
            assert_eq!(dim.estimate.kappa, 1.0, "{}", dim.dimension);
            assert_eq!(dim.estimate.ci_low, 1.0);
            assert_eq!(dim.estimate.ci_high, 1.0);
            assert_eq!(dim.estimate.n_items, 40);
        }
    }

    #[test]
    fn noisy_second_run_drops_kappa_below_one() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let config = config();
        let rubric = rubric(&["clarity", "urgency"]);
        let texts: Vec<String> = (0..60).map(|i| format!("line {i}")).collect();
        let corpus = corpus_of(&texts.iter().map(String::as_str).collect::<Vec<_>>());
        let backend = MockBackend::new(3).with_score_noise("run2", 0.3);

        let agreement =
            repeat_agreement(&backend, &cache, &config, &rubric, &corpus, 200, 11).unwrap();
        for dim in &agreement {
            assert!(dim.estimate.kappa < 1.0, "{}: {}", dim.dimension, dim.estimate.kappa);
            assert!(dim.estimate.ci_low <= dim.estimate.kappa);
            assert!(dim.estimate.ci_high >= dim.estimate.kappa);
        }
    }
}
