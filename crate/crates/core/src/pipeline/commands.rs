//! The pipeline commands behind the CLI.
//!
//! Every command is an ordinary function from input files to output files,
//! with one manifest per run recording digests, seeds, cache keys, and
//! anything the operator should know. The CLI adds nothing but argument
//! parsing, so tests drive these functions directly. Statistics-only
//! commands (synth, evaluate, agreement, associate) never construct a
//! backend; the others go through the response cache, so a rerun with the
//! same inputs replays byte-identically and an interrupted run resumes
//! where it stopped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::consolidation::{
    cluster_candidates, consolidate_clusters, group_criteria, score_candidates,
    spearman_correlation_matrix, write_correlation_csv, write_silhouette_csv,
};
use crate::corpus::{
    generate_synthetic_corpus, load_corpus, write_corpus, Corpus, CorpusFormat, SyntheticSpec,
    OUTCOME_FIELDS,
};
use crate::discovery::{load_agent_runs, run_discovery, save_agent_runs, AgentRun};
use crate::error::{Error, Result};
use crate::judge::score_corpus;
use crate::llm::{
    default_outcome_definitions, render_scoring_prompt, Backend, CacheKey, CompletionRequest,
    ResponseCache,
};
use crate::pipeline::manifest::{file_digest, RunManifest};
use crate::pipeline::{build_backend, PipelineConfig};
use crate::rubric::{load_rubric, save_rubric, Rubric};
use crate::scores::ScoreMatrix;
use crate::stability::{cross_seed_drift, vocabulary_coverage, CoverageReport, DriftReport};
use crate::stats::{
    bootstrap_kappa_ci, delong_paired, fit_poisson_glmm, nested_cv_auroc, rate_ratio_table,
    GlmmFit, GlmmOptions, ModelSpec, RateRatioRow,
};
use crate::util::{atomic_write, derive_seed};

/// Validated config plus the live pieces backend commands share.
struct Stage {
    backend: Box<dyn Backend>,
    cache: ResponseCache,
}

/// Validates the config and makes sure the output directory exists.
fn prepare_output(config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    std::fs::create_dir_all(&config.run.output_dir)
        .map_err(|e| Error::io(&config.run.output_dir, e))?;
    Ok(())
}

/// [`prepare_output`] plus cache and backend, for commands that call a model.
fn stage(config: &PipelineConfig) -> Result<Stage> {
    prepare_output(config)?;
    let cache = ResponseCache::new(&config.run.cache_dir)?;
    let backend = build_backend(config)?;
    Ok(Stage { backend, cache })
}

fn out_path(config: &PipelineConfig, name: &str) -> PathBuf {
    config.run.output_dir.join(name)
}

/// Loads a corpus, picking the format from the file extension: `.csv` is
/// CSV, everything else is JSON lines.
fn load_corpus_auto(path: &Path) -> Result<Corpus> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => CorpusFormat::Csv,
        _ => CorpusFormat::Jsonl,
    };
    load_corpus(path, format)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::invalid(format!("serialize {}: {e}", path.display())))?;
    atomic_write(path, &json)
}

/// Renders rows as RFC-4180 CSV bytes.
fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::invalid(format!("render csv: {e}"));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid(format!("render csv: {e}")))
}

/// Renders a padded plain-text table for terminal reading, with optional
/// trailing notes.
fn aligned_table(header: &[&str], rows: &[Vec<String>], notes: &[String]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let render = |cells: Vec<&str>| -> String {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{cell:<width$}", width = widths[i]));
        }
        line.trim_end().to_string()
    };
    let dashes: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let mut out = render(header.to_vec());
    out.push('\n');
    out.push_str(&render(dashes.iter().map(String::as_str).collect()));
    out.push('\n');
    for row in rows {
        out.push_str(&render(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    if !notes.is_empty() {
        out.push('\n');
        for note in notes {
            out.push_str(&format!("note: {note}\n"));
        }
    }
    out
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

/// Full-precision decimal for CSV cells, so downstream readers round-trip.
fn fmtf(v: f64) -> String {
    format!("{v}")
}

/// Files written by `synth`.
#[derive(Debug)]
pub struct SynthArtifacts {
    pub corpus: PathBuf,
    pub scores: PathBuf,
    pub truth: PathBuf,
    pub manifest: PathBuf,
}

impl SynthArtifacts {
    pub fn paths(&self) -> Vec<&Path> {
        vec![&self.corpus, &self.scores, &self.truth, &self.manifest]
    }
}

#[derive(Serialize)]
struct SyntheticTruth<'a> {
    seed: u64,
    spec: &'a SyntheticSpec,
    outcome_fields: [&'static str; 4],
    /// Fraction of instances with each outcome set, for sanity checks.
    outcome_prevalence: BTreeMap<String, f64>,
}

/// Generates a labeled synthetic corpus with known structure and writes it
/// alongside the planted score matrix and the generating parameters.
pub fn cmd_synth(
    config: &PipelineConfig,
    spec_path: Option<&Path>,
    seed: u64,
) -> Result<SynthArtifacts> {
    prepare_output(config)?;
    let spec = match spec_path {
        Some(path) => {
            let text = crate::util::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("spec file {}: {e}", path.display())))?
        }
        None => SyntheticSpec::default(),
    };
    let (corpus, planted) = generate_synthetic_corpus(&spec, seed)?;

    let corpus_path = out_path(config, "synthetic_corpus.jsonl");
    let scores_path = out_path(config, "synthetic_scores.csv");
    let truth_path = out_path(config, "synthetic_truth.json");
    let manifest_path = out_path(config, "synth.manifest.json");

    write_corpus(&corpus, &corpus_path, CorpusFormat::Jsonl)?;
    planted.write_csv(&scores_path)?;

    let n = corpus.len() as f64;
    let mut prevalence = BTreeMap::new();
    for field in OUTCOME_FIELDS {
        let count = corpus
            .instances()
            .iter()
            .filter(|x| x.outcomes.as_ref().and_then(|o| o.get(field)) == Some(true))
            .count();
        prevalence.insert(field.to_string(), count as f64 / n);
    }
    write_json(
        &SyntheticTruth {
            seed,
            spec: &spec,
            outcome_fields: OUTCOME_FIELDS,
            outcome_prevalence: prevalence,
        },
        &truth_path,
    )?;

    let mut manifest = RunManifest::new("synth", config);
    if let Some(path) = spec_path {
        manifest.record_input("spec", path)?;
    }
    manifest.record_output("corpus", &corpus_path)?;
    manifest.record_output("scores", &scores_path)?;
    manifest.record_output("truth", &truth_path)?;
    manifest.corpus_digest = Some(file_digest(&corpus_path)?);
    manifest.notes.push(format!("generator seed {seed}"));
    manifest.write(&manifest_path)?;

    Ok(SynthArtifacts {
        corpus: corpus_path,
        scores: scores_path,
        truth: truth_path,
        manifest: manifest_path,
    })
}

/// Files written by `discover`.
#[derive(Debug)]
pub struct DiscoverArtifacts {
    pub agent_runs: PathBuf,
    pub manifest: PathBuf,
    pub n_candidates: usize,
}

impl DiscoverArtifacts {
    pub fn paths(&self) -> Vec<&Path> {
        vec![&self.agent_runs, &self.manifest]
    }
}

/// Brainstorms candidate criteria with independent high-temperature agents
/// over disjoint-by-seed corpus subsets.
pub fn cmd_discover(config: &PipelineConfig, corpus_path: &Path) -> Result<DiscoverArtifacts> {
    let stage = stage(config)?;
    let corpus = load_corpus_auto(corpus_path)?;
    let runs_path = out_path(config, "discovery.json");
    let partial_path = out_path(config, "discovery_partial.json");

    let definitions = default_outcome_definitions();
    let runs = run_discovery(
        stage.backend.as_ref(),
        &stage.cache,
        &config.discovery_config(),
        &corpus,
        &definitions,
        config.seeds.discovery,
        Some(&partial_path),
    )?;
    save_agent_runs(&runs, &runs_path)?;

    let mut manifest = RunManifest::new("discover", config);
    manifest.record_input("corpus", corpus_path)?;
    manifest.record_output("agent_runs", &runs_path)?;
    manifest.corpus_digest = Some(file_digest(corpus_path)?);
    manifest.subset_ids = Some(runs.iter().map(|r| r.subset_ids.clone()).collect());
    manifest
        .cache_keys
        .insert("discovery".to_string(), runs.iter().map(|r| r.cache_key.clone()).collect());
    let n_candidates = runs.iter().map(|r| r.criteria.len()).sum();
    let skipped: usize = runs.iter().map(|r| r.skipped.len()).sum();
    if skipped > 0 {
        manifest.notes.push(format!("{skipped} reply row(s) skipped as malformed or over cap"));
    }
    let manifest_path = out_path(config, "discover.manifest.json");
    manifest.write(&manifest_path)?;

    Ok(DiscoverArtifacts { agent_runs: runs_path, manifest: manifest_path, n_candidates })
}

/// Files written by `consolidate`.
#[derive(Debug)]
pub struct ConsolidateArtifacts {
    pub rubric: PathBuf,
    pub candidate_scores: Option<PathBuf>,
    pub score_failures: Option<PathBuf>,
    pub correlation: Option<PathBuf>,
    pub silhouette: Option<PathBuf>,
    pub manifest: PathBuf,
    pub k_best: usize,
    pub n_candidates: usize,
}

impl ConsolidateArtifacts {
    pub fn paths(&self) -> Vec<&Path> {
        let mut out = Vec::new();
        out.extend(self.candidate_scores.as_deref());
        out.extend(self.score_failures.as_deref());
        out.extend(self.correlation.as_deref());
        out.extend(self.silhouette.as_deref());
        out.push(&self.rubric);
        out.push(&self.manifest);
        out
    }
}

/// Turns brainstormed candidates into a compact rubric: score every
/// candidate over the corpus, correlate the score columns, cluster, pick k
/// by silhouette, and consolidate each cluster into one dimension.
///
/// One or two candidates cannot support silhouette selection; they become
/// one cluster (a lone candidate) or two singletons (a pair), with a note.
/// A precomputed candidate score matrix can be passed in to skip the
/// scoring pass, as long as its shape matches.
pub fn cmd_consolidate(
    config: &PipelineConfig,
    discovery_path: &Path,
    corpus_path: &Path,
    scores_path: Option<&Path>,
) -> Result<ConsolidateArtifacts> {
    let stage = stage(config)?;
    let runs = load_agent_runs(discovery_path)?;
    let candidates: Vec<_> = runs.iter().flat_map(|r| r.criteria.iter().cloned()).collect();
    if candidates.is_empty() {
        return Err(Error::data(format!(
            "discovery file {} holds no candidate criteria",
            discovery_path.display()
        )));
    }
    let corpus = load_corpus_auto(corpus_path)?;
    let n = candidates.len();

    let mut manifest = RunManifest::new("consolidate", config);
    manifest.record_input("discovery", discovery_path)?;
    manifest.record_input("corpus", corpus_path)?;
    manifest.corpus_digest = Some(file_digest(corpus_path)?);

    let mut written_scores = None;
    let mut written_failures = None;
    let matrix = match scores_path {
        Some(path) => {
            let matrix = ScoreMatrix::read_csv(path)?;
            if matrix.n_dimensions() != n || matrix.n_instances() != corpus.len() {
                return Err(Error::invalid(format!(
                    "candidate score matrix {} is {}x{}, expected {}x{n}",
                    path.display(),
                    matrix.n_instances(),
                    matrix.n_dimensions(),
                    corpus.len(),
                )));
            }
            manifest.record_input("candidate_scores", path)?;
            matrix
        }
        None => {
            let (matrix, failures) = score_candidates(
                stage.backend.as_ref(),
                &stage.cache,
                &config.judge_config(),
                &corpus,
                &candidates,
            )?;
            let scores_out = out_path(config, "candidate_scores.csv");
            let failures_out = out_path(config, "candidate_score_failures.json");
            matrix.write_csv(&scores_out)?;
            write_json(&failures, &failures_out)?;
            if !failures.is_empty() {
                manifest
                    .notes
                    .push(format!("{} instance(s) failed candidate scoring", failures.len()));
            }
            manifest.record_output("candidate_scores", &scores_out)?;
            manifest.record_output("candidate_score_failures", &failures_out)?;
            written_scores = Some(scores_out);
            written_failures = Some(failures_out);
            matrix
        }
    };

    let mut correlation_out = None;
    let mut silhouette_out = None;
    let labels: Vec<usize> = if n == 1 {
        manifest.notes.push(
            "single candidate: correlation, clustering, and silhouette selection skipped"
                .to_string(),
        );
        vec![0]
    } else {
        let corr = spearman_correlation_matrix(&matrix, config.consolidation.missing_policy)?;
        let path = out_path(config, "correlation.csv");
        write_correlation_csv(&corr, &path)?;
        manifest.record_output("correlation", &path)?;
        correlation_out = Some(path);
        if !corr.zero_variance.is_empty() {
            manifest.notes.push(format!(
                "zero-variance candidate column(s) {:?} correlate as 0",
                corr.zero_variance
            ));
        }
        if n == 2 {
            manifest.notes.push(
                "two candidates: silhouette selection needs at least 3, kept both as \
                 singleton clusters"
                    .to_string(),
            );
            vec![0, 1]
        } else {
            let mut k_range = config.k_range();
            if let Some(range) = &k_range {
                let (lo, hi) = (*range.start(), *range.end());
                if hi > n - 1 {
                    let clamped_lo = lo.min(n - 1);
                    manifest.notes.push(format!(
                        "k range {lo}..={hi} clamped to {clamped_lo}..={} for {n} candidates",
                        n - 1
                    ));
                    k_range = Some(clamped_lo..=n - 1);
                }
            }
            let selection =
                cluster_candidates(&corr, config.consolidation.feature_space, k_range)?;
            let path = out_path(config, "silhouette.csv");
            write_silhouette_csv(&selection, &path)?;
            manifest.record_output("silhouette", &path)?;
            silhouette_out = Some(path);
            selection.labels
        }
    };

    let clusters = group_criteria(&candidates, &labels)?;
    let k_best = clusters.len();
    let manifest_path = out_path(config, "consolidate.manifest.json");
    let outcome = consolidate_clusters(
        stage.backend.as_ref(),
        &stage.cache,
        &config.consolidation_config(),
        &clusters,
        config.seeds.consolidation,
        &manifest_path.display().to_string(),
    )?;
    let rubric_path = out_path(config, "rubric.json");
    save_rubric(&outcome.rubric, &rubric_path)?;

    manifest.record_output("rubric", &rubric_path)?;
    manifest.rubric_digest = Some(file_digest(&rubric_path)?);
    manifest.cache_keys.insert(
        "consolidation".to_string(),
        outcome.cache_keys.iter().map(|k| k.consolidation.clone()).collect(),
    );
    manifest.cache_keys.insert(
        "anchors".to_string(),
        outcome.cache_keys.iter().map(|k| k.anchors.clone()).collect(),
    );
    manifest.notes.extend(outcome.warnings);
    manifest.write(&manifest_path)?;

    Ok(ConsolidateArtifacts {
        rubric: rubric_path,
        candidate_scores: written_scores,
        score_failures: written_failures,
        correlation: correlation_out,
        silhouette: silhouette_out,
        manifest: manifest_path,
        k_best,
        n_candidates: n,
    })
}

/// Files written by `score`.
#[derive(Debug)]
pub struct ScoreArtifacts {
    pub scores: PathBuf,
    pub failures: PathBuf,
    pub manifest: PathBuf,
    pub n_failures: usize,
}

impl ScoreArtifacts {
    pub fn paths(&self) -> Vec<&Path> {
        vec![&self.scores, &self.failures, &self.manifest]
    }
}

/// Replicate tags name files and cache entries, so keep them path-safe.
fn validate_replicate_tag(tag: &str) -> Result<()> {
    let ok = !tag.is_empty()
        && tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if !ok {
        return Err(Error::config(format!(
            "replicate tag {tag:?} must be nonempty ASCII letters, digits, '-', or '_'"
        )));
    }
    Ok(())
}

/// Scores a corpus against a rubric with the deterministic judge. The
/// replicate tag separates repeat runs of the same prompt set, so `run1`
/// and `run2` yield independent completions for agreement checks.
pub fn cmd_score(
    config: &PipelineConfig,
    rubric_path: &Path,
    corpus_path: &Path,
    replicate_tag: &str,
) -> Result<ScoreArtifacts> {
    validate_replicate_tag(replicate_tag)?;
    let stage = stage(config)?;
    let rubric = load_rubric(rubric_path)?;
    let corpus = load_corpus_auto(corpus_path)?;

    let (matrix, failures) = score_corpus(
        stage.backend.as_ref(),
        &stage.cache,
        &config.judge_config(),
        &rubric,
        &corpus,
        replicate_tag,
    )?;
    let scores_path = out_path(config, &format!("scores_{replicate_tag}.csv"));
    let failures_path = out_path(config, &format!("scores_{replicate_tag}_failures.json"));
    matrix.write_csv(&scores_path)?;
    write_json(&failures, &failures_path)?;

    let mut manifest = RunManifest::new("score", config);
    manifest.record_input("rubric", rubric_path)?;
    manifest.record_input("corpus", corpus_path)?;
    manifest.record_output("scores", &scores_path)?;
    manifest.record_output("failures", &failures_path)?;
    manifest.corpus_digest = Some(file_digest(corpus_path)?);
    manifest.rubric_digest = Some(file_digest(rubric_path)?);
    // First-attempt cache key per instance, in corpus order. Re-prompt
    // requests append to the transcript and get distinct keys, so they are
    // not enumerable here.
    let mut keys = Vec::with_capacity(corpus.len());
    for instance in corpus.instances() {
        let messages = render_scoring_prompt(&rubric, &instance.text)?;
        let request =
            CompletionRequest::new(&config.backend.model_id, 0.0, messages.to_vec())?;
        keys.push(CacheKey::for_request(stage.backend.id(), &request, replicate_tag).digest);
    }
    manifest.cache_keys.insert("scoring".to_string(), keys);
    if !failures.is_empty() {
        manifest.notes.push(format!(
            "{} instance(s) failed scoring and stay masked",
            failures.len()
        ));
    }
    let manifest_path = out_path(config, &format!("score_{replicate_tag}.manifest.json"));
    manifest.write(&manifest_path)?;

    Ok(ScoreArtifacts {
        scores: scores_path,
        failures: failures_path,
        manifest: manifest_path,
        n_failures: failures.len(),
    })
}

/// Files written by `evaluate`.
#[derive(Debug)]
pub struct EvaluateArtifacts {
    pub table_csv: PathBuf,
    pub table_txt: PathBuf,
    pub comparisons_csv: Option<PathBuf>,
    pub comparisons_txt: Option<PathBuf>,
    pub manifest: PathBuf,
}

impl EvaluateArtifacts {
    pub fn paths(&self) -> Vec<&Path> {
        let mut out = vec![self.table_csv.as_path(), self.table_txt.as_path()];
        out.extend(self.comparisons_csv.as_deref());
        out.extend(self.comparisons_txt.as_deref());
        out.push(&self.manifest);
        out
    }
}

struct EvalRow {
    outcome: &'static str,
    feature_set: &'static str,
    model: &'static str,
    n: usize,
    n_pos: usize,
    auroc: f64,
    ci_low: f64,
    ci_high: f64,
}

struct ComparisonRow {
    outcome: &'static str,
    model: &'static str,
    comparison: String,
    auroc_a: f64,
    auroc_b: f64,
    delta: f64,
    ci_low: f64,
    ci_high: f64,
    p_value: f64,
}

/// Tests how well rubric scores predict each outcome with nested
/// cross-validation, for a logistic model and a random forest.
///
/// Feature sets: `ai` is the score matrix; when every scored instance also
/// carries external features, `external` and `external_ai` are evaluated
/// too and the correlated AUROC differences (combined vs each alone) are
/// tested pairwise on the pooled held-out predictions. Rows with any masked
/// score are dropped so every model sees the same instances. An outcome
/// whose folds cannot be formed (for example, too few positives) is skipped
/// with a note rather than failing the rest.
pub fn cmd_evaluate(
    config: &PipelineConfig,
    scores_path: &Path,
    corpus_path: &Path,
) -> Result<EvaluateArtifacts> {
    prepare_output(config)?;
    let matrix = ScoreMatrix::read_csv(scores_path)?;
    let corpus = load_corpus_auto(corpus_path)?;

    // Keep rows that are fully scored; align corpus instances by id.
    let mut kept: Vec<&crate::corpus::FeedbackInstance> = Vec::new();
    let mut ai_rows: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0usize;
    for (r, id) in matrix.instance_ids().iter().enumerate() {
        let instance = corpus.instance(id).ok_or_else(|| {
            Error::data(format!("scored instance {id} is missing from the corpus"))
        })?;
        let row = matrix.row(r);
        if row.iter().any(Option::is_none) {
            dropped += 1;
            continue;
        }
        kept.push(instance);
        ai_rows.push(row.into_iter().map(|v| f64::from(v.unwrap_or(0))).collect());
    }
    if kept.len() < 4 {
        return Err(Error::degenerate(format!(
            "only {} fully scored instance(s); too few to cross-validate",
            kept.len()
        )));
    }
    if kept.iter().any(|x| x.outcomes.is_none()) {
        return Err(Error::data(
            "corpus instances carry no outcome labels; evaluation needs labeled data",
        ));
    }

    let n = kept.len();
    let d_ai = matrix.n_dimensions();
    let ai = DMatrix::from_fn(n, d_ai, |i, j| ai_rows[i][j]);

    // External features are used only when every kept instance carries them.
    let external_keys: Vec<String> = match kept[0].external_features.as_ref() {
        Some(features) if kept.iter().all(|x| x.external_features.is_some()) => {
            features.keys().cloned().collect()
        }
        _ => Vec::new(),
    };
    let mut feature_sets: Vec<(&'static str, DMatrix<f64>)> = vec![("ai", ai.clone())];
    if !external_keys.is_empty() {
        let d_ext = external_keys.len();
        let ext = DMatrix::from_fn(n, d_ext, |i, j| {
            *kept[i]
                .external_features
                .as_ref()
                .and_then(|f| f.get(&external_keys[j]))
                .unwrap_or(&0.0)
        });
        let combined = DMatrix::from_fn(n, d_ext + d_ai, |i, j| {
            if j < d_ext { ext[(i, j)] } else { ai[(i, j - d_ext)] }
        });
        feature_sets.push(("external", ext));
        feature_sets.push(("external_ai", combined));
    }

    let weighting = config.class_weighting()?;
    let mut notes: Vec<String> = Vec::new();
    if dropped > 0 {
        notes.push(format!("{dropped} instance(s) dropped for masked scores"));
    }
    let mut rows: Vec<EvalRow> = Vec::new();
    let mut comparisons: Vec<ComparisonRow> = Vec::new();

    for outcome in OUTCOME_FIELDS {
        let labels: Vec<u8> = kept
            .iter()
            .map(|x| x.outcomes.as_ref().and_then(|o| o.get(outcome)).unwrap_or(false) as u8)
            .collect();
        // Pooled predictions per (feature set, model), for the paired tests.
        let mut predictions: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
        for (set_name, features) in &feature_sets {
            for model_name in ["logistic", "forest"] {
                let spec = match model_name {
                    "logistic" => ModelSpec::Logistic { weighting },
                    _ => ModelSpec::Forest { grid: config.cv.forest_grid.clone() },
                };
                let seed = derive_seed(
                    config.seeds.cv,
                    &format!("evaluate:{outcome}:{set_name}:{model_name}"),
                );
                let result = nested_cv_auroc(
                    features,
                    &labels,
                    config.cv.outer_k,
                    config.cv.inner_k,
                    &spec,
                    seed,
                );
                match result {
                    Ok(cv) => {
                        if cv.pooled.auroc >= 0.999_999_9 {
                            notes.push(format!(
                                "{outcome}/{set_name}/{model_name}: AUROC is 1.0, check \
                                 the features for label leakage"
                            ));
                        }
                        rows.push(EvalRow {
                            outcome,
                            feature_set: set_name,
                            model: model_name,
                            n,
                            n_pos: cv.pooled.n_pos,
                            auroc: cv.pooled.auroc,
                            ci_low: cv.pooled.ci_low,
                            ci_high: cv.pooled.ci_high,
                        });
                        predictions.insert((set_name, model_name), cv.predictions);
                    }
                    Err(e) => notes.push(format!("{outcome}/{set_name}/{model_name}: {e}")),
                }
            }
        }
        if !external_keys.is_empty() {
            for model_name in ["logistic", "forest"] {
                for (against, label) in
                    [("external", "external_ai vs external"), ("ai", "external_ai vs ai")]
                {
                    let (Some(a), Some(b)) = (
                        predictions.get(&("external_ai", model_name)),
                        predictions.get(&(against, model_name)),
                    ) else {
                        continue;
                    };
                    match delong_paired(a, b, &labels) {
                        Ok(delta) => comparisons.push(ComparisonRow {
                            outcome,
                            model: model_name,
                            comparison: label.to_string(),
                            auroc_a: delta.auroc_a,
                            auroc_b: delta.auroc_b,
                            delta: delta.delta,
                            ci_low: delta.ci_low,
                            ci_high: delta.ci_high,
                            p_value: delta.p_value,
                        }),
                        Err(e) => notes.push(format!("{outcome}/{model_name}/{label}: {e}")),
                    }
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::degenerate(format!(
            "no outcome could be evaluated: {}",
            notes.join("; ")
        )));
    }

    let header = ["outcome", "feature_set", "model", "n", "n_pos", "auroc", "ci_low", "ci_high"];
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.outcome.to_string(),
                r.feature_set.to_string(),
                r.model.to_string(),
                r.n.to_string(),
                r.n_pos.to_string(),
                fmtf(r.auroc),
                fmtf(r.ci_low),
                fmtf(r.ci_high),
            ]
        })
        .collect();
    let txt_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.outcome.to_string(),
                r.feature_set.to_string(),
                r.model.to_string(),
                r.n.to_string(),
                r.n_pos.to_string(),
                fmt4(r.auroc),
                fmt4(r.ci_low),
                fmt4(r.ci_high),
            ]
        })
        .collect();
    let table_csv = out_path(config, "evaluation.csv");
    let table_txt = out_path(config, "evaluation.txt");
    atomic_write(&table_csv, &csv_bytes(&header, &csv_rows)?)?;
    atomic_write(&table_txt, aligned_table(&header, &txt_rows, &notes).as_bytes())?;

    let mut comparisons_csv = None;
    let mut comparisons_txt = None;
    if !comparisons.is_empty() {
        let header = [
            "outcome", "model", "comparison", "auroc_a", "auroc_b", "delta", "ci_low",
            "ci_high", "p_value",
        ];
        let csv_rows: Vec<Vec<String>> = comparisons
            .iter()
            .map(|r| {
                vec![
                    r.outcome.to_string(),
                    r.model.to_string(),
                    r.comparison.clone(),
                    fmtf(r.auroc_a),
                    fmtf(r.auroc_b),
                    fmtf(r.delta),
                    fmtf(r.ci_low),
                    fmtf(r.ci_high),
                    fmtf(r.p_value),
                ]
            })
            .collect();
        let txt_rows: Vec<Vec<String>> = comparisons
            .iter()
            .map(|r| {
                vec![
                    r.outcome.to_string(),
                    r.model.to_string(),
                    r.comparison.clone(),
                    fmt4(r.auroc_a),
                    fmt4(r.auroc_b),
                    fmt4(r.delta),
                    fmt4(r.ci_low),
                    fmt4(r.ci_high),
                    fmt4(r.p_value),
                ]
            })
            .collect();
        let path_csv = out_path(config, "comparisons.csv");
        let path_txt = out_path(config, "comparisons.txt");
        atomic_write(&path_csv, &csv_bytes(&header, &csv_rows)?)?;
        atomic_write(&path_txt, aligned_table(&header, &txt_rows, &[]).as_bytes())?;
        comparisons_csv = Some(path_csv);
        comparisons_txt = Some(path_txt);
    }

    let mut manifest = RunManifest::new("evaluate", config);
    manifest.record_input("scores", scores_path)?;
    manifest.record_input("corpus", corpus_path)?;
    manifest.record_output("evaluation_csv", &table_csv)?;
    manifest.record_output("evaluation_txt", &table_txt)?;
    if let Some(path) = &comparisons_csv {
        manifest.record_output("comparisons_csv", path)?;
    }
    if let Some(path) = &comparisons_txt {
        manifest.record_output("comparisons_txt", path)?;
    }
    manifest.corpus_digest = Some(file_digest(corpus_path)?);
    manifest.notes.extend(notes);
    let manifest_path = out_path(config, "evaluate.manifest.json");
    manifest.write(&manifest_path)?;

    Ok(EvaluateArtifacts {
        table_csv,
        table_txt,
        comparisons_csv,
        comparisons_txt,
        manifest: manifest_path,
    })
}

/// Files written by `agreement`.
#[derive(Debug)]
pub struct AgreementArtifacts {
    pub table_csv: PathBuf,
    pub table_txt: PathBuf,
    pub manifest: PathBuf,
}

impl AgreementArtifacts {
    pub fn paths(&self) -> Vec<&Path> {
        vec![&self.table_csv, &self.table_txt, &self.manifest]
    }
}

/// Human rating rows keyed by (instance, rater), values in a fixed
/// dimension order.
struct HumanTable {
    dims: Vec<String>,
    raters: Vec<String>,
    instance_order: Vec<String>,
    cells: BTreeMap<(String, String), Vec<Option<u8>>>,
}

/// Parses a long-format human rating CSV: `instance_id,rater_id` followed
/// by one column per rubric dimension; empty cells are missing ratings.
fn parse_human_csv(path: &Path) -> Result<HumanTable> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::data(format!("human ratings {}: {e}", path.display())))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || cols[0] != "instance_id" || cols[1] != "rater_id" {
        return Err(Error::data(format!(
            "human ratings header must start with instance_id,rater_id and carry at \
             least one dimension column, got {cols:?}"
        )));
    }
    let dims: Vec<String> = cols[2..].iter().map(|c| c.to_string()).collect();

    let mut raters: Vec<String> = Vec::new();
    let mut instance_order: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), Vec<Option<u8>>> = BTreeMap::new();
    for (row_index, record) in reader.records().enumerate() {
        let line = row_index + 2;
        let record =
            record.map_err(|e| Error::data_at(line, format!("human ratings: {e}")))?;
        let instance_id = record.get(0).unwrap_or("").to_string();
        let rater_id = record.get(1).unwrap_or("").to_string();
        if instance_id.is_empty() || rater_id.is_empty() {
            return Err(Error::data_at(line, "empty instance_id or rater_id"));
        }
        let mut values = Vec::with_capacity(dims.len());
        for (c, dim) in dims.iter().enumerate() {
            let raw = record.get(c + 2).unwrap_or("").trim();
            if raw.is_empty() {
                values.push(None);
                continue;
            }
            let value: u8 = raw.parse().map_err(|_| {
                Error::data_at(line, format!("{dim}: {raw:?} is not an integer rating"))
            })?;
            if !(1..=5).contains(&value) {
                return Err(Error::data_at(line, format!("{dim}: {value} outside 1..=5")));
            }
            values.push(Some(value));
        }
        if !raters.contains(&rater_id) {
            raters.push(rater_id.clone());
        }
        if !instance_order.contains(&instance_id) {
            instance_order.push(instance_id.clone());
        }
        let key = (instance_id, rater_id);
        if cells.insert(key.clone(), values).is_some() {
            return Err(Error::data_at(
                line,
                format!("duplicate row for instance {} rater {}", key.0, key.1),
            ));
        }
    }
    if cells.is_empty() {
        return Err(Error::data(format!("human ratings {} hold no rows", path.display())));
    }
    Ok(HumanTable { dims, raters, instance_order, cells })
}

struct AgreementRow {
    dimension: String,
    pair: &'static str,
    n_items: usize,
    kappa: f64,
    ci_low: f64,
    ci_high: f64,
}

/// Chance-corrected agreement per rubric dimension, with bootstrap CIs.
///
/// Always reports AI against AI (two replicate score runs). Given a human
/// rating file, also reports the first two raters against each other and
/// their rounded consensus against the first run, and restricts the AI-AI
/// rows to the humanly rated instances so all three columns describe the
/// same subset. A dimension-pair cell that cannot be computed (too few
/// items, degenerate ratings) turns into a note, not an error.
pub fn cmd_agreement(
    config: &PipelineConfig,
    run1_path: &Path,
    run2_path: &Path,
    human_path: Option<&Path>,
) -> Result<AgreementArtifacts> {
    prepare_output(config)?;
    let run1 = ScoreMatrix::read_csv(run1_path)?;
    let run2 = ScoreMatrix::read_csv(run2_path)?;
    if run1.dimension_ids() != run2.dimension_ids() {
        return Err(Error::invalid(format!(
            "score runs disagree on dimensions: {:?} vs {:?}",
            run1.dimension_ids(),
            run2.dimension_ids()
        )));
    }
    let index2: BTreeMap<&str, usize> = run2
        .instance_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut notes: Vec<String> = Vec::new();
    let human = match human_path {
        Some(path) => {
            let table = parse_human_csv(path)?;
            let mut matrix_dims: Vec<&String> = run1.dimension_ids().iter().collect();
            let mut human_dims: Vec<&String> = table.dims.iter().collect();
            matrix_dims.sort();
            human_dims.sort();
            if matrix_dims != human_dims {
                return Err(Error::invalid(format!(
                    "human rating dimensions {:?} do not match the score runs' {:?}",
                    table.dims,
                    run1.dimension_ids()
                )));
            }
            if table.raters.len() < 2 {
                return Err(Error::invalid(format!(
                    "human agreement needs two raters, file has {:?}",
                    table.raters
                )));
            }
            if table.raters.len() > 2 {
                notes.push(format!(
                    "raters beyond the first two ignored: {:?}",
                    &table.raters[2..]
                ));
            }
            Some(table)
        }
        None => None,
    };

    // Row indices into run1, restricted to the human subset when one exists.
    let rows: Vec<usize> = match &human {
        Some(table) => {
            let in_human: Vec<usize> = run1
                .instance_ids()
                .iter()
                .enumerate()
                .filter(|(_, id)| table.instance_order.contains(id))
                .map(|(i, _)| i)
                .collect();
            let unknown = table
                .instance_order
                .iter()
                .filter(|id| !run1.instance_ids().contains(id))
                .count();
            if unknown > 0 {
                notes.push(format!("{unknown} humanly rated instance(s) not in the score run"));
            }
            if in_human.is_empty() {
                return Err(Error::invalid(
                    "no overlap between the human rating file and the score run",
                ));
            }
            in_human
        }
        None => (0..run1.n_instances()).collect(),
    };

    let resamples = config.cv.bootstrap_resamples;
    let mut table_rows: Vec<AgreementRow> = Vec::new();
    for (d, dimension) in run1.dimension_ids().iter().enumerate() {
        let human_dim = human
            .as_ref()
            .map(|t| t.dims.iter().position(|x| x == dimension).unwrap_or(usize::MAX));
        // Consensus of the two raters: mean rounded half-up, or whichever
        // rater is present when only one is.
        let consensus = |table: &HumanTable, id: &str| -> Option<u8> {
            let hd = human_dim.unwrap_or(usize::MAX);
            let value = |rater: &str| {
                table
                    .cells
                    .get(&(id.to_string(), rater.to_string()))
                    .and_then(|v| v.get(hd).copied().flatten())
            };
            match (value(&table.raters[0]), value(&table.raters[1])) {
                (Some(a), Some(b)) => {
                    Some((f64::from(a + b) / 2.0).round().clamp(1.0, 5.0) as u8)
                }
                (Some(a), None) => Some(a),
                (None, Some(b)) => Some(b),
                (None, None) => None,
            }
        };

        let mut pairs: Vec<(&'static str, Vec<u8>, Vec<u8>)> = Vec::new();
        if let Some(table) = &human {
            let mut a_values = Vec::new();
            let mut b_values = Vec::new();
            let mut consensus_values = Vec::new();
            let mut ai_values = Vec::new();
            let hd = human_dim.unwrap_or(usize::MAX);
            for &r in &rows {
                let id = &run1.instance_ids()[r];
                let rating = |rater: &str| {
                    table
                        .cells
                        .get(&(id.clone(), rater.to_string()))
                        .and_then(|v| v.get(hd).copied().flatten())
                };
                if let (Some(a), Some(b)) =
                    (rating(&table.raters[0]), rating(&table.raters[1]))
                {
                    a_values.push(a);
                    b_values.push(b);
                }
                if let (Some(c), Some(ai)) = (consensus(table, id), run1.get(r, d)) {
                    consensus_values.push(c);
                    ai_values.push(ai);
                }
            }
            pairs.push(("human_human", a_values, b_values));
            pairs.push(("human_ai", consensus_values, ai_values));
        }
        let mut first = Vec::new();
        let mut second = Vec::new();
        for &r in &rows {
            let id = &run1.instance_ids()[r];
            let Some(&r2) = index2.get(id.as_str()) else { continue };
            if let (Some(a), Some(b)) = (run1.get(r, d), run2.get(r2, d)) {
                first.push(a);
                second.push(b);
            }
        }
        pairs.push(("ai_ai", first, second));

        for (pair, r1, r2) in pairs {
            if r1.len() < 2 {
                notes.push(format!("{dimension}/{pair}: only {} paired item(s)", r1.len()));
                continue;
            }
            let seed = derive_seed(config.seeds.bootstrap, &format!("agreement:{pair}:{dimension}"));
            match bootstrap_kappa_ci(&r1, &r2, 5, resamples, seed) {
                Ok(estimate) => table_rows.push(AgreementRow {
                    dimension: dimension.clone(),
                    pair,
                    n_items: estimate.n_items,
                    kappa: estimate.kappa,
                    ci_low: estimate.ci_low,
                    ci_high: estimate.ci_high,
                }),
                Err(e) => notes.push(format!("{dimension}/{pair}: {e}")),
            }
        }
    }
    if table_rows.is_empty() {
        return Err(Error::degenerate(format!(
            "no agreement cell could be computed: {}",
            notes.join("; ")
        )));
    }

    let header = ["dimension", "pair", "n_items", "kappa", "ci_low", "ci_high"];
    let csv_rows: Vec<Vec<String>> = table_rows
        .iter()
        .map(|r| {
            vec![
                r.dimension.clone(),
                r.pair.to_string(),
                r.n_items.to_string(),
                fmtf(r.kappa),
                fmtf(r.ci_low),
                fmtf(r.ci_high),
            ]
        })
        .collect();
    let txt_rows: Vec<Vec<String>> = table_rows
        .iter()
        .map(|r| {
            vec![
                r.dimension.clone(),
                r.pair.to_string(),
                r.n_items.to_string(),
                fmt4(r.kappa),
                fmt4(r.ci_low),
                fmt4(r.ci_high),
            ]
        })
        .collect();
    let table_csv = out_path(config, "agreement.csv");
    let table_txt = out_path(config, "agreement.txt");
    atomic_write(&table_csv, &csv_bytes(&header, &csv_rows)?)?;
    atomic_write(&table_txt, aligned_table(&header, &txt_rows, &notes).as_bytes())?;

    let mut manifest = RunManifest::new("agreement", config);
    manifest.record_input("run1", run1_path)?;
    manifest.record_input("run2", run2_path)?;
    if let Some(path) = human_path {
        manifest.record_input("human", path)?;
    }
    manifest.record_output("agreement_csv", &table_csv)?;
    manifest.record_output("agreement_txt", &table_txt)?;
    manifest.notes.extend(notes);
    let manifest_path = out_path(config, "agreement.manifest.json");
    manifest.write(&manifest_path)?;

    Ok(AgreementArtifacts { table_csv, table_txt, manifest: manifest_path })
}

/// Files written by `associate`.
#[derive(Debug)]
pub struct AssociateArtifacts {
    pub rate_ratios_csv: PathBuf,
    pub rate_ratios_txt: PathBuf,
    pub fit_json: PathBuf,
    pub manifest: PathBuf,
}

impl AssociateArtifacts {
    pub fn paths(&self) -> Vec<&Path> {
        vec![&self.rate_ratios_csv, &self.rate_ratios_txt, &self.fit_json, &self.manifest]
    }
}

#[derive(Serialize)]
struct AssociateReport<'a> {
    outcome: &'a str,
    dimension_names: &'a [String],
    standardize: bool,
    n_instances: usize,
    n_cases: usize,
    fit: &'a GlmmFit,
    rate_ratios: &'a [RateRatioRow],
}

/// Estimates outcome rate ratios per rubric dimension with a Poisson
/// mixed model, one random intercept per case.
pub fn cmd_associate(
    config: &PipelineConfig,
    scores_path: &Path,
    corpus_path: &Path,
    outcome: &str,
    standardize: bool,
) -> Result<AssociateArtifacts> {
    prepare_output(config)?;
    if !OUTCOME_FIELDS.contains(&outcome) {
        return Err(Error::invalid(format!(
            "unknown outcome {outcome:?}; expected one of {OUTCOME_FIELDS:?}"
        )));
    }
    let matrix = ScoreMatrix::read_csv(scores_path)?;
    let corpus = load_corpus_auto(corpus_path)?;

    let mut counts: Vec<f64> = Vec::new();
    let mut score_rows: Vec<Vec<f64>> = Vec::new();
    let mut groups: Vec<usize> = Vec::new();
    let mut case_index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut case_order = 0usize;
    let mut dropped = 0usize;
    for (r, id) in matrix.instance_ids().iter().enumerate() {
        let instance = corpus.instance(id).ok_or_else(|| {
            Error::data(format!("scored instance {id} is missing from the corpus"))
        })?;
        let Some(outcomes) = instance.outcomes.as_ref() else {
            return Err(Error::data(
                "corpus instances carry no outcome labels; association needs labeled data",
            ));
        };
        let row = matrix.row(r);
        if row.iter().any(Option::is_none) {
            dropped += 1;
            continue;
        }
        counts.push(f64::from(outcomes.get(outcome).unwrap_or(false)));
        score_rows.push(row.into_iter().map(|v| f64::from(v.unwrap_or(0))).collect());
        let next = case_order;
        let group = *case_index.entry(instance.case_id.as_str()).or_insert_with(|| {
            case_order += 1;
            next
        });
        groups.push(group);
    }
    if case_index.len() < 2 {
        return Err(Error::invalid(format!(
            "association needs at least 2 case groups for the random intercept, got {}",
            case_index.len()
        )));
    }

    let n = counts.len();
    let d = matrix.n_dimensions();
    let features = DMatrix::from_fn(n, d, |i, j| score_rows[i][j]);
    let options = GlmmOptions { standardize, ..GlmmOptions::default() };
    let fit = fit_poisson_glmm(&counts, &features, &groups, &options)?;
    let names = matrix.dimension_ids().to_vec();
    let ratios = rate_ratio_table(&fit, &names)?;

    let header = ["dimension", "rate_ratio", "ci_low", "ci_high"];
    let csv_rows: Vec<Vec<String>> = ratios
        .iter()
        .map(|r| vec![r.name.clone(), fmtf(r.rate_ratio), fmtf(r.ci_low), fmtf(r.ci_high)])
        .collect();
    let txt_rows: Vec<Vec<String>> = ratios
        .iter()
        .map(|r| vec![r.name.clone(), fmt4(r.rate_ratio), fmt4(r.ci_low), fmt4(r.ci_high)])
        .collect();
    let mut notes: Vec<String> = fit.warnings.clone();
    if dropped > 0 {
        notes.push(format!("{dropped} instance(s) dropped for masked scores"));
    }
    if standardize {
        notes.push("scores standardized: ratios are per standard deviation".to_string());
    }
    let ratios_csv = out_path(config, &format!("rate_ratios_{outcome}.csv"));
    let ratios_txt = out_path(config, &format!("rate_ratios_{outcome}.txt"));
    let fit_json = out_path(config, &format!("associate_fit_{outcome}.json"));
    atomic_write(&ratios_csv, &csv_bytes(&header, &csv_rows)?)?;
    atomic_write(&ratios_txt, aligned_table(&header, &txt_rows, &notes).as_bytes())?;
    write_json(
        &AssociateReport {
            outcome,
            dimension_names: &names,
            standardize,
            n_instances: n,
            n_cases: case_index.len(),
            fit: &fit,
            rate_ratios: &ratios,
        },
        &fit_json,
    )?;

    let mut manifest = RunManifest::new("associate", config);
    manifest.record_input("scores", scores_path)?;
    manifest.record_input("corpus", corpus_path)?;
    manifest.record_output("rate_ratios_csv", &ratios_csv)?;
    manifest.record_output("rate_ratios_txt", &ratios_txt)?;
    manifest.record_output("fit", &fit_json)?;
    manifest.corpus_digest = Some(file_digest(corpus_path)?);
    manifest.notes.extend(notes);
    let manifest_path = out_path(config, &format!("associate_{outcome}.manifest.json"));
    manifest.write(&manifest_path)?;

    Ok(AssociateArtifacts {
        rate_ratios_csv: ratios_csv,
        rate_ratios_txt: ratios_txt,
        fit_json,
        manifest: manifest_path,
    })
}

/// Files written by `stability`.
#[derive(Debug)]
pub struct StabilityArtifacts {
    pub report: PathBuf,
    pub drift_csv: Option<PathBuf>,
    pub coverage_csv: PathBuf,
    pub manifest: PathBuf,
}

impl StabilityArtifacts {
    pub fn paths(&self) -> Vec<&Path> {
        let mut out = vec![self.report.as_path()];
        out.extend(self.drift_csv.as_deref());
        out.push(&self.coverage_csv);
        out.push(&self.manifest);
        out
    }
}

#[derive(Serialize)]
struct StabilityReport<'a> {
    rubric_paths: Vec<String>,
    discovery_path: String,
    /// Absent when fewer than two rubrics were given.
    drift: Option<&'a DriftReport>,
    /// One row per threshold when sweeping, else a single row.
    coverage: &'a [CoverageReport],
    /// The rubric coverage was measured against (the first one given).
    coverage_rubric: String,
    notes: &'a [String],
}

/// Every name, definition, and anchor text the agents brainstormed, as
/// separate embedding units.
fn brainstorm_texts(runs: &[AgentRun]) -> Vec<String> {
    let mut texts = Vec::new();
    for run in runs {
        for criterion in &run.criteria {
            texts.push(criterion.name.clone());
            texts.push(criterion.definition.clone());
            texts.extend(criterion.anchors.values().cloned());
        }
    }
    texts
}

/// Checks rubric stability: wording drift across re-runs with different
/// seeds, and how much of the brainstormed vocabulary the rubric retains.
///
/// The brainstormed texts come from the discovery file recorded in the
/// first rubric's manifest; pass one explicitly when the manifest moved.
/// With `sweep`, coverage is reported at thresholds 0.1 through 1.0 instead
/// of the single configured one.
pub fn cmd_stability(
    config: &PipelineConfig,
    rubric_paths: &[PathBuf],
    discovery_path: Option<&Path>,
    sweep: bool,
) -> Result<StabilityArtifacts> {
    if rubric_paths.is_empty() {
        return Err(Error::invalid("stability needs at least one rubric file"));
    }
    let stage = stage(config)?;
    let rubrics: Vec<Rubric> = rubric_paths.iter().map(|p| load_rubric(p)).collect::<Result<_>>()?;

    let discovery_file: PathBuf = match discovery_path {
        Some(path) => path.to_path_buf(),
        None => {
            let manifest_ref = Path::new(&rubrics[0].manifest_ref);
            let manifest = RunManifest::load(manifest_ref).map_err(|e| {
                Error::data(format!(
                    "cannot resolve the discovery file through the rubric's manifest \
                     ({e}); pass it explicitly with --discovery"
                ))
            })?;
            let stamp = manifest.inputs.get("discovery").ok_or_else(|| {
                Error::data(format!(
                    "manifest {} records no discovery input; pass --discovery",
                    manifest_ref.display()
                ))
            })?;
            PathBuf::from(&stamp.path)
        }
    };
    let runs = load_agent_runs(&discovery_file)?;
    let texts = brainstorm_texts(&runs);

    let retry = config.retry_policy();
    let mut notes: Vec<String> = Vec::new();
    let drift = if rubrics.len() >= 2 {
        Some(cross_seed_drift(
            stage.backend.as_ref(),
            &stage.cache,
            &retry,
            &rubrics,
            config.thresholds.drift,
        )?)
    } else {
        notes.push("drift needs at least two rubrics; skipped".to_string());
        None
    };

    let thresholds: Vec<f64> = if sweep {
        (1..=10).map(|i| f64::from(i) / 10.0).collect()
    } else {
        vec![config.thresholds.coverage]
    };
    let coverage: Vec<CoverageReport> = thresholds
        .iter()
        .map(|&t| {
            vocabulary_coverage(stage.backend.as_ref(), &stage.cache, &retry, &texts, &rubrics[0], t)
        })
        .collect::<Result<_>>()?;

    let report_path = out_path(config, "stability.json");
    let coverage_path = out_path(config, "coverage.csv");
    let mut drift_path = None;
    if let Some(report) = &drift {
        let path = out_path(config, "drift.csv");
        crate::stability::write_drift_csv(report, &path)?;
        drift_path = Some(path);
    }
    crate::stability::write_coverage_csv(&coverage, &coverage_path)?;
    write_json(
        &StabilityReport {
            rubric_paths: rubric_paths.iter().map(|p| p.display().to_string()).collect(),
            discovery_path: discovery_file.display().to_string(),
            drift: drift.as_ref(),
            coverage: &coverage,
            coverage_rubric: rubric_paths[0].display().to_string(),
            notes: &notes,
        },
        &report_path,
    )?;

    let mut manifest = RunManifest::new("stability", config);
    for (i, path) in rubric_paths.iter().enumerate() {
        manifest.record_input(&format!("rubric{}", i + 1), path)?;
    }
    manifest.record_input("discovery", &discovery_file)?;
    manifest.record_output("report", &report_path)?;
    if let Some(path) = &drift_path {
        manifest.record_output("drift_csv", path)?;
    }
    manifest.record_output("coverage_csv", &coverage_path)?;
    manifest.rubric_digest = Some(file_digest(&rubric_paths[0])?);
    manifest.notes.extend(notes);
    let manifest_path = out_path(config, "stability.manifest.json");
    manifest.write(&manifest_path)?;

    Ok(StabilityArtifacts {
        report: report_path,
        drift_csv: drift_path,
        coverage_csv: coverage_path,
        manifest: manifest_path,
    })
}
