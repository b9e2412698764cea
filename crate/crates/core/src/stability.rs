//! Stability metrics for discovered rubrics.
//!
//! Two questions after re-running consolidation under different seeds: did
//! the wording of each dimension stay put (cross-seed drift), and does the
//! consolidated rubric still speak the vocabulary the agents brainstormed
//! (coverage)? Both are embedding-based, so paraphrases count as close even
//! when the literal strings differ.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{embed, Backend, ResponseCache, RetryPolicy};
use crate::rubric::Rubric;
use crate::util::atomic_write;

/// Overall drift below this mean cosine distance counts as near-duplicate
/// wording across seeds.
pub const DRIFT_THRESHOLD: f64 = 0.05;

/// A brainstormed term is covered when some rubric term reaches this cosine
/// similarity.
pub const COVERAGE_THRESHOLD: f64 = 0.80;

/// Longest n-gram order used when building term vocabularies.
pub const NGRAM_MAX_ORDER: usize = 3;

/// How far same-index definitions moved between seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftReport {
    /// Mean cosine distance per dimension index, over all seed pairs.
    pub per_cluster: Vec<f64>,
    /// Mean over every (index, seed pair) distance.
    pub overall_mean: f64,
    /// Number of rubric pairs compared.
    pub seed_pairs: usize,
    pub threshold: f64,
    pub below_threshold: bool,
}

/// How much of the brainstormed vocabulary the rubric retains. Terms are
/// deduplicated n-gram types, not token occurrences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub covered_terms: usize,
    pub total_terms: usize,
    pub coverage_fraction: f64,
    pub similarity_threshold: f64,
    /// What one unit of `total_terms` is; spelled out because type vs token
    /// counting changes the numbers.
    pub term_units: String,
}

/// Measures wording drift between rubrics that share cluster indexing.
///
/// Every definition is embedded; for each dimension index, all cross-seed
/// pairs contribute a cosine distance (1 − cosine similarity). The overall
/// mean is compared against `threshold` to flag near-duplicate wording.
pub fn cross_seed_drift(
    backend: &dyn Backend,
    cache: &ResponseCache,
    retry: &RetryPolicy,
    rubrics: &[Rubric],
    threshold: f64,
) -> Result<DriftReport> {
    if rubrics.len() < 2 {
        return Err(Error::invalid("drift needs at least 2 rubrics"));
    }
    let d = rubrics[0].len();
    for (i, rubric) in rubrics.iter().enumerate() {
        if rubric.len() != d {
            return Err(Error::invalid(format!(
                "rubric {} has {} dimensions but rubric 0 has {d}; \
                 drift requires aligned cluster indices",
                i,
                rubric.len()
            )));
        }
    }

    // One flat embedding pass over every definition; the gateway
    // deduplicates repeats and caches by exact string.
    let texts: Vec<String> = rubrics
        .iter()
        .flat_map(|r| r.dimensions.iter().map(|dim| dim.definition.clone()))
        .collect();
    let vectors = embed(backend, &texts, cache, retry)?;
    let vector_of = |rubric: usize, index: usize| &vectors[rubric * d + index];

    let mut per_cluster = Vec::with_capacity(d);
    let mut all = Vec::new();
    for index in 0..d {
        let mut distances = Vec::new();
        for a in 0..rubrics.len() {
            for b in (a + 1)..rubrics.len() {
                let distance = 1.0 - vector_of(a, index).cosine(vector_of(b, index));
                distances.push(distance);
            }
        }
        per_cluster.push(distances.iter().sum::<f64>() / distances.len() as f64);
        all.extend(distances);
    }
    let overall_mean = all.iter().sum::<f64>() / all.len() as f64;
    Ok(DriftReport {
        per_cluster,
        overall_mean,
        seed_pairs: rubrics.len() * (rubrics.len() - 1) / 2,
        threshold,
        below_threshold: overall_mean < threshold,
    })
}

/// Deduplicated n-grams of orders 1 through `max_order`.
///
/// Tokens are lowercased with punctuation treated as a separator; n-grams
/// are enumerated order by order, left to right, keeping each term's first
/// occurrence.
pub fn ngrams(text: &str, max_order: usize) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    let tokens: Vec<&str> = cleaned.split_whitespace().collect();
    let mut seen = HashMap::new();
    let mut terms = Vec::new();
    for order in 1..=max_order {
        for window in tokens.windows(order) {
            let term = window.join(" ");
            if seen.insert(term.clone(), ()).is_none() {
                terms.push(term);
            }
        }
    }
    terms
}

fn rubric_texts(rubric: &Rubric) -> Vec<String> {
    rubric
        .dimensions
        .iter()
        .flat_map(|dim| {
            std::iter::once(dim.name.clone())
                .chain(std::iter::once(dim.definition.clone()))
                .chain(dim.anchors.values().map(|a| a.description.clone()))
        })
        .collect()
}

fn term_vocabulary(texts: &[String]) -> Vec<String> {
    let mut seen = HashMap::new();
    let mut terms = Vec::new();
    for text in texts {
        for term in ngrams(text, NGRAM_MAX_ORDER) {
            if seen.insert(term.clone(), ()).is_none() {
                terms.push(term);
            }
        }
    }
    terms
}

/// Fraction of brainstormed n-gram types that survive into the rubric.
///
/// Both vocabularies are n-grams of orders 1 to 3 over names, definitions,
/// and anchors. A brainstorm term counts as covered when its best cosine
/// similarity against any rubric term reaches `threshold`.
pub fn vocabulary_coverage(
    backend: &dyn Backend,
    cache: &ResponseCache,
    retry: &RetryPolicy,
    brainstorm_texts: &[String],
    rubric: &Rubric,
    threshold: f64,
) -> Result<CoverageReport> {
    if brainstorm_texts.is_empty() {
        return Err(Error::invalid("coverage needs at least one brainstorm text"));
    }
    let brainstorm_terms = term_vocabulary(brainstorm_texts);
    let rubric_terms = term_vocabulary(&rubric_texts(rubric));
    if brainstorm_terms.is_empty() {
        return Err(Error::invalid("brainstorm texts contain no tokens"));
    }

    let mut batch: Vec<String> = brainstorm_terms.clone();
    batch.extend(rubric_terms.iter().cloned());
    let vectors = embed(backend, &batch, cache, retry)?;
    let (brainstorm_vectors, rubric_vectors) = vectors.split_at(brainstorm_terms.len());

    let mut covered = 0;
    for vector in brainstorm_vectors {
        let mut best = f64::NEG_INFINITY;
        for other in rubric_vectors {
            best = best.max(vector.cosine(other));
        }
        if best >= threshold {
            covered += 1;
        }
    }
    Ok(CoverageReport {
        covered_terms: covered,
        total_terms: brainstorm_terms.len(),
        coverage_fraction: covered as f64 / brainstorm_terms.len() as f64,
        similarity_threshold: threshold,
        term_units: "deduplicated n-gram types (orders 1-3)".to_string(),
    })
}

/// Writes per-cluster drift as CSV, ending with the overall row.
pub fn write_drift_csv(report: &DriftReport, path: &Path) -> Result<()> {
    let mut out = String::from("cluster_index,mean_cosine_distance\n");
    for (index, mean) in report.per_cluster.iter().enumerate() {
        out.push_str(&format!("{index},{mean:.12}\n"));
    }
    out.push_str(&format!("overall,{:.12}\n", report.overall_mean));
    atomic_write(path, out.as_bytes())
}

/// Writes one coverage row per report; several thresholds stack into a
/// sweep table.
pub fn write_coverage_csv(reports: &[CoverageReport], path: &Path) -> Result<()> {
    let mut out =
        String::from("similarity_threshold,covered_terms,total_terms,coverage_fraction,term_units\n");
    for report in reports {
        out.push_str(&format!(
            "{:.2},{},{},{:.12},{}\n",
            report.similarity_threshold,
            report.covered_terms,
            report.total_terms,
            report.coverage_fraction,
            report.term_units
        ));
    }
    atomic_write(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::llm::MockBackend;
    use crate::rubric::{Anchor, RubricDimension};

    fn rubric_with_definitions(definitions: &[&str]) -> Rubric {
        let dims = definitions
            .iter()
            .enumerate()
            .map(|(i, definition)| RubricDimension {
                name: format!("Dimension {i}"),
                definition: definition.to_string(),
                anchors: BTreeMap::from([
                    (1, Anchor { description: format!("low {i}"), examples: vec![] }),
                    (3, Anchor { description: format!("mid {i}"), examples: vec![] }),
                    (5, Anchor { description: format!("high {i}"), examples: vec![] }),
                ]),
                source_cluster: Vec::new(),
            })
            .collect();
        Rubric::new(dims, 0, "test").unwrap()
    }

    fn harness() -> (MockBackend, tempfile::TempDir, RetryPolicy) {
        (MockBackend::new(5), tempfile::tempdir().unwrap(), RetryPolicy::none())
    }

    #[test]
    fn ngrams_enumerate_each_order_left_to_right() {
        assert_eq!(
            ngrams("clear and specific", 3),
            vec![
                "clear",
                "and",
                "specific",
                "clear and",
                "and specific",
                "clear and specific"
            ]
        );
    }

    #[test]
    fn ngrams_handle_boundaries_punctuation_and_repeats() {
        assert_eq!(ngrams("Word", 3), vec!["word"]);
        assert_eq!(ngrams("good good", 3), vec!["good", "good good"]);
        assert!(ngrams("", 3).is_empty());
        assert!(ngrams("!!! ...", 3).is_empty());
        assert_eq!(
            ngrams("Well-timed, clear!", 2),
            vec!["well", "timed", "clear", "well timed", "timed clear"]
        );
    }

    #[test]
    fn identical_rubrics_have_zero_drift_below_threshold() {
        let (backend, dir, retry) = harness();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let rubric = rubric_with_definitions(&["clarity of advice", "urgency of tone"]);
        let rubrics = vec![rubric; 5];
        let report =
            cross_seed_drift(&backend, &cache, &retry, &rubrics, DRIFT_THRESHOLD).unwrap();
        assert_eq!(report.seed_pairs, 10);
        assert_eq!(report.per_cluster.len(), 2);
        for mean in &report.per_cluster {
            assert!(mean.abs() < 1e-9, "per-cluster drift {mean}");
        }
        assert!(report.overall_mean.abs() < 1e-9);
        assert!(report.below_threshold);
    }

    #[test]
    fn a_replaced_definition_moves_only_its_own_index() {
        let (backend, dir, retry) = harness();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let a = rubric_with_definitions(&["clarity of advice", "urgency of tone"]);
        let b = rubric_with_definitions(&["clarity of advice", "migratory patterns of geese"]);
        let report = cross_seed_drift(&backend, &cache, &retry, &[a, b], 0.05).unwrap();
        assert!(report.per_cluster[0].abs() < 1e-9, "{}", report.per_cluster[0]);
        assert!(report.per_cluster[1] >= 0.5, "{}", report.per_cluster[1]);
        assert!(!report.below_threshold);
        for mean in &report.per_cluster {
            assert!((0.0..=2.0).contains(mean));
        }
    }

    #[test]
    fn drift_is_symmetric_in_rubric_order() {
        let (backend, dir, retry) = harness();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let a = rubric_with_definitions(&["one thing", "another thing"]);
        let b = rubric_with_definitions(&["one thing reworded", "another thing reworded"]);
        let c = rubric_with_definitions(&["a third wording", "yet another wording"]);
        let forward =
            cross_seed_drift(&backend, &cache, &retry, &[a.clone(), b.clone(), c.clone()], 0.05)
                .unwrap();
        let backward = cross_seed_drift(&backend, &cache, &retry, &[c, b, a], 0.05).unwrap();
        // Same pair set, so equal up to summation order.
        for (f, b) in forward.per_cluster.iter().zip(&backward.per_cluster) {
            assert!((f - b).abs() < 1e-12, "{f} vs {b}");
        }
        assert!((forward.overall_mean - backward.overall_mean).abs() < 1e-12);
    }

    #[test]
    fn drift_follows_a_consistent_dimension_permutation() {
        let (backend, dir, retry) = harness();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let a = rubric_with_definitions(&["alpha text", "beta text", "gamma text"]);
        let b = rubric_with_definitions(&["alpha reworded", "beta reworded", "gamma text"]);
        let report = cross_seed_drift(&backend, &cache, &retry, &[a, b], 0.05).unwrap();

        let a_swapped = rubric_with_definitions(&["gamma text", "beta text", "alpha text"]);
        let b_swapped = rubric_with_definitions(&["gamma text", "beta reworded", "alpha reworded"]);
        let swapped =
            cross_seed_drift(&backend, &cache, &retry, &[a_swapped, b_swapped], 0.05).unwrap();

        assert_eq!(report.per_cluster[0], swapped.per_cluster[2]);
        assert_eq!(report.per_cluster[1], swapped.per_cluster[1]);
        assert_eq!(report.per_cluster[2], swapped.per_cluster[0]);
        assert!((report.overall_mean - swapped.overall_mean).abs() < 1e-15);
    }

    #[test]
    fn misaligned_rubrics_are_rejected() {
        let (backend, dir, retry) = harness();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let a = rubric_with_definitions(&["one", "two"]);
        let b = rubric_with_definitions(&["one", "two", "three"]);
        assert!(cross_seed_drift(&backend, &cache, &retry, &[a.clone(), b], 0.05).is_err());
        assert!(cross_seed_drift(&backend, &cache, &retry, &[a], 0.05).is_err());
    }

    #[test]
    fn rubric_text_covering_itself_reaches_full_coverage() {
        let (backend, dir, retry) = harness();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let rubric = rubric_with_definitions(&["clear actionable advice", "timely delivery"]);
        let brainstorm = rubric_texts(&rubric);
        let report =
            vocabulary_coverage(&backend, &cache, &retry, &brainstorm, &rubric, 0.80).unwrap();
        assert_eq!(report.covered_terms, report.total_terms);
        assert_eq!(report.coverage_fraction, 1.0);
        assert!(report.total_terms > 10);
    }

    #[test]
    fn disjoint_vocabularies_have_zero_coverage() {
        let (backend, dir, retry) = harness();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let rubric = rubric_with_definitions(&["suture tension control", "needle angle"]);
        let brainstorm = vec![
            "harmonic oscillation frequency".to_string(),
            "chromatic aberration budget".to_string(),
        ];
        let report =
            vocabulary_coverage(&backend, &cache, &retry, &brainstorm, &rubric, 0.80).unwrap();
        assert_eq!(report.covered_terms, 0);
        assert_eq!(report.coverage_fraction, 0.0);
    }

    #[test]
    fn coverage_is_monotone_nonincreasing_in_threshold() {
        let (backend, dir, retry) = harness();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let rubric = rubric_with_definitions(&["clear actionable advice"]);
        let brainstorm = vec![
            "clear actionable advice".to_string(),
            "unrelated musings about weather".to_string(),
        ];
        let mut previous = usize::MAX;
        for step in 0..=10 {
            let threshold = step as f64 / 10.0;
            let report =
                vocabulary_coverage(&backend, &cache, &retry, &brainstorm, &rubric, threshold)
                    .unwrap();
            assert!(
                report.covered_terms <= previous,
                "coverage rose from {previous} to {} at threshold {threshold}",
                report.covered_terms
            );
            previous = report.covered_terms;
        }
    }

    #[test]
    fn every_embedded_term_is_self_similar() {
        let (backend, _dir, _retry) = harness();
        for term in ["clarity", "needle angle", "overall bearing"] {
            let vector = &backend.embed(&[term.to_string()]).unwrap()[0];
            assert!((1.0_f64 - vector.cosine(vector)).abs() < 1e-9);
        }
    }

    #[test]
    fn embedding_requests_hit_the_cache_per_unique_term() {
        let (backend, dir, retry) = harness();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let rubric = rubric_with_definitions(&["good good good"]);
        let brainstorm = vec!["good good good good".to_string()];
        vocabulary_coverage(&backend, &cache, &retry, &brainstorm, &rubric, 0.80).unwrap();
        // Heavy repetition collapses to few unique terms, each cached once.
        let entries = walk_count(&dir.path().join("embeddings"));
        let unique = term_vocabulary(&brainstorm)
            .into_iter()
            .chain(term_vocabulary(&rubric_texts(&rubric)))
            .collect::<std::collections::HashSet<_>>()
            .len();
        assert_eq!(entries, unique);
    }

    fn walk_count(dir: &Path) -> usize {
        let mut count = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                count += walk_count(&path);
            } else {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn drift_and_coverage_reports_write_csv_tables() {
        let (backend, dir, retry) = harness();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let a = rubric_with_definitions(&["one thing", "another"]);
        let b = rubric_with_definitions(&["one thing", "something else"]);
        let report = cross_seed_drift(&backend, &cache, &retry, &[a, b.clone()], 0.05).unwrap();
        let drift_path = dir.path().join("drift.csv");
        write_drift_csv(&report, &drift_path).unwrap();
        let text = std::fs::read_to_string(&drift_path).unwrap();
        assert!(text.starts_with("cluster_index,mean_cosine_distance\n0,"));
        assert!(text.lines().last().unwrap().starts_with("overall,"));

        let reports: Vec<CoverageReport> = [0.5, 0.8]
            .iter()
            .map(|&t| {
                vocabulary_coverage(&backend, &cache, &retry, &["one thing".to_string()], &b, t)
                    .unwrap()
            })
            .collect();
        let coverage_path = dir.path().join("coverage.csv");
        write_coverage_csv(&reports, &coverage_path).unwrap();
        let text = std::fs::read_to_string(&coverage_path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("types"), "term units noted in the table: {text}");
    }
}
