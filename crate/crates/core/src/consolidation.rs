//! Turns a pile of candidate criteria into a compact rubric.
//!
//! The route: score every candidate over the corpus, correlate the score
//! columns (Spearman), cluster criteria whose scores move together (single
//! linkage), pick the cluster count by silhouette, and have one
//! deterministic completion per cluster phrase the unified dimension. The
//! clustering operates on scoring behavior, not on wording, so two
//! differently phrased criteria that measure the same thing land in the
//! same cluster.

use std::collections::HashMap;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::judge::{score_corpus, JudgeConfig, ScoreFailure};
use crate::llm::{
    complete, parse_consolidated_tuple, parse_criteria_rows, render_anchor_prompt,
    render_consolidation_prompt, Backend, CacheKey, CompletionRequest, ResponseCache, RetryPolicy,
};
use crate::rubric::{Anchor, CandidateCriterion, Rubric, RubricDimension, ANCHOR_LEVELS};
use crate::scores::ScoreMatrix;
use crate::stats::spearman_rho;
use crate::util::{atomic_write, parallel_map};

/// Scores every candidate criterion over the full corpus.
///
/// Candidates are grouped by proposing agent and each group is applied as
/// its own rubric, so one request carries one instance and one agent's
/// criteria. Output columns follow the input criteria order regardless of
/// grouping; instances that failed for one agent stay masked in that
/// agent's columns only.
pub fn score_candidates(
    backend: &dyn Backend,
    cache: &ResponseCache,
    config: &JudgeConfig,
    corpus: &Corpus,
    criteria: &[CandidateCriterion],
) -> Result<(ScoreMatrix, Vec<ScoreFailure>)> {
    let column_names = Rubric::from_candidates(criteria)?.dimension_names();
    let mut matrix = ScoreMatrix::new(corpus.ids(), corpus.case_ids(), column_names)?;

    // Group while remembering each candidate's input position.
    let mut groups: Vec<(usize, Vec<(usize, &CandidateCriterion)>)> = Vec::new();
    for (index, candidate) in criteria.iter().enumerate() {
        match groups.iter_mut().find(|(agent, _)| *agent == candidate.agent_id) {
            Some((_, members)) => members.push((index, candidate)),
            None => groups.push((candidate.agent_id, vec![(index, candidate)])),
        }
    }

    let mut failures = Vec::new();
    for (agent_id, members) in groups {
        let group: Vec<CandidateCriterion> =
            members.iter().map(|(_, c)| (*c).clone()).collect();
        let rubric = Rubric::from_candidates(&group)?;
        let (group_matrix, group_failures) =
            score_corpus(backend, cache, config, &rubric, corpus, "candidates")?;
        for (group_col, (input_col, _)) in members.iter().enumerate() {
            for row in 0..corpus.len() {
                if let Some(value) = group_matrix.get(row, group_col) {
                    matrix.set(row, *input_col, value)?;
                }
            }
        }
        failures.extend(group_failures.into_iter().map(|f| ScoreFailure {
            instance_id: f.instance_id,
            message: format!("agent {agent_id} criteria: {}", f.message),
        }));
    }
    Ok((matrix, failures))
}

/// How rows with masked cells enter the correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Each column pair uses every row unmasked in both columns.
    #[default]
    Pairwise,
    /// Only rows unmasked in every column are used anywhere.
    Listwise,
}

/// Symmetric Spearman correlation matrix over score columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub dimension_ids: Vec<String>,
    /// Row-major symmetric matrix with unit diagonal.
    pub values: Vec<Vec<f64>>,
    /// Columns that had zero variance on some comparison subset; their
    /// correlations are reported as 0.
    pub zero_variance: Vec<usize>,
}

/// Spearman correlation between all column pairs of a score matrix.
///
/// The diagonal is exactly 1. A column with zero variance on a comparison
/// subset gets correlation 0 there and is flagged rather than erroring,
/// since one degenerate candidate must not sink the whole consolidation.
pub fn spearman_correlation_matrix(
    scores: &ScoreMatrix,
    policy: MissingPolicy,
) -> Result<CorrelationMatrix> {
    let d = scores.n_dimensions();
    if d < 2 {
        return Err(Error::invalid(
            "correlation matrix needs at least 2 score columns",
        ));
    }
    let columns: Vec<Vec<Option<u8>>> = (0..d).map(|c| scores.column(c)).collect();
    let listwise_rows: Vec<usize> = (0..scores.n_instances())
        .filter(|&row| columns.iter().all(|col| col[row].is_some()))
        .collect();

    let mut values = vec![vec![0.0; d]; d];
    let mut zero_variance = Vec::new();
    for i in 0..d {
        values[i][i] = 1.0;
        for j in (i + 1)..d {
            let (xs, ys): (Vec<f64>, Vec<f64>) = match policy {
                MissingPolicy::Pairwise => (0..scores.n_instances())
                    .filter_map(|row| match (columns[i][row], columns[j][row]) {
                        (Some(a), Some(b)) => Some((a as f64, b as f64)),
                        _ => None,
                    })
                    .unzip(),
                MissingPolicy::Listwise => listwise_rows
                    .iter()
                    .map(|&row| {
                        (
                            columns[i][row].unwrap() as f64,
                            columns[j][row].unwrap() as f64,
                        )
                    })
                    .unzip(),
            };
            if xs.len() < 3 {
                return Err(Error::degenerate(format!(
                    "columns {} and {} share only {} unmasked rows; need at least 3",
                    scores.dimension_ids()[i],
                    scores.dimension_ids()[j],
                    xs.len()
                )));
            }
            let x_constant = xs.iter().all(|&v| v == xs[0]);
            let y_constant = ys.iter().all(|&v| v == ys[0]);
            if x_constant || y_constant {
                if x_constant {
                    zero_variance.push(i);
                }
                if y_constant {
                    zero_variance.push(j);
                }
                continue; // entry stays 0
            }
            let rho = spearman_rho(&xs, &ys)?;
            values[i][j] = rho;
            values[j][i] = rho;
        }
    }
    zero_variance.sort_unstable();
    zero_variance.dedup();
    Ok(CorrelationMatrix {
        dimension_ids: scores.dimension_ids().to_vec(),
        values,
        zero_variance,
    })
}

/// One agglomerative merge. Cluster ids follow the usual convention:
/// leaves are 0..n, and the i-th merge creates cluster n+i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Full pairwise Euclidean distance matrix over feature rows.
pub fn pairwise_euclidean(features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = features.len();
    if n == 0 {
        return Err(Error::invalid("no feature rows"));
    }
    let width = features[0].len();
    for (i, row) in features.iter().enumerate() {
        if row.len() != width {
            return Err(Error::invalid(format!(
                "feature row {i} has {} entries, expected {width}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature row {i} has non-finite entries")));
        }
    }
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(&features[i], &features[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    Ok(dist)
}

/// Single-linkage agglomerative clustering from a precomputed distance
/// matrix. Ties are broken toward the lowest cluster-id pair, so the merge
/// sequence is deterministic.
pub fn single_linkage_from_distances(dist: &[Vec<f64>]) -> Result<Dendrogram> {
    let n = dist.len();
    if n < 2 {
        return Err(Error::invalid("clustering needs at least 2 rows"));
    }
    for (i, row) in dist.iter().enumerate() {
        if row.len() != n {
            return Err(Error::invalid(format!(
                "distance matrix row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
    }
    // Active clusters as (id, member leaves). Single linkage between two
    // clusters is the minimum leaf-to-leaf distance.
    let mut active: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::with_capacity(n - 1);
    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..active.len() {
            for b in (a + 1)..active.len() {
                let d = active[a]
                    .1
                    .iter()
                    .flat_map(|&p| active[b].1.iter().map(move |&q| dist[p][q]))
                    .fold(f64::INFINITY, f64::min);
                let (lo, hi) = (
                    active[a].0.min(active[b].0),
                    active[a].0.max(active[b].0),
                );
                let replace = match best {
                    None => true,
                    Some((bd, bl, bh)) => d < bd || (d == bd && (lo < bl || (lo == bl && hi < bh))),
                };
                if replace {
                    best = Some((d, lo, hi));
                }
            }
        }
        let (height, left, right) = best.expect("at least one pair");
        let pos_a = active.iter().position(|(id, _)| *id == left).unwrap();
        let pos_b = active.iter().position(|(id, _)| *id == right).unwrap();
        let (first, second) = (pos_a.min(pos_b), pos_a.max(pos_b));
        let (_, members_b) = active.remove(second);
        let (_, mut members_a) = active.remove(first);
        members_a.extend(members_b);
        active.push((n + merges.len(), members_a));
        merges.push(Merge { left, right, height });
    }
    Ok(Dendrogram { n_leaves: n, merges })
}

/// Single-linkage clustering of feature rows under Euclidean distance.
pub fn single_linkage_cluster(features: &[Vec<f64>]) -> Result<Dendrogram> {
    single_linkage_from_distances(&pairwise_euclidean(features)?)
}

/// Cuts the dendrogram into exactly `k` clusters. Labels are normalized to
/// 0..k in order of first appearance over the leaves.
pub fn cut_dendrogram(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dendrogram.n_leaves;
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot cut {n} leaves into {k} clusters")));
    }
    // Apply the first n-k merges with a union-find over cluster ids.
    let mut parent: Vec<usize> = (0..n + dendrogram.merges.len()).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (i, merge) in dendrogram.merges.iter().take(n - k).enumerate() {
        let target = n + i;
        let l = find(&mut parent, merge.left);
        let r = find(&mut parent, merge.right);
        parent[l] = target;
        parent[r] = target;
    }
    let mut labels = Vec::with_capacity(n);
    let mut seen: HashMap<usize, usize> = HashMap::new();
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let next = seen.len();
        labels.push(*seen.entry(root).or_insert(next));
    }
    Ok(labels)
}

/// Mean silhouette of a labeled partition under a precomputed distance
/// matrix. Points in singleton clusters contribute 0.
pub fn mean_silhouette(dist: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = labels.len();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &label in labels {
        sizes[label] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if sizes[own] == 1 {
            continue; // silhouette 0 by convention
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist[i][j];
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Chosen cluster count plus the scores it was chosen from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KSelection {
    pub k_best: usize,
    /// (k, mean silhouette) for every k evaluated, in ascending k.
    pub table: Vec<(usize, f64)>,
}

/// Evaluates dendrogram cuts over `k_range` (default 2..=min(10, n−1)) and
/// returns the k with the highest mean silhouette, ties going to the
/// smallest k.
pub fn select_k_by_silhouette_from_distances(
    dendrogram: &Dendrogram,
    dist: &[Vec<f64>],
    k_range: Option<RangeInclusive<usize>>,
) -> Result<KSelection> {
    let n = dendrogram.n_leaves;
    if n < 3 {
        return Err(Error::invalid(
            "silhouette selection needs at least 3 rows (k must satisfy 2 <= k <= n-1)",
        ));
    }
    let range = k_range.unwrap_or(2..=10.min(n - 1));
    let (lo, hi) = (*range.start(), *range.end());
    if lo < 2 || hi > n - 1 || lo > hi {
        return Err(Error::invalid(format!(
            "k range {lo}..={hi} outside the valid 2..={} for {n} rows",
            n - 1
        )));
    }
    let mut table = Vec::with_capacity(hi - lo + 1);
    let mut best: Option<(usize, f64)> = None;
    for k in lo..=hi {
        let labels = cut_dendrogram(dendrogram, k)?;
        let score = mean_silhouette(dist, &labels);
        table.push((k, score));
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((k, score));
        }
    }
    let (k_best, _) = best.expect("range nonempty");
    Ok(KSelection { k_best, table })
}

/// Silhouette-based k selection in a Euclidean feature space.
pub fn select_k_by_silhouette(
    dendrogram: &Dendrogram,
    features: &[Vec<f64>],
    k_range: Option<RangeInclusive<usize>>,
) -> Result<KSelection> {
    select_k_by_silhouette_from_distances(dendrogram, &pairwise_euclidean(features)?, k_range)
}

/// The geometry criteria are clustered in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterFeatureSpace {
    /// Each criterion is its row of the correlation matrix; Euclidean
    /// distance between rows.
    #[default]
    CorrelationRows,
    /// Distance directly 1 − ρ between criteria.
    OneMinusRho,
}

/// Outcome of clustering the candidate criteria.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSelection {
    pub k_best: usize,
    /// Cluster label per criterion, 0-based, normalized by first appearance.
    pub labels: Vec<usize>,
    pub silhouette: Vec<(usize, f64)>,
    pub dendrogram: Dendrogram,
    pub feature_space: ClusterFeatureSpace,
}

/// Clusters criteria by their correlation structure and picks k by
/// silhouette, in the configured feature space.
pub fn cluster_candidates(
    corr: &CorrelationMatrix,
    space: ClusterFeatureSpace,
    k_range: Option<RangeInclusive<usize>>,
) -> Result<ClusterSelection> {
    let dist = match space {
        ClusterFeatureSpace::CorrelationRows => pairwise_euclidean(&corr.values)?,
        ClusterFeatureSpace::OneMinusRho => {
            let n = corr.values.len();
            let mut dist = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        dist[i][j] = (1.0 - corr.values[i][j]).max(0.0);
                    }
                }
            }
            dist
        }
    };
    let dendrogram = single_linkage_from_distances(&dist)?;
    let selection = select_k_by_silhouette_from_distances(&dendrogram, &dist, k_range)?;
    let labels = cut_dendrogram(&dendrogram, selection.k_best)?;
    Ok(ClusterSelection {
        k_best: selection.k_best,
        labels,
        silhouette: selection.table,
        dendrogram,
        feature_space: space,
    })
}

/// Groups criteria by cluster label, clusters ordered by label.
pub fn group_criteria(
    criteria: &[CandidateCriterion],
    labels: &[usize],
) -> Result<Vec<Vec<CandidateCriterion>>> {
    if criteria.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} criteria but {} labels",
            criteria.len(),
            labels.len()
        )));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut clusters = vec![Vec::new(); k];
    for (criterion, &label) in criteria.iter().zip(labels) {
        clusters[label].push(criterion.clone());
    }
    Ok(clusters)
}

pub struct ConsolidationConfig {
    pub model_id: String,
    /// Deterministic phrasing calls; 0.0 unless deliberately overridden.
    pub temperature: f64,
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl ConsolidationConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: 0.0,
            parallelism: 8,
            retry: RetryPolicy::default(),
        }
    }
}

/// Cache-key digests of one cluster's two completions, for run manifests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterCacheKeys {
    pub consolidation: String,
    pub anchors: String,
}

/// A consolidated rubric plus anything worth telling the operator.
#[derive(Debug, Clone)]
pub struct ConsolidationOutcome {
    pub rubric: Rubric,
    pub warnings: Vec<String>,
    /// One entry per input cluster, in cluster order.
    pub cache_keys: Vec<ClusterCacheKeys>,
}

/// Unifies each cluster into one rubric dimension.
///
/// Per cluster, one completion phrases the consolidated name and definition
/// (parsed as a single tuple) and a follow-up completion writes the level
/// anchors in the same row format discovery uses, so one parser serves
/// both. Colliding names get a numeric suffix and a warning rather than an
/// error, since distinct clusters may legitimately converge on a word.
pub fn consolidate_clusters(
    backend: &dyn Backend,
    cache: &ResponseCache,
    config: &ConsolidationConfig,
    clusters: &[Vec<CandidateCriterion>],
    seed: u64,
    manifest_ref: &str,
) -> Result<ConsolidationOutcome> {
    if clusters.is_empty() {
        return Err(Error::invalid("no clusters to consolidate"));
    }
    for (i, cluster) in clusters.iter().enumerate() {
        if cluster.is_empty() {
            return Err(Error::invalid(format!("cluster {} is empty", i + 1)));
        }
    }

    let results = parallel_map(clusters, config.parallelism, |index, cluster| {
        consolidate_one(backend, cache, config, index + 1, cluster)
    });

    let mut warnings = Vec::new();
    let mut dimensions: Vec<RubricDimension> = Vec::with_capacity(clusters.len());
    let mut cache_keys = Vec::with_capacity(clusters.len());
    for result in results {
        let (mut dimension, keys) = result?;
        cache_keys.push(keys);
        let base = dimension.name.clone();
        let mut suffix = 2;
        while dimensions.iter().any(|d| d.name == dimension.name) {
            dimension.name = format!("{base} ({suffix})");
            suffix += 1;
        }
        if dimension.name != base {
            warnings.push(format!(
                "consolidated name \"{base}\" already taken; renamed to \"{}\"",
                dimension.name
            ));
        }
        dimensions.push(dimension);
    }
    Ok(ConsolidationOutcome {
        rubric: Rubric::new(dimensions, seed, manifest_ref)?,
        warnings,
        cache_keys,
    })
}

fn consolidate_one(
    backend: &dyn Backend,
    cache: &ResponseCache,
    config: &ConsolidationConfig,
    cluster_no: usize,
    cluster: &[CandidateCriterion],
) -> Result<(RubricDimension, ClusterCacheKeys)> {
    let members: Vec<(String, String)> = cluster
        .iter()
        .map(|c| (c.name.clone(), c.definition.clone()))
        .collect();
    let messages = render_consolidation_prompt(&members)?;
    let request = CompletionRequest::new(&config.model_id, config.temperature, messages.to_vec())?;
    let tag = format!("cluster{cluster_no}");
    let consolidation_key = CacheKey::for_request(backend.id(), &request, &tag).digest;
    let response = complete(backend, &request, &tag, cache, &config.retry)?;
    let (_, name, definition) = parse_consolidated_tuple(&response.text).map_err(|e| {
        Error::Scoring {
            instance_id: format!("cluster {cluster_no}"),
            message: format!("consolidation reply unusable: {e}"),
        }
    })?;

    let anchor_messages = render_anchor_prompt(&name, &definition)?;
    let anchor_request =
        CompletionRequest::new(&config.model_id, config.temperature, anchor_messages.to_vec())?;
    let anchor_tag = format!("cluster{cluster_no}-anchors");
    let anchors_key = CacheKey::for_request(backend.id(), &anchor_request, &anchor_tag).digest;
    let anchor_response = complete(backend, &anchor_request, &anchor_tag, cache, &config.retry)?;
    let parsed = parse_criteria_rows(&anchor_response.text).map_err(|e| Error::Scoring {
        instance_id: format!("cluster {cluster_no}"),
        message: format!("anchor reply unusable: {e}"),
    })?;
    let row = parsed.rows.first().ok_or_else(|| Error::Scoring {
        instance_id: format!("cluster {cluster_no}"),
        message: "anchor reply parsed to zero rows".to_string(),
    })?;

    let anchors = [
        (1u8, row.anchor1.clone()),
        (3, row.anchor3.clone()),
        (5, row.anchor5.clone()),
    ]
    .into_iter()
    .map(|(level, description)| (level, Anchor { description, examples: Vec::new() }))
    .collect();

    Ok((
        RubricDimension {
            name,
            definition,
            anchors,
            source_cluster: cluster.to_vec(),
        },
        ClusterCacheKeys { consolidation: consolidation_key, anchors: anchors_key },
    ))
}

/// Attaches consensus feedback examples to rubric anchors.
///
/// Each entry is (dimension name, anchor level, feedback text). At most two
/// additions per (dimension, level) are accepted; the rest are reported
/// back. Unknown dimension names are an error, unknown levels too.
pub fn merge_calibration_examples(
    rubric: &Rubric,
    additions: &[(String, u8, String)],
) -> Result<(Rubric, Vec<String>)> {
    let mut merged = rubric.clone();
    let mut accepted: HashMap<(usize, u8), usize> = HashMap::new();
    let mut rejected = Vec::new();
    for (name, level, text) in additions {
        if !ANCHOR_LEVELS.contains(level) {
            return Err(Error::invalid(format!(
                "anchor level {level} is not one of 1, 3, 5"
            )));
        }
        let index = merged
            .dimensions
            .iter()
            .position(|d| &d.name == name)
            .ok_or_else(|| {
                Error::invalid(format!("unknown rubric dimension \"{name}\""))
            })?;
        let count = accepted.entry((index, *level)).or_insert(0);
        if *count >= 2 {
            rejected.push(format!(
                "dimension \"{name}\" anchor {level}: already has 2 new examples, \
                 dropping {text:?}"
            ));
            continue;
        }
        *count += 1;
        merged.dimensions[index]
            .anchors
            .get_mut(level)
            .expect("anchor levels validated at construction")
            .examples
            .push(text.clone());
    }
    Ok((merged, rejected))
}

/// Writes the correlation matrix as CSV: header row of dimension ids, then
/// one row per dimension with its id in the first column.
pub fn write_correlation_csv(corr: &CorrelationMatrix, path: &Path) -> Result<()> {
    let mut out = String::from("dimension");
    for id in &corr.dimension_ids {
        out.push(',');
        out.push_str(&csv_quote(id));
    }
    out.push('\n');
    for (id, row) in corr.dimension_ids.iter().zip(&corr.values) {
        out.push_str(&csv_quote(id));
        for value in row {
            out.push_str(&format!(",{value:.12}"));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Writes the silhouette table as CSV with the selected k marked.
pub fn write_silhouette_csv(selection: &ClusterSelection, path: &Path) -> Result<()> {
    let mut out = String::from("k,mean_silhouette,selected\n");
    for (k, score) in &selection.silhouette {
        out.push_str(&format!(
            "{k},{score:.12},{}\n",
            if *k == selection.k_best { 1 } else { 0 }
        ));
    }
    atomic_write(path, out.as_bytes())
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::corpus::FeedbackInstance;
    use crate::llm::{render_scoring_prompt, ChatMessage, MockBackend};
    use crate::util::rng_from;
    use rand::Rng;

    fn candidate(agent_id: usize, ordinal: u32, stem: &str) -> CandidateCriterion {
        CandidateCriterion {
            agent_id,
            ordinal,
            name: {
                let mut chars = stem.chars();
                let first = chars.next().unwrap().to_uppercase().to_string();
                first + chars.as_str()
            },
            definition: format!("Measures whether the feedback conveys {stem}."),
            anchors: BTreeMap::from([
                (1, format!("No {stem}")),
                (3, format!("Some {stem}")),
                (5, format!("Strong {stem}")),
            ]),
        }
    }

    fn corpus_of(texts: &[String]) -> Corpus {
        let instances = texts
            .iter()
            .enumerate()
            .map(|(i, text)| FeedbackInstance {
                id: format!("i{i:03}"),
                case_id: format!("case{}", i / 4),
                text: text.clone(),
                outcomes: None,
                external_features: None,
            })
            .collect();
        Corpus::new(instances, "test").unwrap()
    }

    fn judge_config() -> JudgeConfig {
        let mut config = JudgeConfig::new("mock-model");
        config.retry = RetryPolicy::none();
        config
    }

    #[test]
    fn candidate_scores_follow_input_column_order_across_agents() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let criteria = vec![
            candidate(1, 1, "clarity"),
            candidate(2, 1, "urgency"),
            candidate(1, 2, "warmth"),
        ];
        let texts = vec![
            "The feedback shows exceptional clarity, weak urgency, adequate warmth.".to_string(),
            "The feedback shows absent clarity, strong urgency, weak warmth.".to_string(),
            "The feedback shows adequate clarity, adequate urgency, exceptional warmth."
                .to_string(),
        ];
        let corpus = corpus_of(&texts);
        let backend = MockBackend::new(1);

        let (matrix, failures) =
            score_candidates(&backend, &cache, &judge_config(), &corpus, &criteria).unwrap();
        assert!(failures.is_empty());
        assert_eq!(matrix.dimension_ids()[0], "Clarity [a1c1]");
        assert_eq!(matrix.dimension_ids()[1], "Urgency [a2c1]");
        assert_eq!(matrix.dimension_ids()[2], "Warmth [a1c2]");
        let expected = [[5, 2, 3], [1, 4, 2], [3, 3, 5]];
        for (row, want) in expected.iter().enumerate() {
            for (col, &value) in want.iter().enumerate() {
                assert_eq!(matrix.get(row, col), Some(value), "row {row} col {col}");
            }
        }
    }

    #[test]
    fn a_failing_agent_group_masks_only_its_own_columns() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let mut config = judge_config();
        config.failure_cap = 0.5;
        let criteria = vec![candidate(1, 1, "clarity"), candidate(2, 1, "urgency")];
        let texts: Vec<String> = (0..4)
            .map(|i| format!("The feedback shows weak clarity, strong urgency, line {i}."))
            .collect();
        let corpus = corpus_of(&texts);

        // Script garbage for agent 2's request on instance 1, including the
        // re-ask, so that row fails for agent 2 only.
        let group2 = Rubric::from_candidates(&[criteria[1].clone()]).unwrap();
        let messages = render_scoring_prompt(&group2, &corpus.instances()[1].text).unwrap();
        let req1 =
            CompletionRequest::new(&config.model_id, 0.0, messages.to_vec()).unwrap();
        let mut reask = req1.messages.clone();
        reask.push(ChatMessage::user(
            "Your previous reply was:\nnot numbers\nIt could not be parsed. Reply with \
             exactly 1 comma-separated integers between 1 and 5 and nothing else.",
        ));
        let req2 = CompletionRequest::new(&config.model_id, 0.0, reask).unwrap();
        let backend = MockBackend::new(1).with_scenario(HashMap::from([
            (MockBackend::request_fingerprint(&req1), "not numbers".to_string()),
            (MockBackend::request_fingerprint(&req2), "still words".to_string()),
        ]));

        let (matrix, failures) =
            score_candidates(&backend, &cache, &config, &corpus, &criteria).unwrap();
        assert_eq!(failures.len(), 1);
        assert!(failures[0].message.contains("agent 2"), "{}", failures[0].message);
        assert_eq!(matrix.get(1, 0), Some(2), "agent 1 column still scored");
        assert!(matrix.is_masked(1, 1), "agent 2 column masked");
        assert_eq!(matrix.get(0, 1), Some(4), "other rows unaffected");
    }

    #[test]
    fn empty_candidate_list_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let corpus = corpus_of(&["one line".to_string()]);
        let backend = MockBackend::new(1);
        assert!(score_candidates(&backend, &cache, &judge_config(), &corpus, &[]).is_err());
    }

    fn matrix_from(columns: &[Vec<u8>]) -> ScoreMatrix {
        let n = columns[0].len();
        let ids: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        let cases: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let dims: Vec<String> = (0..columns.len()).map(|d| format!("d{d}")).collect();
        let mut matrix = ScoreMatrix::new(ids, cases, dims).unwrap();
        for (col, values) in columns.iter().enumerate() {
            for (row, &value) in values.iter().enumerate() {
                matrix.set(row, col, value).unwrap();
            }
        }
        matrix
    }

    #[test]
    fn correlation_matrix_handles_identity_reversal_and_ties() {
        let matrix = matrix_from(&[
            vec![1, 2, 2, 4],
            vec![1, 2, 2, 4],
            vec![4, 2, 2, 1],
            vec![2, 3, 3, 5],
        ]);
        let corr = spearman_correlation_matrix(&matrix, MissingPolicy::Pairwise).unwrap();
        assert_eq!(corr.values[0][0], 1.0);
        assert!((corr.values[0][1] - 1.0).abs() < 1e-12, "duplicate column");
        assert!((corr.values[0][2] + 1.0).abs() < 1e-12, "reversed column");
        assert!((corr.values[0][3] - 1.0).abs() < 1e-12, "tied ranks preserved");
        assert!((corr.values[1][0] - corr.values[0][1]).abs() == 0.0, "symmetry");
        assert!(corr.zero_variance.is_empty());
    }

    #[test]
    fn zero_variance_column_is_flagged_not_fatal() {
        let matrix = matrix_from(&[vec![3, 3, 3, 3], vec![1, 2, 3, 4], vec![2, 1, 4, 3]]);
        let corr = spearman_correlation_matrix(&matrix, MissingPolicy::Pairwise).unwrap();
        assert_eq!(corr.zero_variance, vec![0]);
        assert_eq!(corr.values[0][1], 0.0);
        assert_eq!(corr.values[0][2], 0.0);
        assert_eq!(corr.values[0][0], 1.0, "diagonal stays 1");
        assert!(corr.values[1][2].abs() > 0.0, "healthy pair still computed");
    }

    #[test]
    fn pairwise_and_listwise_policies_differ_when_masks_differ() {
        let mut matrix = matrix_from(&[
            vec![1, 2, 3, 4, 5, 1],
            vec![1, 2, 3, 4, 5, 2],
            vec![5, 4, 3, 2, 1, 3],
        ]);
        // Mask one row in column 2 only; pairwise (0,1) keeps 6 rows while
        // listwise drops row 5 everywhere.
        matrix.mask_cell(5, 2);
        let pairwise = spearman_correlation_matrix(&matrix, MissingPolicy::Pairwise).unwrap();
        let listwise = spearman_correlation_matrix(&matrix, MissingPolicy::Listwise).unwrap();
        assert!(
            (pairwise.values[0][1] - listwise.values[0][1]).abs() > 1e-6,
            "pairwise {} vs listwise {}",
            pairwise.values[0][1],
            listwise.values[0][1]
        );
        assert!((listwise.values[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_common_rows_is_a_degenerate_error() {
        let mut matrix = matrix_from(&[vec![1, 2, 3, 4], vec![1, 2, 3, 4]]);
        matrix.mask_cell(0, 0);
        matrix.mask_cell(1, 0);
        let err =
            spearman_correlation_matrix(&matrix, MissingPolicy::Pairwise).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err}");
    }

    /// Independent oracle: average ranks by sorting, then the textbook
    /// Pearson sum formula.
    fn brute_force_spearman(x: &[f64], y: &[f64]) -> f64 {
        fn ranks(values: &[f64]) -> Vec<f64> {
            let n = values.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
            let mut out = vec![0.0; n];
            let mut i = 0;
            while i < n {
                let mut j = i;
                while j + 1 < n && values[order[j + 1]] == values[order[i]] {
                    j += 1;
                }
                let avg = (i + j) as f64 / 2.0 + 1.0;
                for &index in &order[i..=j] {
                    out[index] = avg;
                }
                i = j + 1;
            }
            out
        }
        let (rx, ry) = (ranks(x), ranks(y));
        let n = x.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn correlation_matrix_matches_brute_force_on_random_grids() {
        let mut rng = rng_from(1234);
        for _ in 0..20 {
            let columns: Vec<Vec<u8>> = (0..6)
                .map(|_| (0..20).map(|_| rng.gen_range(1..=5u8)).collect())
                .collect();
            let matrix = matrix_from(&columns);
            let corr = match spearman_correlation_matrix(&matrix, MissingPolicy::Pairwise) {
                Ok(corr) => corr,
                // A constant random column is legal; skip that draw.
                Err(_) => continue,
            };
            for i in 0..6 {
                for j in 0..6 {
                    if corr.zero_variance.contains(&i) || corr.zero_variance.contains(&j) {
                        continue;
                    }
                    let xs: Vec<f64> = columns[i].iter().map(|&v| v as f64).collect();
                    let ys: Vec<f64> = columns[j].iter().map(|&v| v as f64).collect();
                    let want = if i == j { 1.0 } else { brute_force_spearman(&xs, &ys) };
                    assert!(
                        (corr.values[i][j] - want).abs() < 1e-12,
                        "({i},{j}): {} vs {want}",
                        corr.values[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn nearest_pair_merges_first_in_one_dimension() {
        let features = vec![vec![0.0], vec![0.1], vec![10.0]];
        let dendrogram = single_linkage_cluster(&features).unwrap();
        assert_eq!(dendrogram.merges[0].left, 0);
        assert_eq!(dendrogram.merges[0].right, 1);
        assert!((dendrogram.merges[0].height - 0.1).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_merge_at_height_zero() {
        let features = vec![vec![1.0, 2.0]; 5];
        let dendrogram = single_linkage_cluster(&features).unwrap();
        assert!(dendrogram.merges.iter().all(|m| m.height == 0.0));
        // Tie-breaking by lowest id pair makes the order deterministic.
        assert_eq!(dendrogram.merges[0].left, 0);
        assert_eq!(dendrogram.merges[0].right, 1);
    }

    #[test]
    fn merge_heights_are_nondecreasing_on_random_data() {
        let mut rng = rng_from(7);
        for _ in 0..25 {
            let features: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..4).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let dendrogram = single_linkage_cluster(&features).unwrap();
            for pair in dendrogram.merges.windows(2) {
                assert!(pair[0].height <= pair[1].height + 1e-12);
            }
        }
    }

    #[test]
    fn dendrogram_cuts_cover_the_partition_extremes() {
        let mut rng = rng_from(8);
        let features: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let dendrogram = single_linkage_cluster(&features).unwrap();
        let singletons = cut_dendrogram(&dendrogram, 7).unwrap();
        assert_eq!(singletons, vec![0, 1, 2, 3, 4, 5, 6]);
        let lumped = cut_dendrogram(&dendrogram, 1).unwrap();
        assert!(lumped.iter().all(|&l| l == 0));
        assert!(cut_dendrogram(&dendrogram, 8).is_err());
    }

    #[test]
    fn two_tight_far_groups_select_k_two_with_near_perfect_silhouette() {
        let features = vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![10.0, 10.0],
            vec![10.0, 10.0],
        ];
        let dendrogram = single_linkage_cluster(&features).unwrap();
        let selection = select_k_by_silhouette(&dendrogram, &features, Some(2..=3)).unwrap();
        assert_eq!(selection.k_best, 2);
        let (_, score) = selection.table[0];
        assert!(score >= 0.99, "mean silhouette {score}");
    }

    #[test]
    fn planted_six_groups_select_k_six() {
        // Six tight clusters of three points each on a widely spaced grid.
        let mut rng = rng_from(99);
        let mut features = Vec::new();
        for g in 0..6 {
            let center = (g as f64) * 25.0;
            for _ in 0..3 {
                features.push(vec![
                    center + rng.gen::<f64>(),
                    center - rng.gen::<f64>(),
                ]);
            }
        }
        let dendrogram = single_linkage_cluster(&features).unwrap();
        let selection = select_k_by_silhouette(&dendrogram, &features, None).unwrap();
        assert_eq!(selection.k_best, 6);
        assert_eq!(selection.table.len(), 9, "default range 2..=10 capped at n-1");
    }

    #[test]
    fn clustering_is_invariant_to_row_permutation() {
        let mut rng = rng_from(31);
        let features: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..4).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let dendrogram = single_linkage_cluster(&features).unwrap();
        let labels = cut_dendrogram(&dendrogram, 3).unwrap();

        let perm = [7, 2, 9, 0, 4, 6, 1, 8, 3, 5];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| features[i].clone()).collect();
        let permuted_labels =
            cut_dendrogram(&single_linkage_cluster(&permuted).unwrap(), 3).unwrap();

        // Same partition: members grouped together originally stay together.
        for a in 0..10 {
            for b in 0..10 {
                let together = labels[perm[a]] == labels[perm[b]];
                let together_permuted = permuted_labels[a] == permuted_labels[b];
                assert_eq!(together, together_permuted, "pair ({a},{b})");
            }
        }
    }

    #[test]
    fn silhouette_needs_at_least_three_rows() {
        let features = vec![vec![0.0], vec![1.0]];
        let dendrogram = single_linkage_cluster(&features).unwrap();
        assert!(select_k_by_silhouette(&dendrogram, &features, None).is_err());
    }

    #[test]
    fn one_minus_rho_space_clusters_correlated_columns_together() {
        // Columns 0,1 track each other; 2,3 track each other; the two pairs
        // are anti-correlated.
        let matrix = matrix_from(&[
            vec![1, 2, 3, 4, 5, 1, 2, 3],
            vec![1, 2, 3, 5, 4, 1, 2, 3],
            vec![5, 4, 3, 2, 1, 5, 4, 3],
            vec![5, 4, 3, 1, 2, 5, 4, 3],
        ]);
        let corr = spearman_correlation_matrix(&matrix, MissingPolicy::Pairwise).unwrap();
        for space in [ClusterFeatureSpace::CorrelationRows, ClusterFeatureSpace::OneMinusRho] {
            let selection = cluster_candidates(&corr, space, Some(2..=3)).unwrap();
            assert_eq!(selection.k_best, 2, "{space:?}");
            assert_eq!(selection.labels[0], selection.labels[1], "{space:?}");
            assert_eq!(selection.labels[2], selection.labels[3], "{space:?}");
            assert_ne!(selection.labels[0], selection.labels[2], "{space:?}");
        }
    }

    fn consolidation_config() -> ConsolidationConfig {
        let mut config = ConsolidationConfig::new("mock-model");
        config.retry = RetryPolicy::none();
        config
    }

    #[test]
    fn clusters_become_dimensions_with_synthesized_anchors() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let clusters = vec![
            vec![candidate(1, 1, "clarity"), candidate(2, 3, "clearness")],
            vec![candidate(1, 2, "urgency")],
        ];
        let backend = MockBackend::new(1);
        let outcome = consolidate_clusters(
            &backend,
            &cache,
            &consolidation_config(),
            &clusters,
            42,
            "manifest-x",
        )
        .unwrap();
        assert!(outcome.warnings.is_empty());
        let rubric = &outcome.rubric;
        assert_eq!(rubric.len(), 2);
        // The mock echoes each cluster's first member.
        assert_eq!(rubric.dimensions[0].name, "Clarity");
        assert_eq!(rubric.dimensions[1].name, "Urgency");
        assert_eq!(rubric.dimensions[0].source_cluster.len(), 2);
        assert_eq!(rubric.seed, 42);
        for dimension in &rubric.dimensions {
            for level in ANCHOR_LEVELS {
                assert!(!dimension.anchors[&level].description.is_empty());
            }
        }
    }

    #[test]
    fn duplicate_consolidated_names_get_suffixes_and_warnings() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let mut first = candidate(1, 1, "clarity");
        first.definition = "first cluster".to_string();
        let mut second = candidate(2, 1, "clarity");
        second.definition = "second cluster".to_string();
        let clusters = vec![vec![first], vec![second]];
        let backend = MockBackend::new(1);
        let outcome = consolidate_clusters(
            &backend,
            &cache,
            &consolidation_config(),
            &clusters,
            1,
            "m",
        )
        .unwrap();
        assert_eq!(outcome.rubric.dimensions[0].name, "Clarity");
        assert_eq!(outcome.rubric.dimensions[1].name, "Clarity (2)");
        assert_eq!(outcome.warnings.len(), 1);
        assert!(outcome.warnings[0].contains("renamed"), "{}", outcome.warnings[0]);
    }

    #[test]
    fn consolidating_a_consolidated_rubric_changes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let clusters = vec![
            vec![candidate(1, 1, "clarity"), candidate(2, 1, "precision")],
            vec![candidate(1, 2, "urgency")],
        ];
        let backend = MockBackend::new(1);
        let config = consolidation_config();
        let first = consolidate_clusters(&backend, &cache, &config, &clusters, 1, "m")
            .unwrap()
            .rubric;

        let singleton_clusters: Vec<Vec<CandidateCriterion>> = first
            .dimensions
            .iter()
            .enumerate()
            .map(|(i, d)| {
                vec![CandidateCriterion {
                    agent_id: 1,
                    ordinal: i as u32 + 1,
                    name: d.name.clone(),
                    definition: d.definition.clone(),
                    anchors: d
                        .anchors
                        .iter()
                        .map(|(level, anchor)| (*level, anchor.description.clone()))
                        .collect(),
                }]
            })
            .collect();
        let second = consolidate_clusters(&backend, &cache, &config, &singleton_clusters, 1, "m")
            .unwrap()
            .rubric;

        for (a, b) in first.dimensions.iter().zip(&second.dimensions) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.definition, b.definition);
            assert_eq!(a.anchors, b.anchors);
        }
    }

    #[test]
    fn garbage_consolidation_reply_names_the_cluster() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path()).unwrap();
        let clusters = vec![vec![candidate(1, 1, "clarity")], vec![candidate(1, 2, "urgency")]];
        let config = consolidation_config();

        let members = vec![(
            clusters[1][0].name.clone(),
            clusters[1][0].definition.clone(),
        )];
        let messages = render_consolidation_prompt(&members).unwrap();
        let request =
            CompletionRequest::new(&config.model_id, 0.0, messages.to_vec()).unwrap();
        let backend = MockBackend::new(1).with_scenario(HashMap::from([(
            MockBackend::request_fingerprint(&request),
            "I cannot pick just one.".to_string(),
        )]));

        let err = consolidate_clusters(&backend, &cache, &config, &clusters, 1, "m").unwrap_err();
        assert!(err.to_string().contains("cluster 2"), "{err}");
    }

    fn small_rubric() -> Rubric {
        let dims = ["Clarity", "Urgency"]
            .iter()
            .map(|name| RubricDimension {
                name: name.to_string(),
                definition: format!("Measures {name}."),
                anchors: BTreeMap::from([
                    (1, Anchor { description: "low".into(), examples: vec![] }),
                    (3, Anchor { description: "mid".into(), examples: vec![] }),
                    (5, Anchor { description: "high".into(), examples: vec![] }),
                ]),
                source_cluster: Vec::new(),
            })
            .collect();
        Rubric::new(dims, 0, "test").unwrap()
    }

    #[test]
    fn calibration_examples_append_up_to_two_per_anchor() {
        let rubric = small_rubric();
        let additions = vec![
            ("Clarity".to_string(), 5, "pull it tighter right there".to_string()),
            ("Clarity".to_string(), 5, "now cinch the knot down".to_string()),
            ("Clarity".to_string(), 5, "a third example".to_string()),
            ("Urgency".to_string(), 1, "whenever you get a chance".to_string()),
        ];
        let (merged, rejected) = merge_calibration_examples(&rubric, &additions).unwrap();
        assert_eq!(merged.dimensions[0].anchors[&5].examples.len(), 2);
        assert_eq!(merged.dimensions[1].anchors[&1].examples.len(), 1);
        assert_eq!(rejected.len(), 1);
        assert!(rejected[0].contains("third example"), "{}", rejected[0]);

        let unknown = vec![("Brevity".to_string(), 3, "text".to_string())];
        assert!(merge_calibration_examples(&rubric, &unknown).is_err());
        let bad_level = vec![("Clarity".to_string(), 2, "text".to_string())];
        assert!(merge_calibration_examples(&rubric, &bad_level).is_err());
    }

    #[test]
    fn matrix_and_silhouette_csvs_have_the_documented_shape() {
        let dir = tempfile::tempdir().unwrap();
        let matrix = matrix_from(&[vec![1, 2, 3, 4], vec![4, 3, 2, 1], vec![1, 3, 2, 4]]);
        let corr = spearman_correlation_matrix(&matrix, MissingPolicy::Pairwise).unwrap();
        let corr_path = dir.path().join("corr.csv");
        write_correlation_csv(&corr, &corr_path).unwrap();
        let text = std::fs::read_to_string(&corr_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "dimension,d0,d1,d2");
        assert!(lines.next().unwrap().starts_with("d0,1.000000000000,"));
        assert_eq!(text.lines().count(), 4);

        let features = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.1]];
        let corr_stub = CorrelationMatrix {
            dimension_ids: (0..4).map(|i| format!("d{i}")).collect(),
            values: features,
            zero_variance: vec![],
        };
        let selection =
            cluster_candidates(&corr_stub, ClusterFeatureSpace::CorrelationRows, Some(2..=3))
                .unwrap();
        let sil_path = dir.path().join("sil.csv");
        write_silhouette_csv(&selection, &sil_path).unwrap();
        let text = std::fs::read_to_string(&sil_path).unwrap();
        assert!(text.starts_with("k,mean_silhouette,selected\n"));
        assert!(text.contains("\n2,"), "{text}");
    }
}
