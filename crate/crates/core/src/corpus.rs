//! Feedback corpora: loading, validation, summaries, sampling, synthesis.
//!
//! A corpus is an ordered list of feedback instances, each carrying an id,
//! a case id (instances from the same surgical case share one), the utterance
//! text, optional binary outcome labels, and optional external feature
//! columns from prior annotation efforts. JSONL is the canonical on-disk
//! format (one object per line); CSV is accepted with a fixed header.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::ScoreMatrix;
use crate::stats::glmm::standard_normal;
use crate::util::{atomic_write, derive_seed, rng_from};

/// The four binary outcome labels. All four travel together: an instance
/// either carries the full set or none of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeLabels {
    #[serde(with = "binary_flag")]
    pub behavior_adjustment: bool,
    #[serde(with = "binary_flag")]
    pub verbal_acknowledgment: bool,
    #[serde(with = "binary_flag")]
    pub trainer_approval: bool,
    #[serde(with = "binary_flag")]
    pub trainer_disapproval: bool,
}

/// Field names of [`OutcomeLabels`], in canonical column order.
pub const OUTCOME_FIELDS: [&str; 4] = [
    "behavior_adjustment",
    "verbal_acknowledgment",
    "trainer_approval",
    "trainer_disapproval",
];

impl OutcomeLabels {
    /// Flag value by canonical field name.
    pub fn get(&self, field: &str) -> Option<bool> {
        match field {
            "behavior_adjustment" => Some(self.behavior_adjustment),
            "verbal_acknowledgment" => Some(self.verbal_acknowledgment),
            "trainer_approval" => Some(self.trainer_approval),
            "trainer_disapproval" => Some(self.trainer_disapproval),
            _ => None,
        }
    }
}

/// Serializes outcome flags as 0/1 integers; accepts 0/1 or JSON booleans.
mod binary_flag {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Bool(b) => Ok(b),
            serde_json::Value::Number(n) if n.as_u64() == Some(0) => Ok(false),
            serde_json::Value::Number(n) if n.as_u64() == Some(1) => Ok(true),
            other => Err(D::Error::custom(format!(
                "outcome flag must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// One feedback utterance with its labels and optional external features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackInstance {
    pub id: String,
    pub case_id: String,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<OutcomeLabels>,
    /// Keys must be identical across every instance that carries features.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub external_features: Option<BTreeMap<String, f64>>,
}

/// An ordered, validated collection of feedback instances.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    instances: Vec<FeedbackInstance>,
    provenance: String,
}

/// On-disk corpus encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl Corpus {
    /// Validates and wraps instances. Positions in error messages are
    /// 1-based indices into the given list.
    pub fn new(instances: Vec<FeedbackInstance>, provenance: impl Into<String>) -> Result<Self> {
        let numbered: Vec<(usize, &FeedbackInstance)> =
            instances.iter().enumerate().map(|(i, x)| (i + 1, x)).collect();
        validate_instances(&numbered)?;
        Ok(Self {
            instances,
            provenance: provenance.into(),
        })
    }

    pub fn instances(&self) -> &[FeedbackInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Instance ids in corpus order.
    pub fn ids(&self) -> Vec<String> {
        self.instances.iter().map(|x| x.id.clone()).collect()
    }

    /// Case ids in corpus order (repeats allowed, parallel to instances).
    pub fn case_ids(&self) -> Vec<String> {
        self.instances.iter().map(|x| x.case_id.clone()).collect()
    }

    /// Instance lookup by id.
    pub fn instance(&self, id: &str) -> Option<&FeedbackInstance> {
        self.instances.iter().find(|x| x.id == id)
    }
}

/// Shared validation: unique ids, nonempty text, all-or-none outcomes are
/// structural (enforced at parse), identical external feature keys.
fn validate_instances(numbered: &[(usize, &FeedbackInstance)]) -> Result<()> {
    if numbered.is_empty() {
        return Err(Error::data("corpus holds no instances"));
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut feature_keys: Option<(usize, Vec<&String>)> = None;
    for (row, instance) in numbered {
        if instance.text.trim().is_empty() {
            return Err(Error::data_at(*row, format!(
                "instance \"{}\" has empty text",
                instance.id
            )));
        }
        if let Some(first) = seen.insert(instance.id.as_str(), *row) {
            return Err(Error::data_at(*row, format!(
                "duplicate instance id \"{}\" (first seen at row {first})",
                instance.id
            )));
        }
        if let Some(features) = &instance.external_features {
            let keys: Vec<&String> = features.keys().collect();
            match &feature_keys {
                None => feature_keys = Some((*row, keys)),
                Some((first_row, first_keys)) => {
                    if *first_keys != keys {
                        return Err(Error::data_at(*row, format!(
                            "external feature columns differ from row {first_row}: \
                             {keys:?} vs {first_keys:?}"
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Loads and validates a corpus; instance order equals file order and
/// errors carry 1-based line numbers.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let text = crate::util::read_to_string(path)?;
    let instances = match format {
        CorpusFormat::Jsonl => parse_jsonl(&text)?,
        CorpusFormat::Csv => parse_csv(&text)?,
    };
    let numbered: Vec<(usize, &FeedbackInstance)> =
        instances.iter().map(|(row, x)| (*row, x)).collect();
    validate_instances(&numbered)?;
    Ok(Corpus {
        instances: instances.into_iter().map(|(_, x)| x).collect(),
        provenance: path.display().to_string(),
    })
}

/// Writes a corpus in canonical form. JSONL lines carry keys in the fixed
/// order id, case_id, text, outcomes, external_features, omitting absent
/// options; flags serialize as 0/1; feature keys are sorted.
pub fn write_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<()> {
    let bytes = match format {
        CorpusFormat::Jsonl => {
            let mut out = String::new();
            for instance in corpus.instances() {
                let line = serde_json::to_string(instance)
                    .map_err(|e| Error::invalid(format!("serialize instance: {e}")))?;
                out.push_str(&line);
                out.push('\n');
            }
            out.into_bytes()
        }
        CorpusFormat::Csv => render_csv(corpus)?,
    };
    atomic_write(path, &bytes)
}

fn parse_jsonl(text: &str) -> Result<Vec<(usize, FeedbackInstance)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::data_at(row, format!("invalid JSON: {e}")))?;
        let object = value
            .as_object()
            .ok_or_else(|| Error::data_at(row, "line is not a JSON object"))?;
        for key in object.keys() {
            if !matches!(
                key.as_str(),
                "id" | "case_id" | "text" | "outcomes" | "external_features"
            ) {
                return Err(Error::data_at(row, format!("unknown field \"{key}\"")));
            }
        }
        let string_field = |name: &str| -> Result<String> {
            object
                .get(name)
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .ok_or_else(|| Error::data_at(row, format!("missing string field \"{name}\"")))
        };
        let outcomes = match object.get("outcomes") {
            None | Some(serde_json::Value::Null) => None,
            Some(raw) => Some(parse_outcomes(raw, row)?),
        };
        let external_features = match object.get("external_features") {
            None | Some(serde_json::Value::Null) => None,
            Some(raw) => {
                let map = raw.as_object().ok_or_else(|| {
                    Error::data_at(row, "external_features must be an object")
                })?;
                let mut features = BTreeMap::new();
                for (key, v) in map {
                    let number = v.as_f64().ok_or_else(|| {
                        Error::data_at(row, format!(
                            "external feature \"{key}\" must be a number"
                        ))
                    })?;
                    features.insert(key.clone(), number);
                }
                Some(features)
            }
        };
        out.push((row, FeedbackInstance {
            id: string_field("id")?,
            case_id: string_field("case_id")?,
            text: string_field("text")?,
            outcomes,
            external_features,
        }));
    }
    Ok(out)
}

/// Parses an outcomes object, insisting on exactly the four flags so a
/// partial set fails loudly instead of defaulting.
fn parse_outcomes(raw: &serde_json::Value, row: usize) -> Result<OutcomeLabels> {
    let object = raw
        .as_object()
        .ok_or_else(|| Error::data_at(row, "outcomes must be an object"))?;
    for field in OUTCOME_FIELDS {
        if !object.contains_key(field) {
            return Err(Error::data_at(row, format!(
                "outcomes present but missing \"{field}\" \
                 (all four flags must travel together)"
            )));
        }
    }
    serde_json::from_value(raw.clone())
        .map_err(|e| Error::data_at(row, format!("invalid outcomes: {e}")))
}

/// Fixed CSV header: id, case_id, text, then the four outcome columns (all
/// or none), then external feature columns in alphabetical order.
fn parse_csv(text: &str) -> Result<Vec<(usize, FeedbackInstance)>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::data(format!("csv: {e}")))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "case_id" || cols[2] != "text" {
        return Err(Error::data(format!(
            "corpus csv header must start with id,case_id,text, got {cols:?}"
        )));
    }
    let mentions_outcomes = cols.iter().any(|c| OUTCOME_FIELDS.contains(c));
    let has_outcomes = if mentions_outcomes {
        if cols.len() < 7 || cols[3..7] != OUTCOME_FIELDS {
            return Err(Error::data(format!(
                "outcome columns must appear as {OUTCOME_FIELDS:?} directly \
                 after text, got {cols:?}"
            )));
        }
        true
    } else {
        false
    };
    let feature_start = if has_outcomes { 7 } else { 3 };
    let feature_names: Vec<String> = cols[feature_start..].iter().map(|s| s.to_string()).collect();
    if feature_names.iter().collect::<HashSet<_>>().len() != feature_names.len() {
        return Err(Error::data("duplicate external feature columns in header"));
    }

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(format!("csv: {e}")))?;
        let row = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(out.len() + 2);
        if record.len() != cols.len() {
            return Err(Error::data_at(row, format!(
                "expected {} fields, got {}",
                cols.len(),
                record.len()
            )));
        }
        let outcomes = if has_outcomes {
            let cells: Vec<&str> = (3..7).map(|i| &record[i]).collect();
            let empty = cells.iter().filter(|c| c.is_empty()).count();
            match empty {
                4 => None,
                0 => {
                    let mut flags = [false; 4];
                    for (k, cell) in cells.iter().enumerate() {
                        flags[k] = match *cell {
                            "0" => false,
                            "1" => true,
                            other => {
                                return Err(Error::data_at(row, format!(
                                    "outcome \"{}\" must be 0 or 1, got \"{other}\"",
                                    OUTCOME_FIELDS[k]
                                )))
                            }
                        };
                    }
                    Some(OutcomeLabels {
                        behavior_adjustment: flags[0],
                        verbal_acknowledgment: flags[1],
                        trainer_approval: flags[2],
                        trainer_disapproval: flags[3],
                    })
                }
                _ => {
                    return Err(Error::data_at(row,
                        "outcomes partially filled (all four flags must travel together)",
                    ))
                }
            }
        } else {
            None
        };
        let external_features = if feature_names.is_empty() {
            None
        } else {
            let cells: Vec<&str> = (feature_start..cols.len()).map(|i| &record[i]).collect();
            let empty = cells.iter().filter(|c| c.is_empty()).count();
            if empty == cells.len() {
                None
            } else if empty == 0 {
                let mut features = BTreeMap::new();
                for (name, cell) in feature_names.iter().zip(&cells) {
                    let value: f64 = cell.parse().map_err(|_| {
                        Error::data_at(row, format!(
                            "external feature \"{name}\" must be a number, got \"{cell}\""
                        ))
                    })?;
                    features.insert(name.clone(), value);
                }
                Some(features)
            } else {
                return Err(Error::data_at(row,
                    "external features partially filled on this row",
                ));
            }
        };
        out.push((row, FeedbackInstance {
            id: record[0].to_string(),
            case_id: record[1].to_string(),
            text: record[2].to_string(),
            outcomes,
            external_features,
        }));
    }
    Ok(out)
}

fn render_csv(corpus: &Corpus) -> Result<Vec<u8>> {
    let has_outcomes = corpus.instances().iter().any(|x| x.outcomes.is_some());
    let feature_names: Vec<String> = corpus
        .instances()
        .iter()
        .find_map(|x| x.external_features.as_ref())
        .map(|f| f.keys().cloned().collect())
        .unwrap_or_default();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "case_id".to_string(), "text".to_string()];
    if has_outcomes {
        header.extend(OUTCOME_FIELDS.iter().map(|s| s.to_string()));
    }
    header.extend(feature_names.iter().cloned());
    w.write_record(&header)
        .map_err(|e| Error::invalid(e.to_string()))?;

    for instance in corpus.instances() {
        let mut rec = vec![
            instance.id.clone(),
            instance.case_id.clone(),
            instance.text.clone(),
        ];
        if has_outcomes {
            match &instance.outcomes {
                Some(o) => {
                    for field in OUTCOME_FIELDS {
                        rec.push(u8::from(o.get(field).unwrap()).to_string());
                    }
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        match &instance.external_features {
            Some(features) => {
                for name in &feature_names {
                    let value = features.get(name).ok_or_else(|| {
                        Error::invalid(format!("missing external feature \"{name}\""))
                    })?;
                    rec.push(format_float(*value));
                }
            }
            None => rec.extend(std::iter::repeat_n(String::new(), feature_names.len())),
        }
        w.write_record(&rec).map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::invalid(e.to_string()))
}

/// Shortest float form that round-trips; serde_json renders f64 via ryu,
/// reusing it keeps CSV and JSONL numerals identical.
fn format_float(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

/// One line of the corpus summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategorySummary {
    pub label: String,
    pub count: usize,
    /// Fraction of all instances, in [0, 1].
    pub frequency: f64,
    pub per_case_mean: f64,
    pub per_case_sd: f64,
    pub words_mean: f64,
    pub words_sd: f64,
}

/// Summary rows: total instances first, then one row per outcome category
/// when labels are present.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub n_cases: usize,
    pub rows: Vec<CategorySummary>,
}

/// Population mean and standard deviation (a single observation yields 0).
fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Per-category counts, frequencies, per-case distribution, and words per
/// line. Categories with no labels anywhere are omitted.
pub fn summarize_corpus(corpus: &Corpus) -> CorpusSummary {
    let mut case_order: Vec<&str> = Vec::new();
    let mut case_index: HashMap<&str, usize> = HashMap::new();
    for instance in corpus.instances() {
        if !case_index.contains_key(instance.case_id.as_str()) {
            case_index.insert(&instance.case_id, case_order.len());
            case_order.push(&instance.case_id);
        }
    }
    let n_cases = case_order.len();
    let total = corpus.len();

    // Display labels follow the reporting convention for this dataset.
    let categories: [(&str, &str); 4] = [
        ("verbal_acknowledgment", "Verbal Ack."),
        ("behavior_adjustment", "Behavioral Adj."),
        ("trainer_approval", "Approval"),
        ("trainer_disapproval", "Disapproval"),
    ];

    let mut rows = Vec::new();
    let summarize = |matches: &dyn Fn(&FeedbackInstance) -> bool, label: &str| {
        let mut per_case = vec![0.0f64; n_cases];
        let mut words = Vec::new();
        let mut count = 0usize;
        for instance in corpus.instances() {
            if matches(instance) {
                count += 1;
                per_case[case_index[instance.case_id.as_str()]] += 1.0;
                words.push(word_count(&instance.text) as f64);
            }
        }
        let (per_case_mean, per_case_sd) = mean_sd(&per_case);
        let (words_mean, words_sd) = mean_sd(&words);
        CategorySummary {
            label: label.to_string(),
            count,
            frequency: count as f64 / total as f64,
            per_case_mean,
            per_case_sd,
            words_mean,
            words_sd,
        }
    };

    rows.push(summarize(&|_| true, "Instances"));
    let any_labels = corpus.instances().iter().any(|x| x.outcomes.is_some());
    if any_labels {
        for (field, label) in categories {
            rows.push(summarize(
                &|x: &FeedbackInstance| {
                    x.outcomes.as_ref().is_some_and(|o| o.get(field).unwrap())
                },
                label,
            ));
        }
    }
    CorpusSummary { n_cases, rows }
}

impl CorpusSummary {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "category,count,frequency_pct,per_case_mean,per_case_sd,words_mean,words_sd\n",
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.1},{:.2},{:.2},{:.2},{:.2}",
                row.label,
                row.count,
                row.frequency * 100.0,
                row.per_case_mean,
                row.per_case_sd,
                row.words_mean,
                row.words_sd
            );
        }
        out
    }

    pub fn to_text_string(&self) -> String {
        let mut out = format!(
            "{:<16} {:>7} {:>7} {:>14} {:>14}   ({} cases)\n",
            "Category", "Count", "Freq", "Count/Case", "Words/Line", self.n_cases
        );
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:>7} {:>6.1}% {:>7.2}±{:<6.2} {:>7.2}±{:<6.2}",
                row.label,
                row.count,
                row.frequency * 100.0,
                row.per_case_mean,
                row.per_case_sd,
                row.words_mean,
                row.words_sd
            );
        }
        out
    }
}

/// Draws one instance-id subset per agent, without replacement inside a
/// subset. Subsets from different agents may overlap but never coincide
/// exactly unless the subset spans the whole corpus; a colliding draw is
/// redrawn under a bumped tag so the result stays a pure function of the
/// inputs.
pub fn sample_discovery_subsets(
    corpus: &Corpus,
    n_agents: usize,
    subset_size: usize,
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    if n_agents == 0 {
        return Err(Error::config("n_agents must be positive"));
    }
    if subset_size == 0 {
        return Err(Error::config("subset_size must be positive"));
    }
    if subset_size > corpus.len() {
        return Err(Error::config(format!(
            "subset_size {subset_size} exceeds corpus size {}",
            corpus.len()
        )));
    }
    let ids = corpus.ids();
    let mut subsets: Vec<Vec<String>> = Vec::with_capacity(n_agents);
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    for agent in 0..n_agents {
        let mut attempt = 0u32;
        loop {
            let tag = if attempt == 0 {
                format!("discovery-subset-{agent}")
            } else {
                format!("discovery-subset-{agent}-redraw-{attempt}")
            };
            let mut rng = rng_from(derive_seed(seed, &tag));
            let picked = rand::seq::index::sample(&mut rng, ids.len(), subset_size);
            let subset: Vec<String> = picked.iter().map(|i| ids[i].clone()).collect();
            let mut key = subset.clone();
            key.sort_unstable();
            if subset_size < ids.len() && seen.contains(&key) {
                attempt += 1;
                continue;
            }
            seen.insert(key);
            subsets.push(subset);
            break;
        }
    }
    Ok(subsets)
}

/// Per-dimension stratified pick of calibration instances: two rated high
/// (4 or 5), one mid (3), two low (1 or 2), skipping ids already chosen for
/// earlier dimensions.
pub fn stratified_calibration_sample(
    scores: &ScoreMatrix,
    rubric_size: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if rubric_size == 0 || rubric_size > scores.n_dimensions() {
        return Err(Error::config(format!(
            "rubric_size {rubric_size} out of range for a {}-dimension matrix",
            scores.n_dimensions()
        )));
    }
    let mut chosen_rows: HashSet<usize> = HashSet::new();
    let mut out = Vec::with_capacity(5 * rubric_size);
    for d in 0..rubric_size {
        let mut rng = rng_from(derive_seed(seed, &format!("calibration-{d}")));
        let strata: [(&str, &[u8], usize); 3] =
            [("high", &[4, 5], 2), ("mid", &[3], 1), ("low", &[1, 2], 2)];
        for (name, levels, quota) in strata {
            let pool: Vec<usize> = (0..scores.n_instances())
                .filter(|r| !chosen_rows.contains(r))
                .filter(|r| scores.get(*r, d).is_some_and(|v| levels.contains(&v)))
                .collect();
            if pool.len() < quota {
                return Err(Error::data(format!(
                    "dimension {} (\"{}\"): {name} stratum exhausted, need {quota}, have {}",
                    d + 1,
                    scores.dimension_ids()[d],
                    pool.len()
                )));
            }
            let picked = rand::seq::index::sample(&mut rng, pool.len(), quota);
            for i in picked.iter() {
                let row = pool[i];
                chosen_rows.insert(row);
                out.push(scores.instance_ids()[row].clone());
            }
        }
    }
    Ok(out)
}

/// Recipe for a synthetic labeled corpus with known generative structure.
/// Omitted fields fall back to [`SyntheticSpec::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_cases: usize,
    pub instances_per_case: usize,
    /// One coefficient vector per outcome, in [`OUTCOME_FIELDS`] order.
    /// Each vector is the intercept followed by six slopes, one per planted
    /// score dimension.
    pub true_coefficients: Vec<Vec<f64>>,
    /// Scale of the per-case, per-outcome random intercept.
    pub random_intercept_sd: f64,
    pub vocabulary_seeding: VocabularySeeding,
}

/// Controls the lexical cues planted in generated text. Each of the six
/// score dimensions gets a stem word; the text pairs it with an intensity
/// word chosen by the planted score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularySeeding {
    pub dimension_stems: Vec<String>,
}

impl Default for VocabularySeeding {
    fn default() -> Self {
        Self {
            dimension_stems: [
                "encouragement",
                "urgency",
                "actionability",
                "timeliness",
                "clarity",
                "reflection",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

/// Intensity vocabulary planted by the synthetic generator, indexed by
/// score minus one. The mock backend shares this list so it can read the
/// planted cues back out of generated text.
pub const INTENSITY_WORDS: [&str; 5] = ["absent", "weak", "adequate", "strong", "exceptional"];

impl Default for SyntheticSpec {
    /// Moderate-size corpus with distinct signal patterns per outcome: a
    /// diffuse one, two sparse ones, and a no-signal negative control, at
    /// prevalences between roughly 10% and 40%.
    fn default() -> Self {
        Self {
            n_cases: 50,
            instances_per_case: 10,
            true_coefficients: vec![
                vec![-4.0, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2],
                vec![-3.0, 0.4, 0.0, 0.0, 0.0, 0.2, 0.0],
                vec![-3.5, 0.0, 0.3, 0.3, 0.0, 0.0, 0.0],
                vec![-2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            ],
            random_intercept_sd: 0.3,
            vocabulary_seeding: VocabularySeeding::default(),
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.n_cases == 0 || self.instances_per_case == 0 {
            return Err(Error::config("n_cases and instances_per_case must be positive"));
        }
        if self.true_coefficients.len() != OUTCOME_FIELDS.len() {
            return Err(Error::config(format!(
                "need {} coefficient vectors (one per outcome), got {}",
                OUTCOME_FIELDS.len(),
                self.true_coefficients.len()
            )));
        }
        for (k, beta) in self.true_coefficients.iter().enumerate() {
            if beta.len() != 7 {
                return Err(Error::config(format!(
                    "coefficient vector for {} must have 7 entries \
                     (intercept plus six slopes), got {}",
                    OUTCOME_FIELDS[k],
                    beta.len()
                )));
            }
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::config("coefficients must be finite"));
            }
        }
        if !(self.random_intercept_sd >= 0.0 && self.random_intercept_sd.is_finite()) {
            return Err(Error::config("random_intercept_sd must be a nonnegative real"));
        }
        if self.vocabulary_seeding.dimension_stems.len() != 6 {
            return Err(Error::config(format!(
                "vocabulary seeding needs 6 dimension stems, got {}",
                self.vocabulary_seeding.dimension_stems.len()
            )));
        }
        Ok(())
    }
}

/// Generates a labeled corpus plus the planted score matrix behind it.
///
/// Latent scores are uniform on 1..=5 per instance and dimension; the text
/// is a deterministic template over those scores; each outcome is Bernoulli
/// with log-odds `intercept + slopes·scores + u`, where `u` is a per-case,
/// per-outcome Normal(0, sd²) random intercept. Byte-identical for a fixed
/// (spec, seed).
pub fn generate_synthetic_corpus(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(Corpus, ScoreMatrix)> {
    use rand::Rng;

    spec.validate()?;
    let stems = &spec.vocabulary_seeding.dimension_stems;
    let mut rng = rng_from(derive_seed(seed, "synthetic-corpus"));

    let n = spec.n_cases * spec.instances_per_case;
    let mut instances = Vec::with_capacity(n);
    let mut instance_ids = Vec::with_capacity(n);
    let mut case_ids = Vec::with_capacity(n);
    let mut planted: Vec<[u8; 6]> = Vec::with_capacity(n);

    let mut serial = 0usize;
    for case in 0..spec.n_cases {
        let case_id = format!("case{:04}", case + 1);
        let intercepts: Vec<f64> = (0..OUTCOME_FIELDS.len())
            .map(|_| standard_normal(&mut rng) * spec.random_intercept_sd)
            .collect();
        for _ in 0..spec.instances_per_case {
            serial += 1;
            let id = format!("s{serial:05}");
            let scores: [u8; 6] = std::array::from_fn(|_| rng.gen_range(1..=5u8));

            let phrases: Vec<String> = scores
                .iter()
                .zip(stems)
                .map(|(s, stem)| format!("{} {stem}", INTENSITY_WORDS[(s - 1) as usize]))
                .collect();
            let text = format!("The feedback shows {}.", phrases.join(", "));

            let mut flags = [false; 4];
            for (k, flag) in flags.iter_mut().enumerate() {
                let beta = &spec.true_coefficients[k];
                let eta = beta[0]
                    + beta[1..]
                        .iter()
                        .zip(scores)
                        .map(|(b, s)| b * f64::from(s))
                        .sum::<f64>()
                    + intercepts[k];
                let p = 1.0 / (1.0 + (-eta).exp());
                *flag = rng.gen::<f64>() < p;
            }

            instances.push(FeedbackInstance {
                id: id.clone(),
                case_id: case_id.clone(),
                text,
                outcomes: Some(OutcomeLabels {
                    behavior_adjustment: flags[0],
                    verbal_acknowledgment: flags[1],
                    trainer_approval: flags[2],
                    trainer_disapproval: flags[3],
                }),
                external_features: None,
            });
            instance_ids.push(id);
            case_ids.push(case_id.clone());
            planted.push(scores);
        }
    }

    let mut matrix = ScoreMatrix::new(instance_ids, case_ids, stems.clone())?;
    for (r, scores) in planted.iter().enumerate() {
        for (c, v) in scores.iter().enumerate() {
            matrix.set(r, c, *v)?;
        }
    }
    let corpus = Corpus::new(
        instances,
        format!(
            "synthetic(seed={seed}, cases={}, per_case={})",
            spec.n_cases, spec.instances_per_case
        ),
    )?;
    Ok((corpus, matrix))
}
