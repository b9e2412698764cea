//! Rubric data model: candidate criteria from brainstorming agents and the
//! consolidated dimensions the pipeline settles on.
//!
//! A criterion rates one quality of a feedback line on a 1..=5 behaviorally
//! anchored scale; anchors describe what a 1, 3, and 5 look like. Candidates
//! come out of discovery, dimensions out of consolidation, and the rubric is
//! what the judge applies at scale.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::atomic_write;

/// Anchor levels every criterion must describe.
pub const ANCHOR_LEVELS: [u8; 3] = [1, 3, 5];

/// One criterion proposed by a brainstorming agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCriterion {
    /// 1-based id of the agent that proposed it.
    pub agent_id: usize,
    /// Position within that agent's reply, as the agent numbered it.
    pub ordinal: u32,
    pub name: String,
    pub definition: String,
    /// Anchor descriptions keyed by level; 1, 3, and 5 must all be present.
    pub anchors: BTreeMap<u8, String>,
}

impl CandidateCriterion {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() || self.definition.trim().is_empty() {
            return Err(Error::invalid(format!(
                "agent {} criterion {} has an empty name or definition",
                self.agent_id, self.ordinal
            )));
        }
        for level in ANCHOR_LEVELS {
            if !self.anchors.contains_key(&level) {
                return Err(Error::invalid(format!(
                    "criterion \"{}\" is missing the level-{level} anchor",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Anchor text plus any calibration examples attached to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub examples: Vec<String>,
}

/// One consolidated rubric dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricDimension {
    pub name: String,
    pub definition: String,
    /// Keyed by anchor level; 1, 3, and 5 must all be present.
    pub anchors: BTreeMap<u8, Anchor>,
    /// The candidate criteria this dimension was consolidated from.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub source_cluster: Vec<CandidateCriterion>,
}

impl RubricDimension {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() || self.definition.trim().is_empty() {
            return Err(Error::invalid("rubric dimension has an empty name or definition"));
        }
        for level in ANCHOR_LEVELS {
            if !self.anchors.contains_key(&level) {
                return Err(Error::invalid(format!(
                    "dimension \"{}\" is missing the level-{level} anchor",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// The consolidated scoring rubric, with provenance for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rubric {
    pub dimensions: Vec<RubricDimension>,
    /// Seed of the run that produced this rubric.
    pub seed: u64,
    /// Reference to the run manifest that created it (path or digest).
    pub manifest_ref: String,
}

impl Rubric {
    pub fn new(
        dimensions: Vec<RubricDimension>,
        seed: u64,
        manifest_ref: impl Into<String>,
    ) -> Result<Self> {
        let rubric = Self {
            dimensions,
            seed,
            manifest_ref: manifest_ref.into(),
        };
        rubric.validate()?;
        Ok(rubric)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::invalid("rubric has no dimensions"));
        }
        let mut names = HashSet::new();
        for dimension in &self.dimensions {
            dimension.validate()?;
            if !names.insert(dimension.name.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate dimension name \"{}\"",
                    dimension.name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    pub fn dimension_names(&self) -> Vec<String> {
        self.dimensions.iter().map(|d| d.name.clone()).collect()
    }

    /// Builds a throwaway rubric from candidate criteria so they can be
    /// scored by the judge before consolidation. Names are made unique by
    /// tagging the owning agent and ordinal.
    pub fn from_candidates(candidates: &[CandidateCriterion]) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::invalid("no candidate criteria to score"));
        }
        let mut dimensions = Vec::with_capacity(candidates.len());
        for candidate in candidates {
            candidate.validate()?;
            let anchors = candidate
                .anchors
                .iter()
                .map(|(level, description)| {
                    (*level, Anchor {
                        description: description.clone(),
                        examples: Vec::new(),
                    })
                })
                .collect();
            dimensions.push(RubricDimension {
                name: format!(
                    "{} [a{}c{}]",
                    candidate.name, candidate.agent_id, candidate.ordinal
                ),
                definition: candidate.definition.clone(),
                anchors,
                source_cluster: vec![candidate.clone()],
            });
        }
        Rubric::new(dimensions, 0, "candidate-scoring")
    }
}

/// Writes a rubric as pretty JSON (sorted keys, stable bytes).
pub fn save_rubric(rubric: &Rubric, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(rubric)
        .map_err(|e| Error::invalid(format!("serialize rubric: {e}")))?;
    atomic_write(path, json.as_bytes())
}

pub fn load_rubric(path: &Path) -> Result<Rubric> {
    let text = crate::util::read_to_string(path)?;
    let rubric: Rubric = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("parse rubric {}: {e}", path.display())))?;
    rubric.validate()?;
    Ok(rubric)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn anchor(description: &str) -> Anchor {
        Anchor {
            description: description.into(),
            examples: Vec::new(),
        }
    }

    pub(crate) fn dimension(name: &str) -> RubricDimension {
        RubricDimension {
            name: name.into(),
            definition: format!("Measures {name} in the feedback."),
            anchors: BTreeMap::from([
                (1, anchor("not present")),
                (3, anchor("somewhat present")),
                (5, anchor("clearly present")),
            ]),
            source_cluster: Vec::new(),
        }
    }

    #[test]
    fn rubric_requires_distinct_names_and_complete_anchors() {
        let ok = Rubric::new(vec![dimension("Clarity"), dimension("Urgency")], 1, "m");
        assert!(ok.is_ok());

        let dup = Rubric::new(vec![dimension("Clarity"), dimension("Clarity")], 1, "m");
        assert!(dup.unwrap_err().to_string().contains("duplicate dimension"));

        let mut missing = dimension("Clarity");
        missing.anchors.remove(&3);
        assert!(Rubric::new(vec![missing], 1, "m").is_err());
    }

    #[test]
    fn rubric_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rubric.json");
        let rubric = Rubric::new(vec![dimension("Clarity")], 7, "manifest-1").unwrap();
        save_rubric(&rubric, &path).unwrap();
        let back = load_rubric(&path).unwrap();
        assert_eq!(back, rubric);
    }

    #[test]
    fn candidate_rubric_tags_names_for_uniqueness() {
        let candidate = CandidateCriterion {
            agent_id: 2,
            ordinal: 1,
            name: "Clarity".into(),
            definition: "Is the instruction unambiguous".into(),
            anchors: BTreeMap::from([
                (1, "vague".to_string()),
                (3, "mostly clear".to_string()),
                (5, "crystal clear".to_string()),
            ]),
        };
        let twin = CandidateCriterion {
            agent_id: 4,
            ..candidate.clone()
        };
        let rubric = Rubric::from_candidates(&[candidate, twin]).unwrap();
        assert_eq!(rubric.len(), 2);
        assert_eq!(rubric.dimensions[0].name, "Clarity [a2c1]");
        assert_eq!(rubric.dimensions[1].name, "Clarity [a4c1]");
        assert_eq!(rubric.dimensions[0].source_cluster.len(), 1);
    }

    #[test]
    fn incomplete_candidates_are_rejected() {
        let mut candidate = CandidateCriterion {
            agent_id: 1,
            ordinal: 1,
            name: "Tone".into(),
            definition: "def".into(),
            anchors: BTreeMap::from([(1, "a".to_string()), (3, "b".to_string())]),
        };
        assert!(candidate.validate().is_err());
        candidate.anchors.insert(5, "c".to_string());
        assert!(candidate.validate().is_ok());
        candidate.name = "  ".into();
        assert!(candidate.validate().is_err());
    }
}
