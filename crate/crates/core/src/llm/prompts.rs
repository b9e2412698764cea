//! Prompt templates for the three pipeline call shapes: criteria discovery,
//! cluster consolidation, and multi-criteria scoring, plus the anchor
//! follow-up that reuses the discovery output format.
//!
//! Each renderer returns a (system, user) message pair. The wording is
//! stable on purpose: the mock backend keys its behavior off the marker
//! phrases below, and cache keys hash the full text.

use crate::error::{Error, Result};
use crate::rubric::{Rubric, ANCHOR_LEVELS};

use super::types::ChatMessage;

/// The pipe-delimited row header criteria replies must follow.
pub const CRITERIA_HEADER: &str =
    "No|Dimension Name|Scoring Definition|Score 1 rating|Score 3 rating|Score 5 rating";

/// Marker phrases the mock backend uses to recognize each call shape.
pub(crate) const SCORING_MARKER: &str =
    "This is verbal FEEDBACK delivered during surgery";
pub(crate) const DISCOVERY_MARKER: &str =
    "propose dimensions that would be predictive";
pub(crate) const ANCHOR_MARKER: &str =
    "Provide the behavioral scale anchors";
pub(crate) const CONSOLIDATION_MARKER: &str =
    "output a Python tuple";

/// Heading that introduces example lines in the discovery system message.
pub(crate) const EXAMPLES_HEADING: &str = "Feedback examples:";

/// The three outcome definitions injected into discovery prompts, as used
/// for the surgical feedback setting.
pub fn default_outcome_definitions() -> [(String, String); 3] {
    [
        (
            "Trainee Behavior Change".to_string(),
            "behavioral adjustment made by the trainee that corresponds directly with \
             the preceding feedback (e.g. trainee immediately pulls more tightly on the \
             suture thread after receiving feedback to cinch tightly)"
                .to_string(),
        ),
        (
            "Trainee Verbal Acknowledgment".to_string(),
            "verbal or audible confirmation by the trainee confirming that they have \
             heard the feedback (e.g. \"Okay, I see\", \"uh-huh, got it.\")"
                .to_string(),
        ),
        (
            "Trainer Approval".to_string(),
            "trainer verbally demonstrates that they are satisfied with the trainee \
             behavioral change (e.g. \"yes\", \"mhm\")"
                .to_string(),
        ),
    ]
}

/// Escapes a string for embedding between double quotes: backslashes and
/// quotes get backslash-escaped, so [`super::parse`] can recover the text.
pub(crate) fn escape_quoted(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            _ => out.push(c),
        }
    }
    out
}

/// Renders the brainstorming prompt: outcome definitions, the BARS
/// instruction, and the corpus examples one per line; the user message
/// pins the pipe-delimited reply format.
pub fn render_discovery_prompt(
    outcome_definitions: &[(String, String)],
    examples: &[String],
) -> Result<[ChatMessage; 2]> {
    if outcome_definitions.len() != 3 {
        return Err(Error::invalid(format!(
            "discovery prompt needs exactly three outcome definitions, got {}",
            outcome_definitions.len()
        )));
    }
    if examples.is_empty() {
        return Err(Error::invalid("discovery prompt needs at least one example"));
    }
    let mut system = String::from(
        "You are working in the context of verbal feedback delivered by a trainer \
         to a trainee in a live surgery.\n\
         The goal of the feedback is to modify trainee thinking or behavior.\n\
         There are different measures assessing feedback effectiveness, including:\n",
    );
    for (label, definition) in outcome_definitions {
        system.push_str(&format!("- {label}: {definition}\n"));
    }
    system.push_str(
        "\nBased on these descriptions, propose dimensions that would be predictive \
         of the three outcomes above.\n\
         For each dimension, supply a definition such that a rater could score a \
         feedback instance on the Behaviorally Anchored Rating Scale (BARS) using \
         5 behavioral anchor levels, from 1 = feedback does not exhibit this \
         quality to 5 = feedback clearly possesses this quality.\n\
         Dimensions must be applicable to transcribed feedback lines alone, \
         without preceding dialogue, video, or timing information.\n\n",
    );
    system.push_str(EXAMPLES_HEADING);
    system.push('\n');
    for example in examples {
        // One example per line; flatten any embedded newlines.
        system.push_str(&example.replace('\n', " "));
        system.push('\n');
    }

    let user = format!(
        "Produce an output in the format:\n{CRITERIA_HEADER}\n\
         Do not include this header in your reply."
    );
    Ok([ChatMessage::system(system), ChatMessage::user(user)])
}

/// Renders the per-cluster consolidation prompt. Members appear in order as
/// `Name: "...", Definition: "..."` lines with escaped quotes; the user
/// message demands exactly one tuple reply.
pub fn render_consolidation_prompt(members: &[(String, String)]) -> Result<[ChatMessage; 2]> {
    if members.is_empty() {
        return Err(Error::invalid("consolidation prompt needs at least one member"));
    }
    let mut system = String::from(
        "You are given a set of similar scoring criteria, each with a name and \
         definition.\n\
         Combine them under one unified name and definition.\n\
         Consolidate into exactly one refined criterion based on the list below:\n\n",
    );
    for (name, definition) in members {
        system.push_str(&format!(
            "Name: \"{}\", Definition: \"{}\"\n",
            escape_quoted(name),
            escape_quoted(definition)
        ));
    }
    let user = "Based on the consolidated and refined criterion, output a Python \
                tuple in the form:\n\
                (No, \"Consolidated Name\", \"Consolidated Definition\")\n\
                Only return the tuple, no additional commentary."
        .to_string();
    Ok([ChatMessage::system(system), ChatMessage::user(user)])
}

/// Renders the anchor follow-up for one consolidated criterion. The reply
/// format is the same pipe row as discovery so one parser serves both.
pub fn render_anchor_prompt(name: &str, definition: &str) -> Result<[ChatMessage; 2]> {
    if name.trim().is_empty() || definition.trim().is_empty() {
        return Err(Error::invalid("anchor prompt needs a name and a definition"));
    }
    let system = format!(
        "Provide the behavioral scale anchors for the following consolidated \
         criterion, describing what a score of 1, 3, and 5 looks like.\n\
         Name: \"{}\", Definition: \"{}\"\n\
         Return exactly one row describing this criterion.",
        escape_quoted(name),
        escape_quoted(definition)
    );
    let user = format!(
        "Produce an output in the format:\n{CRITERIA_HEADER}\n\
         Do not include this header in your reply."
    );
    Ok([ChatMessage::system(system), ChatMessage::user(user)])
}

/// Renders the scoring prompt: Q1..Qn with definitions and anchors, the
/// ordered-list format demand, and the feedback line as the user message.
pub fn render_scoring_prompt(rubric: &Rubric, feedback_text: &str) -> Result<[ChatMessage; 2]> {
    if rubric.is_empty() {
        return Err(Error::invalid("scoring prompt needs a nonempty rubric"));
    }
    if feedback_text.trim().is_empty() {
        return Err(Error::invalid("scoring prompt needs nonempty feedback text"));
    }
    let mut system = format!(
        "{SCORING_MARKER} by a trainer to a trainee.\n\
         Please rate it given each of the following criteria and associated scales.\n\n"
    );
    for (i, dimension) in rubric.dimensions.iter().enumerate() {
        system.push_str(&format!(
            "Q{}. {}: {}\n",
            i + 1,
            dimension.name,
            dimension.definition
        ));
        for level in ANCHOR_LEVELS {
            let anchor = &dimension.anchors[&level];
            let mut line = format!("  {level} = {}", anchor.description);
            if !anchor.examples.is_empty() {
                let quoted: Vec<String> = anchor
                    .examples
                    .iter()
                    .map(|e| format!("\"{}\"", escape_quoted(e)))
                    .collect();
                line.push_str(&format!(" (e.g. {})", quoted.join("; ")));
            }
            line.push('\n');
            system.push_str(&line);
        }
    }
    let slots: Vec<String> = (1..=rubric.len()).map(|i| format!("Q{i} score")).collect();
    system.push_str(&format!(
        "\nMake the scoring concise as it needs to be parsed automatically later \
         on; use the format of an ordered Python list, don't repeat question \
         numbers:\n{}\n",
        slots.join(", ")
    ));
    let user = format!("FEEDBACK: \"{}\"", escape_quoted(feedback_text));
    Ok([ChatMessage::system(system), ChatMessage::user(user)])
}
