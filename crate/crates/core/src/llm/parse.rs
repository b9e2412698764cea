//! Strict, total parsers for model replies. Every function either returns
//! structured data or a structured error; none panics on arbitrary input.

use crate::error::{Error, Result};

use super::prompts::CRITERIA_HEADER;

/// One parsed pipe-delimited criteria row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriteriaRow {
    pub ordinal: u32,
    pub name: String,
    pub definition: String,
    pub anchor1: String,
    pub anchor3: String,
    pub anchor5: String,
}

/// A row that had to be dropped, with where and why.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SkippedRow {
    /// 1-based line number within the reply.
    pub line: usize,
    pub content: String,
    pub reason: String,
}

/// Parse result: kept rows plus a report of skipped ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriteriaParse {
    pub rows: Vec<CriteriaRow>,
    pub skipped: Vec<SkippedRow>,
}

/// Drops surrounding code-fence lines (``` or ```lang) anywhere in the text.
fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Parses pipe-delimited criteria rows. Tolerates code fences and repeated
/// header lines; rows without exactly 6 fields (or with an unparseable
/// ordinal or empty name/definition) are skipped and reported. Zero kept
/// rows is an error carrying the raw text.
pub fn parse_criteria_rows(text: &str) -> Result<CriteriaParse> {
    let header_normalized = CRITERIA_HEADER.to_ascii_lowercase();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || is_fence(line) {
            continue;
        }
        let normalized: String = line
            .split('|')
            .map(str::trim)
            .collect::<Vec<_>>()
            .join("|")
            .to_ascii_lowercase();
        if normalized == header_normalized {
            continue;
        }
        if !line.contains('|') {
            // Prose around the table (greetings, commentary) is ignored
            // silently; only pipe-bearing lines count as row attempts.
            continue;
        }
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() != 6 {
            skipped.push(SkippedRow {
                line: idx + 1,
                content: line.to_string(),
                reason: format!("expected 6 pipe-separated fields, got {}", fields.len()),
            });
            continue;
        }
        let Ok(ordinal) = fields[0].parse::<u32>() else {
            skipped.push(SkippedRow {
                line: idx + 1,
                content: line.to_string(),
                reason: format!("ordinal \"{}\" is not an unsigned integer", fields[0]),
            });
            continue;
        };
        if fields[1].is_empty() || fields[2].is_empty() {
            skipped.push(SkippedRow {
                line: idx + 1,
                content: line.to_string(),
                reason: "empty name or definition".to_string(),
            });
            continue;
        }
        rows.push(CriteriaRow {
            ordinal,
            name: fields[1].to_string(),
            definition: fields[2].to_string(),
            anchor1: fields[3].to_string(),
            anchor3: fields[4].to_string(),
            anchor5: fields[5].to_string(),
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            what: "criteria rows".into(),
            detail: format!("no parseable rows ({} skipped)", skipped.len()),
            raw: text.to_string(),
        });
    }
    Ok(CriteriaParse { rows, skipped })
}

/// Reads a quoted string starting at `chars[i]` (which must be `"`).
/// Returns the unescaped content and the index just past the closing quote.
pub(crate) fn read_quoted(chars: &[char], mut i: usize) -> Option<(String, usize)> {
    if *chars.get(i)? != '"' {
        return None;
    }
    i += 1;
    let mut out = String::new();
    while i < chars.len() {
        match chars[i] {
            '\\' => {
                let next = *chars.get(i + 1)?;
                out.push(next);
                i += 2;
            }
            '"' => return Some((out, i + 1)),
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    None
}

fn skip_ws(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() && chars[i].is_whitespace() {
        i += 1;
    }
    i
}

/// Tries to parse `(<int>, "<name>", "<definition>")` at position `i`
/// (which must be `(`). Returns the tuple and the index past `)`.
fn read_tuple(chars: &[char], mut i: usize) -> Option<((u32, String, String), usize)> {
    if *chars.get(i)? != '(' {
        return None;
    }
    i = skip_ws(chars, i + 1);
    let start = i;
    while i < chars.len() && chars[i].is_ascii_digit() {
        i += 1;
    }
    if i == start {
        return None;
    }
    let ordinal: u32 = chars[start..i].iter().collect::<String>().parse().ok()?;
    i = skip_ws(chars, i);
    if *chars.get(i)? != ',' {
        return None;
    }
    i = skip_ws(chars, i + 1);
    let (name, after_name) = read_quoted(chars, i)?;
    i = skip_ws(chars, after_name);
    if *chars.get(i)? != ',' {
        return None;
    }
    i = skip_ws(chars, i + 1);
    let (definition, after_def) = read_quoted(chars, i)?;
    i = skip_ws(chars, after_def);
    if *chars.get(i)? != ')' {
        return None;
    }
    Some(((ordinal, name, definition), i + 1))
}

/// Parses exactly one `(No, "Name", "Definition")` tuple out of the reply.
/// Fences and surrounding prose are tolerated; zero or multiple tuples are
/// errors.
pub fn parse_consolidated_tuple(text: &str) -> Result<(u32, String, String)> {
    let cleaned: String = text
        .lines()
        .filter(|l| !is_fence(l))
        .collect::<Vec<_>>()
        .join("\n");
    let chars: Vec<char> = cleaned.chars().collect();
    let mut found = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '(' {
            if let Some((tuple, next)) = read_tuple(&chars, i) {
                found.push(tuple);
                i = next;
                continue;
            }
        }
        i += 1;
    }
    match found.len() {
        0 => Err(Error::Parse {
            what: "consolidated tuple".into(),
            detail: "no (No, \"Name\", \"Definition\") tuple found".into(),
            raw: text.to_string(),
        }),
        1 => Ok(found.pop().unwrap()),
        n => Err(Error::Parse {
            what: "consolidated tuple".into(),
            detail: format!("expected exactly one tuple, found {n}"),
            raw: text.to_string(),
        }),
    }
}

/// Parses an ordered list of integers in 1..=5, tolerating brackets,
/// whitespace, and one trailing period. The count must match
/// `expected_len` exactly.
pub fn parse_score_list(text: &str, expected_len: usize) -> Result<Vec<u8>> {
    if expected_len == 0 {
        return Err(Error::invalid("expected_len must be at least 1"));
    }
    let mut body: String = text
        .lines()
        .filter(|l| !is_fence(l))
        .collect::<Vec<_>>()
        .join(" ");
    body = body.trim().to_string();
    if let Some(stripped) = body.strip_suffix('.') {
        body = stripped.trim_end().to_string();
    }
    if body.starts_with('[') && body.ends_with(']') {
        body = body[1..body.len() - 1].to_string();
    }
    let parse_error = |detail: String| Error::Parse {
        what: "score list".into(),
        detail,
        raw: text.to_string(),
    };
    let mut scores = Vec::new();
    for token in body.split(',') {
        let token = token.trim();
        if token.is_empty() {
            return Err(parse_error("empty entry between commas".into()));
        }
        let value: u8 = token
            .parse()
            .map_err(|_| parse_error(format!("\"{token}\" is not an integer")))?;
        if !(1..=5).contains(&value) {
            return Err(parse_error(format!("score {value} outside 1..=5")));
        }
        scores.push(value);
    }
    if scores.len() != expected_len {
        return Err(parse_error(format!(
            "expected {expected_len} scores, got {}",
            scores.len()
        )));
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_parses_into_named_criterion() {
        let parsed = parse_criteria_rows(
            "1|Clarity|Is the message unambiguous|vague|mostly clear|crystal clear",
        )
        .unwrap();
        assert_eq!(parsed.rows.len(), 1);
        assert!(parsed.skipped.is_empty());
        let row = &parsed.rows[0];
        assert_eq!(row.ordinal, 1);
        assert_eq!(row.name, "Clarity");
        assert_eq!(row.anchor5, "crystal clear");
    }

    #[test]
    fn fences_and_header_lines_are_dropped() {
        let fenced = format!(
            "```\n{CRITERIA_HEADER}\n1|Clarity|def|a|b|c\n2|Urgency|def2|a|b|c\n```",
        );
        let parsed = parse_criteria_rows(&fenced).unwrap();
        assert_eq!(parsed.rows.len(), 2);
        assert!(parsed.skipped.is_empty());

        let bare = "1|Clarity|def|a|b|c\n2|Urgency|def2|a|b|c";
        assert_eq!(parse_criteria_rows(bare).unwrap().rows, parsed.rows);
    }

    #[test]
    fn wrong_field_counts_are_skipped_and_reported() {
        let text = "1|A|def|a|b|c\n2|B|def|a|b\n3|C|def|a|b|c\n4|D|def|a|b|c\n5|E|def|a|b|c";
        let parsed = parse_criteria_rows(text).unwrap();
        assert_eq!(parsed.rows.len(), 4);
        assert_eq!(parsed.skipped.len(), 1);
        assert_eq!(parsed.skipped[0].line, 2);
        assert!(parsed.skipped[0].reason.contains("got 5"));
    }

    #[test]
    fn zero_rows_is_an_error_carrying_the_raw_text() {
        let err = parse_criteria_rows("nothing useful here").unwrap_err();
        match err {
            Error::Parse { raw, .. } => assert_eq!(raw, "nothing useful here"),
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn bad_ordinals_and_empty_names_are_skipped() {
        let text = "x|A|def|a|b|c\n1||def|a|b|c\n2|B|def|a|b|c";
        let parsed = parse_criteria_rows(text).unwrap();
        assert_eq!(parsed.rows.len(), 1);
        assert_eq!(parsed.skipped.len(), 2);
    }

    #[test]
    fn tuple_parses_with_escapes_and_fences() {
        let (ordinal, name, definition) = parse_consolidated_tuple(
            "(2, \"Urgency\", \"Communicates that immediate action is required\")",
        )
        .unwrap();
        assert_eq!(ordinal, 2);
        assert_eq!(name, "Urgency");
        assert_eq!(definition, "Communicates that immediate action is required");

        let (_, name, definition) = parse_consolidated_tuple(
            "```\n(1, \"Say \\\"stop\\\"\", \"Uses \\\\ and \\\"quotes\\\"\")\n```",
        )
        .unwrap();
        assert_eq!(name, "Say \"stop\"");
        assert_eq!(definition, "Uses \\ and \"quotes\"");
    }

    #[test]
    fn tuple_count_must_be_exactly_one() {
        assert!(parse_consolidated_tuple("no tuple here").is_err());
        let two = "(1, \"A\", \"a\") and (2, \"B\", \"b\")";
        let err = parse_consolidated_tuple(two).unwrap_err().to_string();
        assert!(err.contains("found 2"), "{err}");
    }

    #[test]
    fn parenthesized_prose_does_not_confuse_the_tuple_scanner() {
        let text = "Result (as requested): (3, \"Tone\", \"Supportive phrasing (not harsh)\")";
        let (ordinal, name, _) = parse_consolidated_tuple(text).unwrap();
        assert_eq!((ordinal, name.as_str()), (3, "Tone"));
    }

    #[test]
    fn score_lists_tolerate_brackets_spaces_and_trailing_period() {
        let expect = vec![3, 5, 1, 2, 4, 3];
        assert_eq!(parse_score_list("3, 5, 1, 2, 4, 3", 6).unwrap(), expect);
        assert_eq!(parse_score_list("[3, 5, 1, 2, 4, 3]", 6).unwrap(), expect);
        assert_eq!(parse_score_list("  [3,5,1,2,4,3].  ", 6).unwrap(), expect);
        assert_eq!(parse_score_list("```\n[3, 5, 1, 2, 4, 3]\n```", 6).unwrap(), expect);
    }

    #[test]
    fn score_list_count_and_range_are_enforced() {
        assert!(parse_score_list("3, 5, 1, 2, 4", 6).is_err());
        assert!(parse_score_list("3, 5, 1, 2, 4, 6", 6).is_err());
        assert!(parse_score_list("3, 5, 1, 2, 4, 0", 6).is_err());
        assert!(parse_score_list("three, 5, 1, 2, 4, 3", 6).is_err());
        assert!(parse_score_list("", 1).is_err());
        assert!(parse_score_list("3", 0).is_err());
    }

    #[test]
    fn parsers_survive_garbage_without_panicking() {
        // A quick deterministic shake; the heavyweight fuzz lives in the
        // acceptance suite.
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..200 {
            let mut bytes = Vec::with_capacity(64);
            for _ in 0..64 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                bytes.push((state >> 33) as u8);
            }
            let garbage = String::from_utf8_lossy(&bytes).into_owned();
            let _ = parse_criteria_rows(&garbage);
            let _ = parse_consolidated_tuple(&garbage);
            let _ = parse_score_list(&garbage, 6);
        }
    }
}
