//! Dataset records and answer extraction from raw model completions.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Sql,
    Cypher,
}

impl Dialect {
    /// Lowercase name, as used in dataset files and fence tags.
    pub fn name(self) -> &'static str {
        match self {
            Dialect::Sql => "sql",
            Dialect::Cypher => "cypher",
        }
    }

    /// The word substituted into judge prompts.
    pub fn word(self) -> &'static str {
        match self {
            Dialect::Sql => "SQL",
            Dialect::Cypher => "Cypher",
        }
    }

    fn leading_keywords(self) -> &'static [&'static str] {
        match self {
            Dialect::Sql => &["SELECT", "WITH"],
            Dialect::Cypher => &["MATCH", "OPTIONAL", "CREATE", "MERGE", "CALL", "RETURN"],
        }
    }

    fn fence_tags(self) -> &'static [&'static str] {
        match self {
            Dialect::Sql => &["sql", "sqlite"],
            Dialect::Cypher => &["cypher"],
        }
    }

    fn line_comment(self) -> &'static str {
        match self {
            Dialect::Sql => "--",
            Dialect::Cypher => "//",
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sql" => Ok(Dialect::Sql),
            "cypher" => Ok(Dialect::Cypher),
            other => Err(format!(
                "unknown dialect `{other}` (expected sql or cypher)"
            )),
        }
    }
}

/// One dataset record: a question, its schema context, the gold query and the
/// `G` raw completions sampled for it. Candidate order identifies outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySample {
    pub id: String,
    pub question: String,
    #[serde(rename = "schema")]
    pub schema_text: String,
    pub dialect: Dialect,
    #[serde(rename = "gold")]
    pub gold_query: String,
    pub candidates: Vec<String>,
    /// Keys not understood by this crate, kept for round-tripping.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl QuerySample {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("`id` is empty".into());
        }
        if self.gold_query.trim().is_empty() {
            return Err(format!("sample {}: `gold` is empty", self.id));
        }
        if self.candidates.is_empty() {
            return Err(format!("sample {}: `candidates` is empty", self.id));
        }
        Ok(())
    }

    pub fn group_size(&self) -> usize {
        self.candidates.len()
    }

    /// Compact single-line JSON in the dataset key order.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("sample serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Result of checking every record of a dataset without stopping at the first
/// problem.
#[derive(Debug, Clone, Default)]
pub struct DatasetReport {
    pub samples: Vec<QuerySample>,
    pub violations: Vec<Violation>,
}

impl DatasetReport {
    pub fn count(&self, dialect: Dialect) -> usize {
        self.samples.iter().filter(|s| s.dialect == dialect).count()
    }
}

/// Parses and validates dataset text. Blank lines are skipped but still count
/// towards line numbers.
pub fn check_dataset(text: &str, expected_dialect: Option<Dialect>) -> DatasetReport {
    let mut report = DatasetReport::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let sample: QuerySample = match serde_json::from_str(raw) {
            Ok(s) => s,
            Err(e) => {
                report.violations.push(Violation {
                    line,
                    id: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if let Err(message) = sample.validate() {
            report.violations.push(Violation {
                line,
                id: Some(sample.id.clone()),
                message,
            });
            continue;
        }
        if let Some(expected) = expected_dialect {
            if sample.dialect != expected {
                report.violations.push(Violation {
                    line,
                    id: Some(sample.id.clone()),
                    message: format!(
                        "sample {} has dialect {}, expected {}",
                        sample.id, sample.dialect, expected
                    ),
                });
                continue;
            }
        }
        report.samples.push(sample);
    }
    report
}

pub fn parse_dataset(text: &str, expected_dialect: Option<Dialect>) -> Result<Vec<QuerySample>> {
    let report = check_dataset(text, None);
    if let Some(v) = report.violations.into_iter().next() {
        return Err(Error::Record {
            line: v.line,
            message: v.message,
        });
    }
    if let Some(expected) = expected_dialect {
        let ids: Vec<String> = report
            .samples
            .iter()
            .filter(|s| s.dialect != expected)
            .map(|s| s.id.clone())
            .collect();
        if !ids.is_empty() {
            return Err(Error::DialectMismatch {
                expected: expected.to_string(),
                ids,
            });
        }
    }
    Ok(report.samples)
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    expected_dialect: Option<Dialect>,
) -> Result<Vec<QuerySample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, expected_dialect)
}

pub fn serialize_dataset(samples: &[QuerySample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&s.to_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionNote {
    FencedBlock,
    BareTail,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtractedAnswer {
    pub query: Option<String>,
    pub had_think_block: bool,
    pub extraction_note: ExtractionNote,
    /// Set when the chosen fenced block carried another language's tag.
    pub foreign_fence_tag: Option<String>,
}

impl ExtractedAnswer {
    fn none(had_think_block: bool) -> Self {
        ExtractedAnswer {
            query: None,
            had_think_block,
            extraction_note: ExtractionNote::None,
            foreign_fence_tag: None,
        }
    }
}

struct Fence<'a> {
    tag: String,
    body: &'a str,
}

fn strip_think(text: &str) -> (&str, bool) {
    let trimmed = text.trim_start();
    if let Some(rest) = trimmed.strip_prefix("<think>") {
        if let Some(end) = rest.find("</think>") {
            return (&rest[end + "</think>".len()..], true);
        }
        return (text, false);
    }
    // Chat templates sometimes put the opening tag in the prompt.
    if !text.contains("<think>") {
        if let Some(end) = text.find("</think>") {
            return (&text[end + "</think>".len()..], true);
        }
    }
    (text, false)
}

fn fenced_blocks(text: &str) -> Vec<Fence<'_>> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let line_end = after.find('\n').unwrap_or(after.len());
        let info = &after[..line_end];
        if let Some(close) = info.find("```") {
            // Single-line fence: ```sql SELECT 1```
            let inner = info[..close].trim();
            let (tag, body) = match inner.split_once(char::is_whitespace) {
                Some((first, tail)) if is_fence_tag(first) => (first.to_ascii_lowercase(), tail),
                _ => (String::new(), inner),
            };
            blocks.push(Fence { tag, body });
            rest = &after[close + 3..];
            continue;
        }
        let tag = info.trim().to_ascii_lowercase();
        let body_start = (line_end + 1).min(after.len());
        let body_region = &after[body_start..];
        match body_region.find("```") {
            Some(close) => {
                blocks.push(Fence {
                    tag,
                    body: &body_region[..close],
                });
                rest = &body_region[close + 3..];
            }
            None => {
                // Unterminated (truncated generation): take the rest.
                blocks.push(Fence {
                    tag,
                    body: body_region,
                });
                break;
            }
        }
    }
    blocks
}

fn is_fence_tag(word: &str) -> bool {
    matches!(
        word.to_ascii_lowercase().as_str(),
        "sql" | "sqlite" | "cypher" | "mql" | "json"
    )
}

/// True when the text, after leading line comments, starts with one of the
/// dialect's statement keywords.
fn starts_with_keyword(text: &str, dialect: Dialect) -> bool {
    let comment = dialect.line_comment();
    let mut rest = text.trim_start();
    while rest.starts_with(comment) {
        rest = match rest.find('\n') {
            Some(nl) => rest[nl + 1..].trim_start(),
            None => "",
        };
    }
    let word: String = rest
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect();
    dialect
        .leading_keywords()
        .iter()
        .any(|k| k.eq_ignore_ascii_case(&word))
}

/// Pulls the final query out of a raw completion.
///
/// A leading `<think>…</think>` block is dropped. The last fenced block tagged
/// with the dialect (or untagged) wins; failing that, the last block with some
/// other tag; failing that, the remaining text if it starts with a dialect
/// keyword. Blocks whose body does not start with a dialect keyword are
/// skipped, which keeps extraction idempotent on its own output.
pub fn extract_answer(completion: &str, dialect: Dialect) -> ExtractedAnswer {
    let (rest, had_think_block) = strip_think(completion);

    let blocks: Vec<Fence<'_>> = fenced_blocks(rest)
        .into_iter()
        .filter(|b| starts_with_keyword(b.body, dialect))
        .collect();

    let own = |b: &&Fence<'_>| b.tag.is_empty() || dialect.fence_tags().contains(&b.tag.as_str());
    if let Some(block) = blocks.iter().rev().find(own) {
        return ExtractedAnswer {
            query: Some(block.body.trim().to_string()),
            had_think_block,
            extraction_note: ExtractionNote::FencedBlock,
            foreign_fence_tag: None,
        };
    }
    if let Some(block) = blocks.last() {
        return ExtractedAnswer {
            query: Some(block.body.trim().to_string()),
            had_think_block,
            extraction_note: ExtractionNote::FencedBlock,
            foreign_fence_tag: Some(block.tag.clone()),
        };
    }

    let tail = rest.trim();
    if !tail.is_empty() && !tail.contains("```") && starts_with_keyword(tail, dialect) {
        return ExtractedAnswer {
            query: Some(tail.to_string()),
            had_think_block,
            extraction_note: ExtractionNote::BareTail,
            foreign_fence_tag: None,
        };
    }
    ExtractedAnswer::none(had_think_block)
}
