//! Evaluation metrics: exact match, sentence BLEU-4, and execution accuracy
//! and F1 through an external execution command.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keywords::is_keyword;

/// Whitespace collapsed outside quotes, trailing semicolons removed, keywords
/// upper-cased outside quotes. Literals and identifiers keep their case.
pub fn normalize_query(query: &str) -> String {
    let mut out = String::with_capacity(query.len());
    let mut word = String::new();
    let mut quote: Option<char> = None;
    let mut pending_space = false;

    fn flush(out: &mut String, word: &mut String) {
        if word.is_empty() {
            return;
        }
        if is_keyword(word) {
            out.push_str(&word.to_uppercase());
        } else {
            out.push_str(word);
        }
        word.clear();
    }

    for c in query.chars() {
        if let Some(q) = quote {
            out.push(c);
            if c == q {
                quote = None;
            }
            continue;
        }
        if c.is_whitespace() {
            flush(&mut out, &mut word);
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
            continue;
        }
        flush(&mut out, &mut word);
        if matches!(c, '\'' | '"' | '`') {
            quote = Some(c);
        }
        out.push(c);
    }
    flush(&mut out, &mut word);
    loop {
        let trimmed = out.trim_end().trim_end_matches(';').trim_end();
        if trimmed.len() == out.len() {
            break;
        }
        out.truncate(trimmed.len());
    }
    out
}

pub fn exact_match(gold: &str, pred: &str) -> bool {
    normalize_query(gold) == normalize_query(pred)
}

/// Runs of word characters, and every other non-space character on its own.
pub fn bleu_tokens(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        let wordy = c.is_alphanumeric() || c == '_';
        if wordy {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            tokens.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            tokens.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        tokens.push(&text[s..]);
    }
    tokens
}

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU against one reference, up to 4-grams (fewer when the
/// prediction is shorter), with a brevity penalty. Higher orders with no
/// matching n-gram use add-one smoothing `1 / (total + 1)`; no unigram match
/// at all scores 0. Two empty strings score 1. Both queries are first
/// normalized as for [`exact_match`], so exact matches always score 1.
pub fn bleu(gold: &str, pred: &str) -> f64 {
    let (gold, pred) = (normalize_query(gold), normalize_query(pred));
    let reference = bleu_tokens(&gold);
    let hypothesis = bleu_tokens(&pred);
    if hypothesis.is_empty() {
        return if reference.is_empty() { 1.0 } else { 0.0 };
    }
    if reference.is_empty() {
        return 0.0;
    }
    let order = hypothesis.len().min(4);
    let mut log_sum = 0.0;
    for n in 1..=order {
        let hyp = ngram_counts(&hypothesis, n);
        let refc = ngram_counts(&reference, n);
        let total = hypothesis.len() + 1 - n;
        let matched: usize = hyp
            .iter()
            .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matched > 0 {
            matched as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let (c, r) = (hypothesis.len() as f64, reference.len() as f64);
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    (bp * (log_sum / order as f64).exp()).clamp(0.0, 1.0)
}

/// One result cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Null,
    Number(f64),
    Text(String),
}

impl Scalar {
    /// Reads one tab-separated field: `\N` is null, finite numbers are numeric,
    /// anything else is text.
    pub fn parse(field: &str) -> Scalar {
        if field == "\\N" {
            return Scalar::Null;
        }
        match field.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && !field.trim().is_empty() => Scalar::Number(v),
            _ => Scalar::Text(field.to_string()),
        }
    }

    /// Key under which equal values coincide (`1` and `1.0` are the same).
    fn key(&self) -> String {
        match self {
            Scalar::Null => "\0null".into(),
            Scalar::Number(v) => format!("\0n{}", v + 0.0),
            Scalar::Text(s) => format!("s{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Error,
    Timeout,
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecStatus::Ok => "ok",
            ExecStatus::Error => "error",
            ExecStatus::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecResult {
    pub status: ExecStatus,
    /// Present iff `status` is ok.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<Scalar>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_text: Option<String>,
}

impl ExecResult {
    pub fn ok(rows: Vec<Vec<Scalar>>) -> Self {
        ExecResult {
            status: ExecStatus::Ok,
            rows: Some(rows),
            error_text: None,
        }
    }

    pub fn error(text: impl Into<String>) -> Self {
        ExecResult {
            status: ExecStatus::Error,
            rows: None,
            error_text: Some(text.into()),
        }
    }

    pub fn timeout(secs: u64) -> Self {
        ExecResult {
            status: ExecStatus::Timeout,
            rows: None,
            error_text: Some(format!("timed out after {secs} s")),
        }
    }

    /// Parses oracle output: one row per line, tab-separated fields.
    pub fn from_output(stdout: &str) -> Self {
        let rows = stdout
            .lines()
            .map(|line| line.strip_suffix('\r').unwrap_or(line))
            .filter(|line| !line.is_empty())
            .map(|line| line.split('\t').map(Scalar::parse).collect())
            .collect();
        ExecResult::ok(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExecComparison {
    /// False when the gold query did not execute; the other fields are then
    /// floors and the sample should be left out of execution aggregates.
    pub evaluable: bool,
    pub exe_match: bool,
    pub f1: f64,
}

fn row_multiset(rows: &[Vec<Scalar>]) -> HashMap<Vec<String>, usize> {
    let mut counts = HashMap::new();
    for row in rows {
        *counts
            .entry(row.iter().map(Scalar::key).collect())
            .or_insert(0) += 1;
    }
    counts
}

/// Row-multiset comparison of two executions. Row order is ignored; column
/// order is not.
pub fn execution_compare(gold: &ExecResult, pred: &ExecResult) -> ExecComparison {
    let floor = |evaluable| ExecComparison {
        evaluable,
        exe_match: false,
        f1: 0.0,
    };
    let (Some(gold_rows), ExecStatus::Ok) = (&gold.rows, gold.status) else {
        return floor(false);
    };
    let (Some(pred_rows), ExecStatus::Ok) = (&pred.rows, pred.status) else {
        return floor(true);
    };
    let g = row_multiset(gold_rows);
    let p = row_multiset(pred_rows);
    let exe_match = g == p;
    if gold_rows.is_empty() && pred_rows.is_empty() {
        return ExecComparison {
            evaluable: true,
            exe_match,
            f1: 1.0,
        };
    }
    let overlap: usize = p
        .iter()
        .map(|(row, &c)| c.min(g.get(row).copied().unwrap_or(0)))
        .sum();
    let f1 = if overlap == 0 {
        0.0
    } else {
        let precision = overlap as f64 / pred_rows.len() as f64;
        let recall = overlap as f64 / gold_rows.len() as f64;
        2.0 * precision * recall / (precision + recall)
    };
    ExecComparison {
        evaluable: true,
        exe_match,
        f1,
    }
}

/// An external command that executes one query against one database and
/// prints the result rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecOracle {
    /// Shell command with `{db}` and `{query_file}` placeholders, which are
    /// substituted with shell-quoted paths.
    pub command_template: String,
    pub timeout_secs: u64,
}

impl ExecOracle {
    pub fn validate(&self) -> Result<()> {
        for placeholder in ["{db}", "{query_file}"] {
            if !self.command_template.contains(placeholder) {
                return Err(Error::Config(format!(
                    "eval.oracle.command_template must contain {placeholder}"
                )));
            }
        }
        if self.timeout_secs == 0 {
            return Err(Error::Config(
                "eval.oracle.timeout_secs must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.to_string_lossy().replace('\'', "'\\''"))
}

fn drain(mut pipe: impl Read + Send + 'static) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        buf
    })
}

fn kill_group(pid: u32) {
    // The child leads its own process group, so this also reaches anything
    // the shell started.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

/// Executes `query` through the oracle. Spawn failures are errors; a nonzero
/// exit is an `error` result carrying the command's output; exceeding the
/// deadline kills the command and gives a `timeout` result.
pub fn run_oracle(oracle: &ExecOracle, db_path: &Path, query: &str) -> Result<ExecResult> {
    oracle.validate()?;
    let mut query_file = tempfile::Builder::new()
        .prefix("struct-reward-query-")
        .tempfile()
        .map_err(|e| Error::Oracle(format!("query file: {e}")))?;
    query_file
        .write_all(query.as_bytes())
        .and_then(|_| query_file.flush())
        .map_err(|e| Error::Oracle(format!("query file: {e}")))?;
    let command = oracle
        .command_template
        .replace("{db}", &shell_quote(db_path))
        .replace("{query_file}", &shell_quote(query_file.path()));

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|e| Error::Oracle(format!("cannot spawn `{command}`: {e}")))?;
    let out = drain(child.stdout.take().expect("piped stdout"));
    let err = drain(child.stderr.take().expect("piped stderr"));

    let deadline = Instant::now() + Duration::from_secs(oracle.timeout_secs);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() >= deadline => break None,
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(Error::Oracle(format!("waiting for oracle: {e}"))),
        }
    };
    let Some(status) = status else {
        kill_group(child.id());
        let _ = child.wait();
        return Ok(ExecResult::timeout(oracle.timeout_secs));
    };
    // A background grandchild may still hold the pipes open.
    kill_group(child.id());
    let stdout = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&err.join().unwrap_or_default()).into_owned();
    if !status.success() {
        let mut text = stderr.trim().to_string();
        if text.is_empty() {
            text = stdout.trim().to_string();
        }
        if text.is_empty() {
            text = format!("oracle exited with {status}");
        }
        return Ok(ExecResult::error(text));
    }
    Ok(ExecResult::from_output(&stdout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_match_normalization() {
        assert!(exact_match("SELECT 1", "select   1;"));
        assert!(!exact_match("SELECT a", "SELECT b"));
        assert!(!exact_match("SELECT Name FROM t", "SELECT name FROM t"));
        assert!(!exact_match("SELECT 'Ab'", "SELECT 'ab'"));
        assert!(exact_match(
            "MATCH (n:Person)\n  RETURN n",
            "match (n:Person) return n ;"
        ));
        assert!(!exact_match("SELECT 'a  b'", "SELECT 'a b'"));
    }

    #[test]
    fn tokens_split_punctuation() {
        assert_eq!(
            bleu_tokens("MATCH (a:B)-->(c)"),
            ["MATCH", "(", "a", ":", "B", ")", "-", "-", ">", "(", "c", ")"]
        );
        assert_eq!(bleu_tokens("  max_age>=3 "), ["max_age", ">", "=", "3"]);
    }

    #[test]
    fn bleu_boundaries() {
        assert_eq!(bleu("MATCH (a) RETURN a", "MATCH (a) RETURN a"), 1.0);
        assert_eq!(bleu("MATCH (a) RETURN a", ""), 0.0);
        assert_eq!(bleu("", ""), 1.0);
        assert_eq!(bleu("a b c", "x y z"), 0.0);
    }

    #[test]
    fn bleu_one_token_changed() {
        // Six tokens each; the last differs, so n-gram precisions are 5/6,
        // 4/5, 3/4 and 2/3 with no brevity penalty.
        let expected = (5.0 / 6.0 * 4.0 / 5.0 * 3.0 / 4.0 * 2.0 / 3.0f64).powf(0.25);
        assert!((bleu("MATCH (a) RETURN a", "MATCH (a) RETURN b") - expected).abs() < 1e-12);
    }

    #[test]
    fn bleu_brevity_and_smoothing() {
        // Reference of 4 tokens, hypothesis of 2 matching tokens (order 2).
        let bp = (1.0f64 - 4.0 / 2.0).exp();
        assert!((bleu("a b c d", "a b") - bp).abs() < 1e-12);
        // No bigram match: p2 = 1 / (1 + 1).
        let want = (1.0f64 * 0.5).sqrt();
        assert!((bleu("b a", "a b") - want).abs() < 1e-12);
    }

    fn rows(data: &[&[&str]]) -> ExecResult {
        ExecResult::ok(
            data.iter()
                .map(|r| r.iter().map(|f| Scalar::parse(f)).collect())
                .collect(),
        )
    }

    #[test]
    fn execution_compare_cases() {
        let gold = rows(&[&["1", "a"], &["2", "b"], &["3", "c"], &["4", "d"]]);
        let same = rows(&[&["4", "d"], &["3.0", "c"], &["2", "b"], &["1", "a"]]);
        assert_eq!(
            execution_compare(&gold, &same),
            ExecComparison {
                evaluable: true,
                exe_match: true,
                f1: 1.0
            }
        );
        let half = rows(&[&["1", "a"], &["2", "b"]]);
        let c = execution_compare(&gold, &half);
        assert!(!c.exe_match);
        assert!((c.f1 - 2.0 / 3.0).abs() < 1e-12);
        let swapped = rows(&[&["a", "1"]]);
        assert_eq!(execution_compare(&gold, &swapped).f1, 0.0);
        let t = execution_compare(&gold, &ExecResult::timeout(1));
        assert_eq!((t.evaluable, t.exe_match, t.f1), (true, false, 0.0));
        let u = execution_compare(&ExecResult::error("boom"), &gold);
        assert!(!u.evaluable);
        let empty = rows(&[]);
        assert_eq!(execution_compare(&empty, &empty).f1, 1.0);
    }

    #[test]
    fn scalars_parse() {
        assert_eq!(Scalar::parse("\\N"), Scalar::Null);
        assert_eq!(Scalar::parse("2.50"), Scalar::Number(2.5));
        assert_eq!(Scalar::parse("NaN"), Scalar::Text("NaN".into()));
        assert_eq!(Scalar::parse(""), Scalar::Text(String::new()));
        assert_eq!(Scalar::parse("-0").key(), Scalar::parse("0").key());
        let r = ExecResult::from_output("1\tx\n\\N\t\n");
        assert_eq!(
            r.rows.unwrap()[1],
            vec![Scalar::Null, Scalar::Text(String::new())]
        );
    }

    #[test]
    fn oracle_template_needs_placeholders() {
        let bad = ExecOracle {
            command_template: "cat {query_file}".into(),
            timeout_secs: 1,
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn bleu_in_unit_interval(a in "[a-c (),.]{0,24}", b in "[a-c (),.]{0,24}") {
            let s = bleu(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(bleu(&a, &a), 1.0);
        }

        #[test]
        fn exact_match_implies_bleu_one(
            q in proptest::sample::select(vec!["select", "SELECT", "from", "a", "A", "'x y'", " ", "  ", ";", "(", ")"]).prop_map(String::from),
            parts in proptest::collection::vec(proptest::sample::select(vec!["select", "SELECT", "from", "FROM", "a", "'x y'", " ", "\n", ";", "("]), 0..12),
        ) {
            let pred: String = parts.concat();
            let gold = format!("{q}{}", pred.to_uppercase());
            if exact_match(&gold, &pred) {
                prop_assert_eq!(bleu(&gold, &pred), 1.0);
            }
            let spaced = format!("  {}  ;", pred.replace(' ', "   "));
            if exact_match(&pred, &spaced) {
                prop_assert_eq!(bleu(&pred, &spaced), 1.0);
            }
        }

        #[test]
        fn comparison_is_symmetric(a in proptest::collection::vec(0u8..4, 0..6), b in proptest::collection::vec(0u8..4, 0..6)) {
            let to = |v: &[u8]| ExecResult::ok(v.iter().map(|x| vec![Scalar::Number(f64::from(*x))]).collect());
            let (x, y) = (execution_compare(&to(&a), &to(&b)), execution_compare(&to(&b), &to(&a)));
            prop_assert_eq!(x.exe_match, y.exe_match);
            prop_assert!((x.f1 - y.f1).abs() < 1e-12);
        }
    }
}
