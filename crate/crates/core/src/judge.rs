//! LLM-judge rewards: a five-class grading of all candidates of a sample in one
//! prompt, and a binary correct/wrong check used for evaluation.
//!
//! [`LiveJudge`] talks to a chat-completion endpoint and caches every exchange
//! on disk by content hash. [`MockJudge`] is a deterministic offline stand-in
//! driven by the structural rewards; it is a testing aid, not a model of any
//! real grader.

use std::env;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::corpus::Dialect;
use crate::cypher_graph::{ged_reward, GedConfig};
use crate::error::{Error, Result};
use crate::metrics::exact_match;
use crate::sql_components::{component_f1, decompose_sql};

pub const URL_ENV: &str = "STRUCT_REWARD_JUDGE_URL";
pub const KEY_ENV: &str = "STRUCT_REWARD_JUDGE_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeClass {
    VeryBad,
    Bad,
    AboveAverage,
    Good,
    Excellent,
}

impl JudgeClass {
    /// Worst to best.
    pub const ALL: [JudgeClass; 5] = [
        JudgeClass::VeryBad,
        JudgeClass::Bad,
        JudgeClass::AboveAverage,
        JudgeClass::Good,
        JudgeClass::Excellent,
    ];

    /// The label as the grader is asked to write it.
    pub fn label(self) -> &'static str {
        match self {
            JudgeClass::VeryBad => "Very bad",
            JudgeClass::Bad => "Bad",
            JudgeClass::AboveAverage => "Above average",
            JudgeClass::Good => "Good",
            JudgeClass::Excellent => "Excellent",
        }
    }
}

impl fmt::Display for JudgeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Score assigned to each class; must be strictly increasing within `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassScores {
    pub very_bad: f64,
    pub bad: f64,
    pub above_average: f64,
    pub good: f64,
    pub excellent: f64,
}

impl Default for ClassScores {
    fn default() -> Self {
        ClassScores {
            very_bad: 0.0,
            bad: 0.25,
            above_average: 0.5,
            good: 0.75,
            excellent: 1.0,
        }
    }
}

impl ClassScores {
    pub fn score(&self, class: JudgeClass) -> f64 {
        match class {
            JudgeClass::VeryBad => self.very_bad,
            JudgeClass::Bad => self.bad,
            JudgeClass::AboveAverage => self.above_average,
            JudgeClass::Good => self.good,
            JudgeClass::Excellent => self.excellent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scores = JudgeClass::ALL.map(|c| self.score(c));
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Config(format!(
                "judge.class_scores values must lie in [0, 1], got {bad}"
            )));
        }
        if scores.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "judge.class_scores must be strictly increasing from very_bad to excellent".into(),
            ));
        }
        Ok(())
    }
}

fn default_max_parallel() -> usize {
    4
}

fn default_retries() -> u32 {
    2
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeConfig {
    /// Chat-completion endpoint; `STRUCT_REWARD_JUDGE_URL` takes precedence
    /// when set.
    #[serde(default)]
    pub endpoint_url: String,
    pub model_name: String,
    /// Dialect named in the prompts. Batch scoring uses each sample's dialect.
    #[serde(default = "default_dialect")]
    pub dialect_word: Dialect,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub class_scores: ClassScores,
    /// Extra attempts after a failed request.
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_dialect() -> Dialect {
    Dialect::Sql
}

impl JudgeConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        JudgeConfig {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            dialect_word: Dialect::Sql,
            max_parallel: default_max_parallel(),
            cache_dir: None,
            class_scores: ClassScores::default(),
            retries: default_retries(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_name.trim().is_empty() {
            return Err(Error::Config("judge.model_name is empty".into()));
        }
        if self.max_parallel == 0 {
            return Err(Error::Config("judge.max_parallel must be positive".into()));
        }
        if self.timeout_secs == 0 {
            return Err(Error::Config("judge.timeout_secs must be positive".into()));
        }
        self.class_scores.validate()
    }

    /// The endpoint actually used: the environment override or the configured
    /// URL.
    pub fn resolved_url(&self) -> String {
        match env::var(URL_ENV) {
            Ok(url) if !url.trim().is_empty() => url,
            _ => self.endpoint_url.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("judge transport failure, candidates {indices:?} left unscored: {message}")]
    Transport {
        indices: Vec<usize>,
        message: String,
    },

    #[error("no candidates to grade")]
    EmptyCandidates,

    #[error("no judge endpoint configured (set {URL_ENV} or judge.endpoint_url)")]
    NoEndpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgeVerdict {
    pub class_label: JudgeClass,
    pub score: f64,
    pub raw_response: String,
    pub cached: bool,
    /// The response did not name a class for this candidate; the class is the
    /// very_bad fallback.
    pub parse_failed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correctness {
    Correct,
    Wrong,
}

fn swap_dialect(template: &str, dialect: Dialect) -> String {
    template.replace("SQL", dialect.word())
}

/// Substitutes `{name}` placeholders in one pass, so substituted text is never
/// scanned again.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = values.iter().find(|(name, _)| {
            tail.len() > name.len() + 1
                && tail[1..].starts_with(name)
                && tail[1 + name.len()..].starts_with('}')
        });
        match hit {
            Some((name, value)) => {
                out.push_str(value);
                rest = &tail[name.len() + 2..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

const GRADE_TEMPLATE: &str =
    "Compare these SQL queries to the correct query and grade each one as: \
'Very bad', 'Bad', 'Above average', 'Good', or 'Excellent'.

Use the following grading system, with the correct query as reference:

Correct Query: {true_query}

1. Excellent: Perfect match with {true_query}

2. Good: Contains only grammar mistakes

3. Above average: Mostly correct but contains one logical error

4. Bad: Contains multiple mistakes

5. Very bad: No query produced or significantly different from correct query

Queries to grade:
{queries_to_rank}

{format_instructions}";

const CORRECTNESS_TEMPLATE: &str = "You are SQL expert and your task is to evaluate if the predicted SQL query is correct \
based on the Schema and the correct SQL query. If no SQL query was found then the answer is Wrong. \
The query is considered correct even if the only mistakes are in letter casing (uppercase vs lowercase).

Schema: {schema}

Predicted query: {pred_query}

Correct SQL query: {correct_query}

Return ONLY \"Correct\" or \"Wrong\"";

fn format_instructions(count: usize) -> String {
    let mut s = format!(
        "Answer with exactly {count} line{}, one per query in the order given, each of the form \
\"<number>. <grade>\" where <grade> is one of: Very bad, Bad, Above average, Good, Excellent. \
Do not write anything else.",
        if count == 1 { "" } else { "s" }
    );
    s.push_str("\nExample:\n");
    for i in 1..=count.min(2) {
        s.push_str(&format!("{i}. Good\n"));
    }
    s.truncate(s.trim_end().len());
    s
}

/// The grading prompt for one sample. Each candidate goes on its own numbered
/// entry; multi-line candidates are flattened onto one line.
pub fn grade_prompt(dialect: Dialect, gold: &str, candidates: &[&str]) -> String {
    let queries: Vec<String> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            format!(
                "{}. {}",
                i + 1,
                c.split_whitespace().collect::<Vec<_>>().join(" ")
            )
        })
        .collect();
    fill(
        &swap_dialect(GRADE_TEMPLATE, dialect),
        &[
            ("true_query", gold.trim()),
            ("queries_to_rank", &queries.join("\n")),
            (
                "format_instructions",
                &format_instructions(candidates.len()),
            ),
        ],
    )
}

pub fn correctness_prompt(dialect: Dialect, gold: &str, pred: &str, schema_text: &str) -> String {
    fill(
        &swap_dialect(CORRECTNESS_TEMPLATE, dialect),
        &[
            ("schema", schema_text.trim()),
            ("pred_query", pred.trim()),
            ("correct_query", gold.trim()),
        ],
    )
}

/// Lowercased alphanumeric words of `text`.
fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Class labels in order of appearance; two-word labels win over their tails.
fn labels_in(words: &[String]) -> Vec<JudgeClass> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let next = words.get(i + 1).map(String::as_str);
        let (class, width) = match (words[i].as_str(), next) {
            ("very", Some("bad")) => (Some(JudgeClass::VeryBad), 2),
            ("above", Some("average")) => (Some(JudgeClass::AboveAverage), 2),
            ("bad", _) => (Some(JudgeClass::Bad), 1),
            ("good", _) => (Some(JudgeClass::Good), 1),
            ("excellent", _) => (Some(JudgeClass::Excellent), 1),
            _ => (None, 1),
        };
        out.extend(class);
        i += width;
    }
    out
}

/// Reads one class per candidate from a grading response. Numbered lines
/// (`3. Good`, `Query 3: Good`) are assigned by number; otherwise, if the
/// response names exactly one class per candidate, they are taken in order.
/// Candidates left without a class are `None`.
pub fn parse_grades(response: &str, count: usize) -> Vec<Option<JudgeClass>> {
    let mut numbered = vec![None; count];
    let mut any_numbered = false;
    for line in response.lines() {
        let w = words(line);
        let start = usize::from(matches!(
            w.first().map(String::as_str),
            Some("query" | "candidate")
        ));
        let Some(number) = w.get(start).and_then(|t| t.parse::<usize>().ok()) else {
            continue;
        };
        if number == 0 || number > count {
            continue;
        }
        if let Some(&class) = labels_in(&w[start + 1..]).first() {
            any_numbered = true;
            numbered[number - 1].get_or_insert(class);
        }
    }
    if any_numbered {
        return numbered;
    }
    let all = labels_in(&words(response));
    if all.len() == count {
        all.into_iter().map(Some).collect()
    } else {
        vec![None; count]
    }
}

/// `Correct` or `Wrong`, whichever the response says first; anything else is
/// `None`.
pub fn parse_correctness(response: &str) -> Option<Correctness> {
    words(response).iter().find_map(|w| match w.as_str() {
        "correct" => Some(Correctness::Correct),
        "wrong" | "incorrect" => Some(Correctness::Wrong),
        _ => None,
    })
}

fn verdicts(response: &str, count: usize, cached: bool, scores: &ClassScores) -> Vec<JudgeVerdict> {
    parse_grades(response, count)
        .into_iter()
        .map(|class| {
            let class_label = class.unwrap_or(JudgeClass::VeryBad);
            JudgeVerdict {
                class_label,
                score: scores.score(class_label),
                raw_response: response.to_string(),
                cached,
                parse_failed: class.is_none(),
            }
        })
        .collect()
}

/// A source of judge decisions.
pub trait Judge: Send + Sync {
    /// One verdict per candidate, in candidate order.
    fn grade(
        &self,
        dialect: Dialect,
        gold: &str,
        candidates: &[&str],
        schema_text: &str,
    ) -> Result<Vec<JudgeVerdict>, JudgeError>;

    /// `None` for `pred` means no query was produced.
    fn correctness(
        &self,
        dialect: Dialect,
        gold: &str,
        pred: Option<&str>,
        schema_text: &str,
    ) -> Result<Correctness, JudgeError>;
}

struct Semaphore {
    free: Mutex<usize>,
    cond: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cond.notify_one();
    }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    request: String,
    response: String,
}

pub fn cache_key(model_name: &str, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_name.as_bytes());
    hasher.update(b"\n");
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

/// Chat-completion client with an on-disk exchange cache.
pub struct LiveJudge {
    config: JudgeConfig,
    url: String,
    key: Option<String>,
    client: reqwest::blocking::Client,
    permits: Semaphore,
}

impl LiveJudge {
    pub fn new(config: JudgeConfig) -> Result<Self> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("judge client: {e}")))?;
        let url = config.resolved_url();
        let key = env::var(KEY_ENV).ok().filter(|k| !k.is_empty());
        let permits = Semaphore::new(config.max_parallel);
        Ok(LiveJudge {
            config,
            url,
            key,
            client,
            permits,
        })
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    fn cache_path(&self, prompt: &str) -> Option<PathBuf> {
        let dir = self.config.cache_dir.as_ref()?;
        Some(dir.join(format!(
            "{}.json",
            cache_key(&self.config.model_name, prompt)
        )))
    }

    fn read_cache(path: &Path) -> Option<String> {
        let text = fs::read_to_string(path).ok()?;
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) => Some(entry.response),
            Err(e) => {
                log::warn!(
                    "ignoring unreadable judge cache entry {}: {e}",
                    path.display()
                );
                None
            }
        }
    }

    fn write_cache(path: &Path, entry: &CacheEntry) -> std::io::Result<()> {
        let dir = path.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(
            serde_json::to_string_pretty(entry)
                .expect("entry serializes")
                .as_bytes(),
        )?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    fn request_body(&self, prompt: &str) -> String {
        json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        })
        .to_string()
    }

    fn post(&self, body: &str) -> std::result::Result<String, String> {
        if self.url.trim().is_empty() {
            return Err(JudgeError::NoEndpoint.to_string());
        }
        let _permit = self.permits.acquire();
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(100 << attempt.min(6)));
            }
            let mut req = self
                .client
                .post(&self.url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.to_string());
            if let Some(key) = &self.key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().map_err(|e| e.to_string());
                    match text {
                        Ok(text) if status.is_success() => return Ok(text),
                        Ok(text) => {
                            last = format!("HTTP {status}: {}", text.trim());
                            if status.is_client_error() && status.as_u16() != 429 {
                                break;
                            }
                        }
                        Err(e) => last = e,
                    }
                }
                Err(e) => last = e.to_string(),
            }
            log::debug!("judge request attempt {} failed: {last}", attempt + 1);
        }
        Err(last)
    }

    /// The assistant message for `prompt`, from the cache when possible.
    /// Returns the text and whether it came from the cache.
    pub fn complete(&self, prompt: &str, indices: &[usize]) -> Result<(String, bool), JudgeError> {
        let cache_path = self.cache_path(prompt);
        if let Some(response) = cache_path.as_deref().and_then(Self::read_cache) {
            return Ok((message_content(&response), true));
        }
        let request = self.request_body(prompt);
        let response = self
            .post(&request)
            .map_err(|message| JudgeError::Transport {
                indices: indices.to_vec(),
                message,
            })?;
        if let Some(path) = cache_path {
            let entry = CacheEntry {
                request,
                response: response.clone(),
            };
            if let Err(e) = Self::write_cache(&path, &entry) {
                log::warn!("could not write judge cache entry {}: {e}", path.display());
            }
        }
        Ok((message_content(&response), false))
    }
}

/// The first choice's message content of a chat-completion response; bodies
/// that are not such JSON are taken as the message itself.
fn message_content(body: &str) -> String {
    let Ok(value) = serde_json::from_str::<Value>(body) else {
        return body.to_string();
    };
    let content = value
        .pointer("/choices/0/message/content")
        .or_else(|| value.pointer("/choices/0/text"))
        .or_else(|| value.pointer("/message/content"));
    match content {
        Some(Value::String(s)) => s.clone(),
        _ => body.to_string(),
    }
}

impl Judge for LiveJudge {
    fn grade(
        &self,
        dialect: Dialect,
        gold: &str,
        candidates: &[&str],
        _schema_text: &str,
    ) -> Result<Vec<JudgeVerdict>, JudgeError> {
        if candidates.is_empty() {
            return Err(JudgeError::EmptyCandidates);
        }
        let prompt = grade_prompt(dialect, gold, candidates);
        let indices: Vec<usize> = (0..candidates.len()).collect();
        let (text, cached) = self.complete(&prompt, &indices)?;
        Ok(verdicts(
            &text,
            candidates.len(),
            cached,
            &self.config.class_scores,
        ))
    }

    fn correctness(
        &self,
        dialect: Dialect,
        gold: &str,
        pred: Option<&str>,
        schema_text: &str,
    ) -> Result<Correctness, JudgeError> {
        let Some(pred) = pred.filter(|p| !p.trim().is_empty()) else {
            return Ok(Correctness::Wrong);
        };
        let prompt = correctness_prompt(dialect, gold, pred, schema_text);
        let (text, _) = self.complete(&prompt, &[0])?;
        Ok(parse_correctness(&text).unwrap_or(Correctness::Wrong))
    }
}

/// Deterministic offline judge: exact match is Excellent; otherwise the
/// structural reward (component F1 for SQL, graph-edit reward for Cypher)
/// decides Good (>= 0.8) or Above average (>= 0.5); a parseable query is Bad
/// and anything else Very bad.
#[derive(Debug, Clone, Default)]
pub struct MockJudge {
    pub class_scores: ClassScores,
    pub ged: GedConfig,
}

impl MockJudge {
    pub fn classify(&self, dialect: Dialect, gold: &str, candidate: &str) -> JudgeClass {
        if exact_match(gold, candidate) {
            return JudgeClass::Excellent;
        }
        let (structural, parse_ok) = match dialect {
            Dialect::Sql => {
                let (g, _) = decompose_sql(gold);
                let (p, ok) = decompose_sql(candidate);
                (component_f1(&g, &p), ok)
            }
            Dialect::Cypher => {
                let parsed = crate::cypher_graph::extract_pattern_graph(candidate).parse_ok;
                (ged_reward(gold, candidate, &self.ged), parsed)
            }
        };
        if structural >= 0.8 {
            JudgeClass::Good
        } else if structural >= 0.5 {
            JudgeClass::AboveAverage
        } else if parse_ok {
            JudgeClass::Bad
        } else {
            JudgeClass::VeryBad
        }
    }
}

impl Judge for MockJudge {
    fn grade(
        &self,
        dialect: Dialect,
        gold: &str,
        candidates: &[&str],
        _schema_text: &str,
    ) -> Result<Vec<JudgeVerdict>, JudgeError> {
        if candidates.is_empty() {
            return Err(JudgeError::EmptyCandidates);
        }
        let classes: Vec<JudgeClass> = candidates
            .iter()
            .map(|c| self.classify(dialect, gold, c))
            .collect();
        let raw: Vec<String> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {c}", i + 1))
            .collect();
        let raw = raw.join("\n");
        Ok(classes
            .into_iter()
            .map(|class_label| JudgeVerdict {
                class_label,
                score: self.class_scores.score(class_label),
                raw_response: raw.clone(),
                cached: false,
                parse_failed: false,
            })
            .collect())
    }

    fn correctness(
        &self,
        dialect: Dialect,
        gold: &str,
        pred: Option<&str>,
        _schema_text: &str,
    ) -> Result<Correctness, JudgeError> {
        Ok(match pred {
            Some(p) if self.classify(dialect, gold, p) == JudgeClass::Excellent => {
                Correctness::Correct
            }
            _ => Correctness::Wrong,
        })
    }
}

/// Grades `candidates` against `gold` with a live judge built from `cfg`.
pub fn judge_grade(
    gold: &str,
    candidates: &[&str],
    schema_text: &str,
    cfg: &JudgeConfig,
) -> Result<Vec<JudgeVerdict>> {
    let judge = LiveJudge::new(cfg.clone())?;
    Ok(judge.grade(cfg.dialect_word, gold, candidates, schema_text)?)
}

/// Binary correctness of `pred` with a live judge built from `cfg`; an absent
/// prediction is wrong without contacting the endpoint.
pub fn judge_correctness(
    gold: &str,
    pred: Option<&str>,
    schema_text: &str,
    cfg: &JudgeConfig,
) -> Result<Correctness> {
    if pred.is_none_or(|p| p.trim().is_empty()) {
        return Ok(Correctness::Wrong);
    }
    let judge = LiveJudge::new(cfg.clone())?;
    Ok(judge.correctness(cfg.dialect_word, gold, pred, schema_text)?)
}
