use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use struct_reward::corpus::check_dataset;
use struct_reward::cypher_graph::{ged_reward_detailed, EditKind, EditOp, GedConfig};
use struct_reward::grpo::Objective;
use struct_reward::judge::{Correctness, Judge, LiveJudge, MockJudge};
use struct_reward::metrics::{
    bleu, exact_match, execution_compare, run_oracle, ExecComparison, ExecStatus,
};
use struct_reward::reward_combine::{explain_candidate, score_batch, Explain};
use struct_reward::{
    extract_answer, grpo_objective, load_dataset, Dialect, Error, PolicyGroup, QuerySample,
    RewardBreakdown, RunConfig,
};

use crate::JudgeMode;

/// A failed command: exit code 1 for input and configuration problems, 2 for
/// failures of external services (judge endpoint, execution oracle).
#[derive(Debug)]
pub enum CliError {
    Input(String),
    External(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::External(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::External(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Judge(_) | Error::SampleJudge { .. } | Error::Oracle(_) => {
                CliError::External(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn write_output(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        }
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("stdout: {e}"))),
    }
}

fn push_record(buf: &mut String, record: &impl Serialize) {
    buf.push_str(&serde_json::to_string(record).expect("record serializes"));
    buf.push('\n');
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn load_config(path: &Path, workers: Option<usize>) -> CliResult<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Input("--workers must be positive".into()));
        }
        config.workers = w;
    }
    Ok(config)
}

/// Builds the judge selected by `mode` (or by the config when no mode is
/// given) and returns whether the judge term is enabled.
fn select_judge(
    config: &RunConfig,
    mode: Option<JudgeMode>,
) -> CliResult<(bool, Option<Box<dyn Judge>>)> {
    let mode = match mode {
        Some(m) => m,
        None if config.reward.judge_enabled => JudgeMode::Live,
        None => JudgeMode::Off,
    };
    Ok(match mode {
        JudgeMode::Off => (false, None),
        JudgeMode::Mock => {
            let judge = MockJudge {
                class_scores: config
                    .judge
                    .as_ref()
                    .map(|j| j.class_scores)
                    .unwrap_or_default(),
                ged: config.reward.ged,
            };
            (true, Some(Box::new(judge)))
        }
        JudgeMode::Live => {
            let Some(judge) = &config.judge else {
                return Err(CliError::Input(
                    "a live judge needs a [judge] section in the config".into(),
                ));
            };
            (true, Some(Box::new(LiveJudge::new(judge.clone())?)))
        }
    })
}

pub struct ScoreArgs {
    pub dataset: PathBuf,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub dialect: Option<Dialect>,
    pub explain: bool,
    pub judge: Option<JudgeMode>,
    pub judge_fail_zero: bool,
}

#[derive(Serialize)]
struct ScoreRecord<'a> {
    id: &'a str,
    candidate: usize,
    #[serde(flatten)]
    breakdown: &'a RewardBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    explain: Option<Explain>,
}

pub fn score(args: &ScoreArgs) -> CliResult {
    let mut config = load_config(&args.config, args.workers)?;
    let samples = load_dataset(&args.dataset, args.dialect)?;
    let (enabled, judge) = select_judge(&config, args.judge)?;
    config.reward.judge_enabled = enabled;
    config.reward.judge_fail_zero |= args.judge_fail_zero;

    let scored = score_batch(&samples, &config.reward, judge.as_deref(), config.workers)?;

    let mut buf = String::new();
    for (sample, group) in samples.iter().zip(&scored) {
        for (i, breakdown) in group.iter().enumerate() {
            let record = ScoreRecord {
                id: &sample.id,
                candidate: i,
                breakdown,
                explain: args.explain.then(|| explain_candidate(sample, i)),
            };
            push_record(&mut buf, &record);
        }
    }
    let all: Vec<&RewardBreakdown> = scored.iter().flatten().collect();
    let summary = json!({
        "summary": {
            "samples": samples.len(),
            "candidates": all.len(),
            "judge_mean": mean(all.iter().filter_map(|b| b.judge)),
            "string_mean": mean(all.iter().map(|b| b.string)),
            "structural_mean": mean(all.iter().map(|b| b.structural)),
            "total_mean": mean(all.iter().map(|b| b.total)),
        }
    });
    push_record(&mut buf, &summary);
    write_output(args.out.as_deref(), &buf)
}

struct ScoreLine {
    line: usize,
    id: String,
    candidate: usize,
    total: f64,
    logp: [Option<f64>; 3],
}

fn parse_score_line(line: usize, value: &Value) -> CliResult<ScoreLine> {
    let bad = |what: &str| CliError::Input(format!("line {line}: {what}"));
    let id = value
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing string `id`"))?;
    let candidate = value
        .get("candidate")
        .and_then(Value::as_u64)
        .ok_or_else(|| bad("missing integer `candidate`"))?;
    let total = value
        .get("total")
        .and_then(Value::as_f64)
        .ok_or_else(|| bad("missing number `total`"))?;
    let mut logp = [None; 3];
    for (slot, key) in logp
        .iter_mut()
        .zip(["logp_current", "logp_old", "logp_ref"])
    {
        if let Some(v) = value.get(key) {
            *slot = Some(
                v.as_f64()
                    .ok_or_else(|| bad(&format!("`{key}` is not a number")))?,
            );
        }
    }
    Ok(ScoreLine {
        line,
        id: id.to_string(),
        candidate: candidate as usize,
        total,
        logp,
    })
}

/// Consecutive records sharing an id form one group.
fn read_groups(text: &str) -> CliResult<Vec<Vec<ScoreLine>>> {
    let mut groups: Vec<Vec<ScoreLine>> = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw)
            .map_err(|e| CliError::Input(format!("line {}: {e}", idx + 1)))?;
        if value.get("summary").is_some() {
            continue;
        }
        let record = parse_score_line(idx + 1, &value)?;
        match groups.last_mut() {
            Some(g) if g[0].id == record.id => g.push(record),
            _ => {
                if !seen.insert(record.id.clone()) {
                    return Err(CliError::Input(format!(
                        "line {}: records of sample {} are not contiguous",
                        record.line, record.id
                    )));
                }
                groups.push(vec![record]);
            }
        }
    }
    Ok(groups)
}

/// The group size most groups share (the larger on ties).
fn common_size(groups: &[Vec<ScoreLine>]) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for g in groups {
        *counts.entry(g.len()).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by_key(|&(size, n)| (n, size))
        .map_or(0, |(size, _)| size)
}

#[derive(Serialize)]
struct AdvantageRecord<'a> {
    id: &'a str,
    rewards: Vec<f64>,
    advantages: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_sample: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratios: Option<Vec<f64>>,
}

pub fn advantages(scores: &Path, config: &Path, out: Option<&Path>) -> CliResult {
    let config = load_config(config, None)?;
    let text = fs::read_to_string(scores)
        .map_err(|e| CliError::Input(format!("{}: {e}", scores.display())))?;
    let groups = read_groups(&text)?;
    let size = common_size(&groups);
    for g in &groups {
        let in_order = g.iter().enumerate().all(|(i, r)| r.candidate == i);
        if g.len() != size || !in_order {
            return Err(CliError::Input(format!(
                "sample {}: expected candidates 0..{} in order, found [{}]",
                g[0].id,
                size,
                g.iter()
                    .map(|r| r.candidate.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
    }

    let mut buf = String::new();
    for g in &groups {
        let id = g[0].id.as_str();
        let column = |k: usize| -> CliResult<Option<Vec<f64>>> {
            let present = g.iter().filter(|r| r.logp[k].is_some()).count();
            match present {
                0 => Ok(None),
                n if n == g.len() => Ok(Some(g.iter().map(|r| r.logp[k].unwrap()).collect())),
                _ => Err(CliError::Input(format!(
                    "sample {id}: log-probabilities present for only some candidates"
                ))),
            }
        };
        let group = PolicyGroup {
            rewards: g.iter().map(|r| r.total).collect(),
            logp_current: column(0)?,
            logp_old: column(1)?,
            logp_ref: column(2)?,
        };
        let with_objective = group.logp_current.is_some() || group.logp_old.is_some();
        let objective = if with_objective {
            Some(
                grpo_objective(&group, &config.grpo)
                    .map_err(|e| CliError::Input(format!("sample {id}: {e}")))?,
            )
        } else {
            None
        };
        let advantages = match &objective {
            Some(o) => o.advantages.clone(),
            None => struct_reward::group_advantages(&group.rewards, &config.grpo)
                .map_err(|e| CliError::Input(format!("sample {id}: {e}")))?,
        };
        let (objective, kl, per_sample, ratios) = match objective {
            Some(Objective {
                objective,
                kl,
                per_sample,
                ratios,
                ..
            }) => (Some(objective), Some(kl), Some(per_sample), Some(ratios)),
            None => (None, None, None, None),
        };
        push_record(
            &mut buf,
            &AdvantageRecord {
                id,
                rewards: group.rewards,
                advantages,
                objective,
                kl,
                per_sample,
                ratios,
            },
        );
    }
    write_output(out, &buf)
}

pub struct EvalArgs {
    pub dataset: PathBuf,
    pub predictions: PathBuf,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub dialect: Option<Dialect>,
    pub exe: bool,
    pub judge: Option<JudgeMode>,
}

fn read_predictions(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let bad =
            |what: String| CliError::Input(format!("{} line {}: {what}", path.display(), idx + 1));
        let value: Value = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        let id = value
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing string `id`".into()))?;
        let pred = value
            .get("prediction")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing string `prediction`".into()))?;
        out.push((id.to_string(), pred.to_string()));
    }
    Ok(out)
}

#[derive(Serialize)]
struct ExeRecord {
    gold_status: Option<ExecStatus>,
    pred_status: Option<ExecStatus>,
    #[serde(flatten)]
    comparison: ExecComparison,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    id: &'a str,
    em: bool,
    bleu: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    exe: Option<ExeRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    llm_correct: Option<bool>,
}

fn prediction_query(sample: &QuerySample, raw: &str) -> String {
    extract_answer(raw, sample.dialect)
        .query
        .unwrap_or_else(|| raw.trim().to_string())
}

fn execute(config: &RunConfig, sample: &QuerySample, pred: &str) -> CliResult<ExeRecord> {
    let eval = config.eval.as_ref().expect("checked by caller");
    let db_id = sample.extra.get("db_id").and_then(Value::as_str);
    let Some(db) = eval.database(db_id) else {
        return Ok(ExeRecord {
            gold_status: None,
            pred_status: None,
            comparison: ExecComparison {
                evaluable: false,
                exe_match: false,
                f1: 0.0,
            },
            note: Some(match db_id {
                Some(id) => format!("no database configured for db_id {id}"),
                None => "sample has no db_id and no default_db is configured".into(),
            }),
        });
    };
    let gold = run_oracle(&eval.oracle, db, &sample.gold_query)?;
    let pred = run_oracle(&eval.oracle, db, pred)?;
    let comparison = execution_compare(&gold, &pred);
    let note = (!comparison.evaluable).then(|| match &gold.error_text {
        Some(t) => format!("gold query did not execute: {t}"),
        None => "gold query did not execute".into(),
    });
    Ok(ExeRecord {
        gold_status: Some(gold.status),
        pred_status: Some(pred.status),
        comparison,
        note,
    })
}

pub fn eval(args: &EvalArgs) -> CliResult {
    let config = load_config(&args.config, args.workers)?;
    if args.exe && config.eval.is_none() {
        return Err(CliError::Input(
            "--exe needs an [eval] section with an oracle in the config".into(),
        ));
    }
    let samples = load_dataset(&args.dataset, args.dialect)?;
    let predictions = read_predictions(&args.predictions)?;

    let known: HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    let mut duplicates = Vec::new();
    for (id, pred) in &predictions {
        if by_id.insert(id, pred).is_some() {
            duplicates.push(id.as_str());
        }
    }
    if !duplicates.is_empty() {
        return Err(CliError::Input(format!(
            "duplicate prediction ids: {}",
            duplicates.join(", ")
        )));
    }
    let unknown: Vec<&str> = predictions
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    let missing: Vec<&str> = samples
        .iter()
        .map(|s| s.id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !unknown.is_empty() || !missing.is_empty() {
        let mut parts = Vec::new();
        if !missing.is_empty() {
            parts.push(format!(
                "samples without a prediction: {}",
                missing.join(", ")
            ));
        }
        if !unknown.is_empty() {
            parts.push(format!(
                "predictions for unknown samples: {}",
                unknown.join(", ")
            ));
        }
        return Err(CliError::Input(format!(
            "unmatched ids; {}",
            parts.join("; ")
        )));
    }

    let (judged, judge) = match args.judge {
        Some(mode) => select_judge(&config, Some(mode))?,
        None => (false, None),
    };

    let threads = if args.exe {
        config
            .eval
            .as_ref()
            .map_or(1, |e| e.max_processes)
            .min(config.workers.max(1))
            .max(1)
    } else {
        config.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Input(format!("worker pool: {e}")))?;
    let records: Vec<CliResult<EvalRecord>> = pool.install(|| {
        use rayon::prelude::*;
        samples
            .par_iter()
            .map(|sample| {
                let pred = prediction_query(sample, by_id[sample.id.as_str()]);
                let exe = if args.exe {
                    Some(execute(&config, sample, &pred)?)
                } else {
                    None
                };
                let llm_correct = match (&judge, judged) {
                    (Some(j), true) => {
                        let present =
                            extract_answer(by_id[sample.id.as_str()], sample.dialect).query;
                        let verdict = j
                            .correctness(
                                sample.dialect,
                                &sample.gold_query,
                                present.as_deref(),
                                &sample.schema_text,
                            )
                            .map_err(|e| {
                                CliError::External(format!("sample {}: {e}", sample.id))
                            })?;
                        Some(verdict == Correctness::Correct)
                    }
                    _ => None,
                };
                Ok(EvalRecord {
                    id: &sample.id,
                    em: exact_match(&sample.gold_query, &pred),
                    bleu: bleu(&sample.gold_query, &pred),
                    exe,
                    llm_correct,
                })
            })
            .collect()
    });
    let records: Vec<EvalRecord> = records.into_iter().collect::<CliResult<_>>()?;

    let mut buf = String::new();
    for r in &records {
        push_record(&mut buf, r);
    }
    let rate = |flags: Vec<bool>| mean(flags.into_iter().map(|b| f64::from(u8::from(b))));
    let mut summary = serde_json::Map::new();
    summary.insert("samples".into(), json!(records.len()));
    summary.insert(
        "em".into(),
        json!(rate(records.iter().map(|r| r.em).collect())),
    );
    summary.insert("bleu".into(), json!(mean(records.iter().map(|r| r.bleu))));
    if args.exe {
        let evaluable: Vec<&ExeRecord> = records
            .iter()
            .filter_map(|r| r.exe.as_ref())
            .filter(|e| e.comparison.evaluable)
            .collect();
        summary.insert("exe_evaluable".into(), json!(evaluable.len()));
        summary.insert(
            "exe".into(),
            json!(rate(
                evaluable.iter().map(|e| e.comparison.exe_match).collect()
            )),
        );
        summary.insert(
            "f1_exe".into(),
            json!(mean(evaluable.iter().map(|e| e.comparison.f1))),
        );
    }
    if judged {
        summary.insert(
            "llm_accuracy".into(),
            json!(rate(records.iter().filter_map(|r| r.llm_correct).collect())),
        );
    }
    push_record(&mut buf, &json!({ "summary": summary }));
    write_output(args.out.as_deref(), &buf)
}

fn describe(op: &EditOp) -> String {
    let s = op.source.map(|i| i.to_string()).unwrap_or_default();
    let t = op.target.map(|i| i.to_string()).unwrap_or_default();
    let what = match op.kind {
        EditKind::SubNode => format!("pred n{s} -> gold n{t}"),
        EditKind::DelNode => format!("pred n{s}"),
        EditKind::InsNode => format!("gold n{t}"),
        EditKind::SubEdge => format!("pred e{s} -> gold e{t}"),
        EditKind::DelEdge => format!("pred e{s}"),
        EditKind::InsEdge => format!("gold e{t}"),
    };
    format!("  {} {what} (cost {})", op.kind.name(), op.cost)
}

/// The human-readable report printed by `ged`.
pub fn ged_report(gold: &str, pred: &str, config: &GedConfig) -> String {
    let detail = ged_reward_detailed(gold, pred, config);
    let mut out = String::new();
    for (name, x) in [("gold", &detail.gold), ("pred", &detail.pred)] {
        let status = if x.parse_ok { "ok" } else { "parse failed" };
        out.push_str(&format!(
            "{name} graph ({status}, {} ignored predicates):\n",
            x.ignored_predicates
        ));
        out.push_str(&x.graph.to_string());
    }
    match &detail.ged {
        Some(r) => {
            out.push_str(&format!(
                "edit script (pred -> gold): {} operations\n",
                r.edit_script.len()
            ));
            for op in &r.edit_script {
                out.push_str(&describe(op));
                out.push('\n');
            }
            out.push_str(&format!("distance: {}\nexact: {}\n", r.distance, r.exact));
        }
        None => {
            let why = if !detail.pred.parse_ok || !detail.gold.parse_ok {
                "a query did not parse"
            } else if detail.pred.graph.is_empty() && detail.gold.graph.is_empty() {
                "both graphs are empty"
            } else {
                "the predicted graph is empty"
            };
            out.push_str(&format!(
                "edit script (pred -> gold): not computed ({why})\n"
            ));
        }
    }
    out.push_str(&format!("reward: {:?}\n", detail.reward));
    out
}

pub fn ged(gold: &str, pred: &str, config: Option<&Path>) -> CliResult {
    let ged_config = match config {
        Some(path) => load_config(path, None)?.reward.ged,
        None => GedConfig::default(),
    };
    write_output(None, &ged_report(gold, pred, &ged_config))
}

pub fn validate(dataset: &Path, dialect: Option<Dialect>) -> CliResult {
    let text = fs::read_to_string(dataset)
        .map_err(|e| CliError::Input(format!("{}: {e}", dataset.display())))?;
    let report = check_dataset(&text, dialect);
    if report.violations.is_empty() {
        println!(
            "ok: {} samples (sql: {}, cypher: {})",
            report.samples.len(),
            report.count(Dialect::Sql),
            report.count(Dialect::Cypher)
        );
        return Ok(());
    }
    let mut stderr = io::stderr().lock();
    for v in report.violations.iter().take(20) {
        let _ = writeln!(stderr, "{v}");
    }
    Err(CliError::Input(format!(
        "{}: {} invalid record(s){}",
        dataset.display(),
        report.violations.len(),
        if report.violations.len() > 20 {
            ", first 20 shown"
        } else {
            ""
        }
    )))
}
