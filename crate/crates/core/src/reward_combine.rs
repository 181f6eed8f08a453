//! Per-candidate reward breakdowns and their weighted total.
//!
//! `total = w_judge * judge + w_string * string + w_structural * structural`,
//! where the structural term is component F1 for SQL samples and the
//! graph-edit reward for Cypher samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{extract_answer, Dialect, ExtractedAnswer, ExtractionNote, QuerySample};
use crate::cypher_graph::{extract_pattern_graph, ged_reward_detailed, GedConfig, PatternGraph};
use crate::error::{Error, Result};
use crate::judge::{Judge, JudgeClass, JudgeVerdict};
use crate::sql_components::{component_f1, decompose_sql, ComponentSet};
use crate::text_reward::{string_reward, StringRewardConfig};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    #[serde(default = "one")]
    pub w_judge: f64,
    #[serde(default = "one")]
    pub w_string: f64,
    #[serde(default = "one")]
    pub w_structural: f64,
    pub judge_enabled: bool,
    /// Score a candidate's judge term as 0 when the judge cannot be reached,
    /// instead of failing the batch.
    #[serde(default)]
    pub judge_fail_zero: bool,
    #[serde(default)]
    pub ged: GedConfig,
    #[serde(default)]
    pub string: StringRewardConfig,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            w_judge: 1.0,
            w_string: 1.0,
            w_structural: 1.0,
            judge_enabled: false,
            judge_fail_zero: false,
            ged: GedConfig::default(),
            string: StringRewardConfig::default(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_judge", self.w_judge),
            ("w_string", self.w_string),
            ("w_structural", self.w_structural),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!(
                    "reward.{name} must be a finite value >= 0, got {w}"
                )));
            }
        }
        if self.w_judge + self.w_string + self.w_structural <= 0.0 {
            return Err(Error::Config(
                "reward: at least one weight must be positive".into(),
            ));
        }
        if self.ged.max_expansions == 0 {
            return Err(Error::Config(
                "reward.ged.max_expansions must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Upper end of the total's range.
    pub fn max_total(&self) -> f64 {
        self.w_judge + self.w_string + self.w_structural
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralKind {
    ComponentF1,
    Ged,
}

impl StructuralKind {
    pub fn for_dialect(dialect: Dialect) -> Self {
        match dialect {
            Dialect::Sql => StructuralKind::ComponentF1,
            Dialect::Cypher => StructuralKind::Ged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeStatus {
    /// A verdict was used.
    Scored,
    /// The judge is turned off; the term is absent.
    Disabled,
    /// The judge could not be reached and the fail-zero policy scored 0.
    Failed,
    /// The judge is on but no verdict was supplied; the term is absent.
    Missing,
    /// No query could be extracted, so the term is 0 without consulting the
    /// verdict.
    NoAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub extraction_note: ExtractionNote,
    pub had_think_block: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub foreign_fence_tag: Option<String>,
    /// The candidate query parsed (decomposed for SQL, graph-extracted for
    /// Cypher).
    pub parse_ok: bool,
    pub gold_parse_ok: bool,
    pub judge_status: JudgeStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_class: Option<JudgeClass>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub judge_parse_failed: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub judge_cached: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ged_exact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ged_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ignored_predicates: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub judge: Option<f64>,
    pub string: f64,
    pub structural: f64,
    pub total: f64,
    pub structural_kind: StructuralKind,
    pub diagnostics: Diagnostics,
}

/// The structures the structural reward compared.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Explain {
    ComponentF1 {
        gold: ComponentSet,
        pred: ComponentSet,
    },
    Ged {
        gold: PatternGraph,
        pred: PatternGraph,
    },
}

fn combine(cfg: &RewardConfig, judge: Option<f64>, string: f64, structural: f64) -> f64 {
    cfg.w_judge * judge.unwrap_or(0.0) + cfg.w_string * string + cfg.w_structural * structural
}

fn answer(sample: &QuerySample, candidate_index: usize) -> ExtractedAnswer {
    extract_answer(&sample.candidates[candidate_index], sample.dialect)
}

/// Scores one candidate. `judge_verdict` is used only when the judge is
/// enabled; passing `None` with the judge enabled leaves the term absent with
/// a `missing` status.
///
/// # Panics
///
/// If `candidate_index` is out of range.
pub fn score_candidate(
    sample: &QuerySample,
    candidate_index: usize,
    cfg: &RewardConfig,
    judge_verdict: Option<&JudgeVerdict>,
) -> RewardBreakdown {
    assert!(
        candidate_index < sample.group_size(),
        "candidate index out of range"
    );
    let extracted = answer(sample, candidate_index);
    let kind = StructuralKind::for_dialect(sample.dialect);
    let mut diagnostics = Diagnostics {
        extraction_note: extracted.extraction_note,
        had_think_block: extracted.had_think_block,
        foreign_fence_tag: extracted.foreign_fence_tag.clone(),
        parse_ok: false,
        gold_parse_ok: true,
        judge_status: JudgeStatus::Disabled,
        judge_class: None,
        judge_parse_failed: false,
        judge_cached: false,
        ged_exact: None,
        ged_distance: None,
        ignored_predicates: None,
    };

    let Some(pred) = extracted.query.as_deref() else {
        let judge = if cfg.judge_enabled {
            diagnostics.judge_status = JudgeStatus::NoAnswer;
            Some(0.0)
        } else {
            None
        };
        diagnostics.gold_parse_ok = match sample.dialect {
            Dialect::Sql => decompose_sql(&sample.gold_query).1,
            Dialect::Cypher => extract_pattern_graph(&sample.gold_query).parse_ok,
        };
        return RewardBreakdown {
            judge,
            string: 0.0,
            structural: 0.0,
            total: 0.0,
            structural_kind: kind,
            diagnostics,
        };
    };

    let string = string_reward(&sample.gold_query, pred, &cfg.string);
    let structural = match sample.dialect {
        Dialect::Sql => {
            let (gold, gold_ok) = decompose_sql(&sample.gold_query);
            let (cand, ok) = decompose_sql(pred);
            diagnostics.parse_ok = ok;
            diagnostics.gold_parse_ok = gold_ok;
            if ok && gold_ok {
                component_f1(&gold, &cand)
            } else {
                0.0
            }
        }
        Dialect::Cypher => {
            let detail = ged_reward_detailed(&sample.gold_query, pred, &cfg.ged);
            diagnostics.parse_ok = detail.pred.parse_ok;
            diagnostics.gold_parse_ok = detail.gold.parse_ok;
            diagnostics.ignored_predicates = Some(detail.pred.ignored_predicates);
            if let Some(ged) = &detail.ged {
                diagnostics.ged_exact = Some(ged.exact);
                diagnostics.ged_distance = Some(ged.distance);
            }
            detail.reward
        }
    };

    let judge = if !cfg.judge_enabled {
        None
    } else if let Some(v) = judge_verdict {
        diagnostics.judge_status = JudgeStatus::Scored;
        diagnostics.judge_class = Some(v.class_label);
        diagnostics.judge_parse_failed = v.parse_failed;
        diagnostics.judge_cached = v.cached;
        Some(v.score)
    } else {
        diagnostics.judge_status = JudgeStatus::Missing;
        None
    };

    RewardBreakdown {
        judge,
        string,
        structural,
        total: combine(cfg, judge, string, structural),
        structural_kind: kind,
        diagnostics,
    }
}

/// The decomposed sets or pattern graphs behind a candidate's structural
/// reward. An unextractable candidate is shown as an empty structure.
pub fn explain_candidate(sample: &QuerySample, candidate_index: usize) -> Explain {
    let pred = answer(sample, candidate_index).query.unwrap_or_default();
    match sample.dialect {
        Dialect::Sql => Explain::ComponentF1 {
            gold: decompose_sql(&sample.gold_query).0,
            pred: decompose_sql(&pred).0,
        },
        Dialect::Cypher => Explain::Ged {
            gold: extract_pattern_graph(&sample.gold_query).graph,
            pred: extract_pattern_graph(&pred).graph,
        },
    }
}

/// Text shown to the judge for a candidate: the extracted query, or the raw
/// completion when nothing could be extracted.
fn judge_text(sample: &QuerySample, index: usize) -> String {
    answer(sample, index)
        .query
        .unwrap_or_else(|| sample.candidates[index].trim().to_string())
}

/// Scores all candidates of a sample, with at most one judge call covering
/// every candidate.
pub fn score_sample(
    sample: &QuerySample,
    cfg: &RewardConfig,
    judge: Option<&dyn Judge>,
) -> Result<Vec<RewardBreakdown>> {
    let g = sample.group_size();
    let verdicts: Option<Vec<JudgeVerdict>> = match (cfg.judge_enabled, judge) {
        (false, _) => None,
        (true, None) => {
            return Err(Error::Config(
                "reward.judge_enabled is set but no judge was provided".into(),
            ));
        }
        (true, Some(judge)) => {
            let texts: Vec<String> = (0..g).map(|i| judge_text(sample, i)).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            match judge.grade(
                sample.dialect,
                &sample.gold_query,
                &refs,
                &sample.schema_text,
            ) {
                Ok(v) if v.len() == g => Some(v),
                Ok(v) => {
                    return Err(Error::LengthMismatch {
                        field: "judge verdicts",
                        expected: g,
                        got: v.len(),
                    })
                }
                Err(e) if cfg.judge_fail_zero => {
                    log::warn!("sample {}: {e}; judge term scored 0", sample.id);
                    return Ok((0..g).map(|i| failed_judge(sample, i, cfg)).collect());
                }
                Err(e) => {
                    return Err(Error::SampleJudge {
                        id: sample.id.clone(),
                        source: e,
                    })
                }
            }
        }
    };
    Ok((0..g)
        .map(|i| score_candidate(sample, i, cfg, verdicts.as_ref().map(|v| &v[i])))
        .collect())
}

fn failed_judge(sample: &QuerySample, index: usize, cfg: &RewardConfig) -> RewardBreakdown {
    let mut b = score_candidate(sample, index, cfg, None);
    if b.diagnostics.judge_status == JudgeStatus::Missing {
        b.diagnostics.judge_status = JudgeStatus::Failed;
        b.judge = Some(0.0);
        b.total = combine(cfg, b.judge, b.string, b.structural);
    }
    b
}

/// Scores a batch on `workers` threads; the output follows input order and
/// the first error in input order is returned.
pub fn score_batch(
    samples: &[QuerySample],
    cfg: &RewardConfig,
    judge: Option<&dyn Judge>,
    workers: usize,
) -> Result<Vec<Vec<RewardBreakdown>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        samples
            .par_iter()
            .map(|s| score_sample(s, cfg, judge))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::{ClassScores, JudgeError, MockJudge};
    use serde_json::Map;

    fn sample(dialect: Dialect, gold: &str, candidates: &[&str]) -> QuerySample {
        QuerySample {
            id: "s1".into(),
            question: "q".into(),
            schema_text: String::new(),
            dialect,
            gold_query: gold.into(),
            candidates: candidates.iter().map(|c| c.to_string()).collect(),
            extra: Map::new(),
        }
    }

    fn judged() -> RewardConfig {
        RewardConfig {
            judge_enabled: true,
            ..Default::default()
        }
    }

    #[test]
    fn perfect_sql_candidate() {
        let gold = "SELECT name FROM singer WHERE age > 30";
        let s = sample(
            Dialect::Sql,
            gold,
            &[&format!("<think>easy</think>```sql\n{gold}\n```")],
        );
        let out = score_sample(&s, &judged(), Some(&MockJudge::default())).unwrap();
        let b = &out[0];
        assert_eq!(
            (b.judge, b.string, b.structural, b.total),
            (Some(1.0), 1.0, 1.0, 3.0)
        );
        assert_eq!(b.structural_kind, StructuralKind::ComponentF1);
        assert!(b.diagnostics.had_think_block);
        assert_eq!(b.diagnostics.judge_class, Some(JudgeClass::Excellent));
    }

    #[test]
    fn no_answer_floors_everything() {
        let s = sample(Dialect::Sql, "SELECT 1", &["I am not sure."]);
        let b = score_candidate(&s, 0, &judged(), None);
        assert_eq!(b.total, 0.0);
        assert_eq!(b.judge, Some(0.0));
        assert_eq!(b.diagnostics.extraction_note, ExtractionNote::None);
        assert_eq!(b.diagnostics.judge_status, JudgeStatus::NoAnswer);
        let off = score_candidate(&s, 0, &RewardConfig::default(), None);
        assert_eq!((off.judge, off.total), (None, 0.0));
    }

    #[test]
    fn cypher_label_change() {
        let gold = "MATCH (a:Person)-[:KNOWS]->(b:Person) RETURN a";
        let pred = "MATCH (a:Person)-[:KNOWS]->(b:Robot) RETURN a";
        let s = sample(Dialect::Cypher, gold, &[pred]);
        let b = score_candidate(&s, 0, &RewardConfig::default(), None);
        assert!((b.structural - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(b.total, b.string + b.structural);
        assert_eq!(b.judge, None);
        assert_eq!(b.structural_kind, StructuralKind::Ged);
        assert_eq!(b.diagnostics.ged_exact, Some(true));
        assert_eq!(b.diagnostics.ged_distance, Some(1.0));
    }

    #[test]
    fn disabled_judge_leaves_term_absent() {
        let s = sample(
            Dialect::Sql,
            "SELECT a FROM t",
            &["SELECT a FROM t", "SELECT b FROM t", "nothing"],
        );
        let out = score_sample(&s, &RewardConfig::default(), None).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out
            .iter()
            .all(|b| b.judge.is_none() && b.diagnostics.judge_status == JudgeStatus::Disabled));
        assert!(score_sample(&s, &judged(), None).is_err());
    }

    #[test]
    fn weights_are_linear() {
        let s = sample(Dialect::Sql, "SELECT a, b FROM t", &["SELECT a FROM t"]);
        let base = score_candidate(&s, 0, &RewardConfig::default(), None);
        let doubled = RewardConfig {
            w_structural: 2.0,
            ..Default::default()
        };
        let b2 = score_candidate(&s, 0, &doubled, None);
        assert_eq!(b2.structural, base.structural);
        assert_eq!(b2.total, base.string + 2.0 * base.structural);
    }

    struct Down;

    impl Judge for Down {
        fn grade(
            &self,
            _: Dialect,
            _: &str,
            candidates: &[&str],
            _: &str,
        ) -> Result<Vec<JudgeVerdict>, JudgeError> {
            Err(JudgeError::Transport {
                indices: (0..candidates.len()).collect(),
                message: "connection refused".into(),
            })
        }

        fn correctness(
            &self,
            _: Dialect,
            _: &str,
            _: Option<&str>,
            _: &str,
        ) -> Result<crate::judge::Correctness, JudgeError> {
            unreachable!()
        }
    }

    #[test]
    fn judge_failure_policy() {
        let s = sample(
            Dialect::Sql,
            "SELECT a FROM t",
            &["SELECT a FROM t", "SELECT b FROM t"],
        );
        let err = score_sample(&s, &judged(), Some(&Down)).unwrap_err();
        assert!(err.to_string().contains("s1"), "{err}");
        let cfg = RewardConfig {
            judge_fail_zero: true,
            ..judged()
        };
        let out = score_sample(&s, &cfg, Some(&Down)).unwrap();
        assert_eq!(out[0].judge, Some(0.0));
        assert_eq!(out[0].diagnostics.judge_status, JudgeStatus::Failed);
        assert_eq!(out[0].total, 2.0);
    }

    #[test]
    fn explain_exposes_structures() {
        let s = sample(Dialect::Sql, "SELECT a FROM t", &["SELECT a FROM u"]);
        let Explain::ComponentF1 { gold, pred } = explain_candidate(&s, 0) else {
            panic!("sql explains component sets");
        };
        assert_eq!((gold.len(), pred.len(), gold.overlap(&pred)), (2, 2, 1));
    }

    #[test]
    fn batch_preserves_order() {
        let samples: Vec<QuerySample> = (0..20)
            .map(|i| {
                let mut s = sample(
                    Dialect::Sql,
                    &format!("SELECT c{i} FROM t"),
                    &["SELECT c3 FROM t"],
                );
                s.id = format!("s{i}");
                s
            })
            .collect();
        let judge = MockJudge {
            class_scores: ClassScores::default(),
            ged: GedConfig::default(),
        };
        let cfg = judged();
        let out = score_batch(&samples, &cfg, Some(&judge), 4).unwrap();
        for (i, group) in out.iter().enumerate() {
            assert_eq!(group[0].structural == 1.0, i == 3);
        }
    }

    #[test]
    fn validation() {
        assert!(RewardConfig::default().validate().is_ok());
        let zero = RewardConfig {
            w_judge: 0.0,
            w_string: 0.0,
            w_structural: 0.0,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
        let neg = RewardConfig {
            w_string: -1.0,
            ..Default::default()
        };
        assert!(neg.validate().unwrap_err().to_string().contains("w_string"));
    }
}
