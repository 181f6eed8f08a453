//! Reward and evaluation engine for structured-query semantic parsing.
//!
//! Given gold and candidate SQL or Cypher queries, this crate computes the
//! per-candidate reward components (LLM judge, string match, SQL component F1,
//! Cypher graph-edit-distance), combines them into a weighted total, turns group
//! rewards into GRPO advantages, and evaluates parsing quality with exact match,
//! BLEU and execution-based accuracy.

pub mod config;
pub mod corpus;
pub mod cypher_graph;
pub mod error;
pub mod grpo;
pub mod judge;
pub mod metrics;
pub mod reward_combine;
pub mod sql_components;
pub mod text_reward;

mod assignment;
mod keywords;

pub use config::RunConfig;
pub use corpus::{
    extract_answer, load_dataset, Dialect, ExtractedAnswer, ExtractionNote, QuerySample,
};
pub use cypher_graph::{
    extract_pattern_graph, ged, ged_reward, GedConfig, GedResult, PatternGraph,
};
pub use error::{Error, Result};
pub use grpo::{group_advantages, grpo_objective, GrpoConfig, PolicyGroup};
pub use reward_combine::{score_candidate, score_sample, RewardBreakdown, RewardConfig};
pub use sql_components::{component_f1, decompose_sql, ComponentSet};
pub use text_reward::{string_reward, StringRewardConfig};
