//! Run configuration, stored as TOML.
//!
//! ```toml
//! workers = 4
//! seed = 0
//!
//! [reward]
//! judge_enabled = false
//! w_judge = 1.0
//! w_string = 1.0
//! w_structural = 1.0
//!
//! [grpo]
//! epsilon = 0.2
//! beta = 0.0
//!
//! [judge]            # optional; absent means no live judge
//! model_name = "grader"
//! cache_dir = "judge-cache"
//!
//! [eval]             # optional; needed for execution metrics
//! databases = { concert_singer = "dbs/concert_singer.sqlite" }
//! [eval.oracle]
//! command_template = "sqlite3 -bail -batch -tabs -nullvalue '\\N' {db} < {query_file}"
//! timeout_secs = 10
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::GrpoConfig;
use crate::judge::JudgeConfig;
use crate::metrics::ExecOracle;
use crate::reward_combine::RewardConfig;

fn default_max_processes() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub oracle: ExecOracle,
    /// Database artifact per sample `db_id`.
    #[serde(default)]
    pub databases: BTreeMap<String, PathBuf>,
    /// Used for samples without a `db_id` or with one missing from
    /// `databases`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_db: Option<PathBuf>,
    /// Maximum concurrently running oracle processes.
    #[serde(default = "default_max_processes")]
    pub max_processes: usize,
}

impl EvalConfig {
    pub fn database(&self, db_id: Option<&str>) -> Option<&Path> {
        db_id
            .and_then(|id| self.databases.get(id))
            .or(self.default_db.as_ref())
            .map(PathBuf::as_path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub workers: usize,
    /// Reserved; nothing is randomized yet.
    pub seed: i64,
    pub reward: RewardConfig,
    #[serde(default)]
    pub grpo: GrpoConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            workers: 1,
            seed: 0,
            reward: RewardConfig::default(),
            grpo: GrpoConfig::default(),
            judge: None,
            eval: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        self.reward.validate()?;
        self.grpo.validate()?;
        if let Some(judge) = &self.judge {
            judge.validate()?;
        }
        if let Some(eval) = &self.eval {
            eval.oracle.validate()?;
            if eval.max_processes == 0 {
                return Err(Error::Config("eval.max_processes must be positive".into()));
            }
        }
        Ok(())
    }

    /// Parses and validates TOML text. Relative paths stay relative.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)
            .map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Loads a config file; relative cache, database and oracle paths are
    /// resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(dir) = config.judge.as_mut().and_then(|j| j.cache_dir.as_mut()) {
            resolve(dir);
        }
        if let Some(eval) = config.eval.as_mut() {
            eval.databases.values_mut().for_each(resolve);
            if let Some(db) = eval.default_db.as_mut() {
                resolve(db);
            }
        }
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}
