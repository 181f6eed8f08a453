use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use struct_reward::Dialect;

mod commands;

/// Rewards, GRPO advantages and evaluation metrics for generated SQL and
/// Cypher queries.
#[derive(Debug, Parser)]
#[command(name = "struct-reward", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JudgeMode {
    /// The configured chat-completion endpoint.
    Live,
    /// The deterministic offline judge.
    Mock,
    /// No judge term.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DialectArg {
    Sql,
    Cypher,
}

impl From<DialectArg> for Dialect {
    fn from(d: DialectArg) -> Self {
        match d {
            DialectArg::Sql => Dialect::Sql,
            DialectArg::Cypher => Dialect::Cypher,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every candidate of every sample; one record per candidate plus a
    /// summary record.
    Score {
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Require every sample to be of this dialect.
        #[arg(long)]
        dialect: Option<DialectArg>,
        /// Embed the decomposed component sets or pattern graphs.
        #[arg(long)]
        explain: bool,
        /// Judge to use (default: live when the config enables the judge).
        #[arg(long, value_enum)]
        judge: Option<JudgeMode>,
        /// Score the judge term 0 when the judge cannot be reached.
        #[arg(long)]
        judge_fail_zero: bool,
    },
    /// Group-relative advantages from a score report.
    Advantages {
        scores: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact match, BLEU and optionally execution metrics of predictions.
    Eval {
        dataset: PathBuf,
        /// JSON lines with `id` and `prediction`.
        predictions: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        dialect: Option<DialectArg>,
        /// Also run gold and predicted queries through the configured oracle.
        #[arg(long)]
        exe: bool,
        /// Also ask a judge whether each prediction is correct.
        #[arg(long, value_enum)]
        judge: Option<JudgeMode>,
    },
    /// Show the pattern graphs, edit script and reward for two Cypher queries.
    Ged {
        gold: String,
        pred: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check every dataset record.
    Validate {
        dataset: PathBuf,
        #[arg(long)]
        dialect: Option<DialectArg>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score {
            dataset,
            config,
            out,
            workers,
            dialect,
            explain,
            judge,
            judge_fail_zero,
        } => commands::score(&commands::ScoreArgs {
            dataset,
            config,
            out,
            workers,
            dialect: dialect.map(Into::into),
            explain,
            judge,
            judge_fail_zero,
        }),
        Command::Advantages {
            scores,
            config,
            out,
        } => commands::advantages(&scores, &config, out.as_deref()),
        Command::Eval {
            dataset,
            predictions,
            config,
            out,
            workers,
            dialect,
            exe,
            judge,
        } => commands::eval(&commands::EvalArgs {
            dataset,
            predictions,
            config,
            out,
            workers,
            dialect: dialect.map(Into::into),
            exe,
            judge,
        }),
        Command::Ged { gold, pred, config } => commands::ged(&gold, &pred, config.as_deref()),
        Command::Validate { dataset, dialect } => {
            commands::validate(&dataset, dialect.map(Into::into))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
