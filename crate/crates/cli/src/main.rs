//! `moss`: rule pools, Pareto frontiers, fitted rule sets and their
//! evaluation from CSV data.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "moss", version, about = "Sparse, stable decision-rule sets for tabular regression")]
struct Cli {
    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice; defaults to 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    target: Option<String>,
}

#[derive(Debug, Args)]
struct ForestArgs {
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    quantiles: Option<usize>,
    #[arg(long)]
    max_rules: Option<usize>,
    /// Standard deviation of Gaussian noise added to the response per tree.
    #[arg(long)]
    noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct PoolArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Reuse a pool written by `moss rules` instead of growing a forest.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FitMethod {
    /// Exact cutting-plane solve at one stability level.
    Exact,
    /// Coordinate-descent heuristic tuned to k rules.
    Cd,
    /// The k rules with the largest selection proportions.
    Topk,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grow a bootstrap forest and write the candidate rule pool.
    Rules {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace the stability/loss frontier over the epsilon sequence.
    Pareto {
        #[command(flatten)]
        pool: PoolArgs,
        /// Number of leading epsilon values to solve.
        #[arg(long, conflicts_with = "eps_indices")]
        eps_count: Option<usize>,
        /// Explicit positions in the epsilon sequence, comma separated.
        #[arg(long, value_delimiter = ',')]
        eps_indices: Option<Vec<usize>>,
        /// Solve every epsilon from scratch instead of reusing cuts.
        #[arg(long)]
        cold: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write epsilon,h1,h2,support_size rows to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fit one rule set and write a self-contained model.
    Fit {
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long, value_enum, default_value_t = FitMethod::Exact)]
        method: FitMethod,
        /// Stability level for the exact method.
        #[arg(long, conflicts_with = "eps_index")]
        epsilon: Option<f64>,
        /// Position in the epsilon sequence for the exact method.
        #[arg(long)]
        eps_index: Option<usize>,
        /// Ridge penalty on rule count for the heuristic.
        #[arg(long)]
        lambda2: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate methods for accuracy and rule-set stability.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        forest: ForestArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        folds: Option<usize>,
        /// Comma separated subset of moss_h, moss_m, moss_l, topk.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        metric: Option<String>,
        /// Record wall-clock seconds per method.
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write one rule-set file per method and fold into this directory.
        #[arg(long)]
        rule_sets_dir: Option<PathBuf>,
        /// Write a summary row per method to this CSV file.
        #[arg(long)]
        emit_csv: Option<PathBuf>,
    },
    /// Empirical stability of rule sets or fitted models.
    Stability {
        #[arg(long, default_value = "dsc")]
        metric: String,
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
    },
    /// Apply a fitted model to new rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MOSS_LOG", "error"))
        .format_timestamp(None)
        .init();
}

/// Solver failures exit with 2 and a JSON object on stderr; everything else
/// is a user error with a one-line message and exit 1.
fn report(err: &anyhow::Error) -> ExitCode {
    let core = err.chain().find_map(|c| c.downcast_ref::<moss_core::Error>());
    match core {
        Some(e) if e.is_solver_failure() => {
            let mut obj = json!({ "error": e.kind(), "message": err.chain().map(ToString::to_string).collect::<Vec<_>>().join(": ") });
            match e.root() {
                moss_core::Error::Infeasible { epsilon, epsilon_max } => {
                    obj["epsilon"] = json!(epsilon);
                    obj["epsilon_max"] = json!(epsilon_max);
                }
                moss_core::Error::IterationLimit { what, limit } => {
                    obj["what"] = json!(what);
                    obj["limit"] = json!(limit);
                }
                _ => {}
            }
            eprintln!("{obj}");
            ExitCode::from(2)
        }
        _ => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    init_logging();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
