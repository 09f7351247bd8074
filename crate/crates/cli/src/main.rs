//! `wrs` — seeded random-search / weighted-random-search campaigns from a
//! config file, plus importance tables and convergence-probability curves.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use wrs_core::campaign::{self, CampaignError, CampaignReport, OptimizerKind};
use wrs_core::objectives::BuiltinObjective;
use wrs_core::objectives::Objective;
use wrs_core::space::Candidate;
use wrs_core::theory;

const EXIT_CONFIG: i32 = 2;
const EXIT_IO: i32 = 3;
const EXIT_DEGENERATE: i32 = 4;

#[derive(Parser)]
#[command(name = "wrs", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the campaign described by a config file.
    Run {
        /// Path to the TOML experiment config.
        config: PathBuf,
    },
    /// Run the campaign with both optimizers (RS and WRS), whatever the
    /// config lists.
    Compare { config: PathBuf },
    /// Fit importance weights on a trial log and print the weight table.
    Importance {
        /// Path to a JSONL trial log.
        log: PathBuf,
        /// Seed for the tree ensemble.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print n-step optimum-hit probability curves as CSV.
    Theory(TheoryArgs),
    /// Evaluate a built-in objective at given points.
    Bench {
        /// Built-in name: neg_griewank or neg_griewank_mod6.
        name: String,
        /// Comma-separated coordinates; repeatable. Defaults to the origin.
        #[arg(long = "at")]
        at: Vec<String>,
        /// Dimension of the default origin point when no --at is given.
        #[arg(long, default_value_t = 6)]
        dims: usize,
    },
}

#[derive(Args)]
struct TheoryArgs {
    /// Comma-separated per-dimension cardinalities, e.g. 10,10.
    #[arg(long, conflicts_with = "config")]
    cards: Option<String>,
    /// Take the cardinalities from a campaign config's search space.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated probabilities of change; the first must be 1.
    #[arg(long)]
    probs: String,
    /// Comma-separated counts of distinct values already generated.
    #[arg(long)]
    distinct: String,
    #[arg(long, default_value_t = 1)]
    n_min: u64,
    #[arg(long)]
    n_max: u64,
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<CampaignError> for CliError {
    fn from(e: CampaignError) -> Self {
        let code = match &e {
            CampaignError::Config(_) => EXIT_CONFIG,
            CampaignError::Io { .. } => EXIT_IO,
            CampaignError::Degenerate(_) => EXIT_DEGENERATE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message);
            std::process::exit(e.code);
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let config = campaign::load_config(&config)?;
            let report = campaign::run_campaign(&config)?;
            print_report(&report);
            Ok(())
        }
        Command::Compare { config } => {
            let mut config = campaign::load_config(&config)?;
            config.optimizers = vec![OptimizerKind::Rs, OptimizerKind::Wrs];
            let report = campaign::run_campaign(&config)?;
            print_report(&report);
            Ok(())
        }
        Command::Importance { log, seed } => {
            let result = campaign::importance_from_log(&log, seed)?;
            print!("parameter");
            for name in &result.names {
                print!(",{name}");
            }
            println!();
            print!("weight");
            for w in &result.weights {
                print!(",{w}");
            }
            println!();
            print!("probability");
            for p in &result.probs {
                print!(",{p}");
            }
            println!();
            Ok(())
        }
        Command::Theory(args) => theory_cmd(args),
        Command::Bench { name, at, dims } => bench_cmd(&name, &at, dims),
    }
}

fn print_report(report: &CampaignReport) {
    println!("artifacts written to {}", report.output_dir.display());
    println!("optimizer,best,mean,sd,n_runs");
    for (opt, s) in &report.summaries {
        println!("{opt},{},{},{},{}", s.best, s.mean, s.sd, s.n_runs);
    }
    if let Some(t) = &report.t_test {
        println!(
            "t-test WRS vs RS: t = {}, df = {}, se = {}, p = {}{}",
            t.t,
            t.df,
            t.se,
            t.p_value,
            if t.degenerate { " (degenerate)" } else { "" }
        );
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<T>()
                .map_err(|e| CliError::config(format!("invalid {what} entry {part:?}: {e}")))
        })
        .collect()
}

fn theory_cmd(args: TheoryArgs) -> Result<(), CliError> {
    if args.n_min == 0 {
        return Err(CliError::config("n_min must be at least 1"));
    }
    if args.n_max < args.n_min {
        return Err(CliError::config("n_max must be at least n_min"));
    }
    let probs: Vec<f64> = parse_list(&args.probs, "probs")?;
    let distinct: Vec<u64> = parse_list(&args.distinct, "distinct")?;

    let profile = match (&args.cards, &args.config) {
        (Some(cards), None) => {
            let cards: Vec<u64> = parse_list(cards, "cards")?;
            theory::DiscreteProfile::new(cards, probs, distinct)
                .map_err(|e| CliError::config(e.to_string()))?
        }
        (None, Some(path)) => {
            let config = campaign::load_config(path)?;
            let space = campaign::build_space(&config.dimensions)?;
            theory::DiscreteProfile::from_space(&space, probs, distinct)
                .map_err(|e| CliError::config(e.to_string()))?
        }
        _ => {
            return Err(CliError::config(
                "exactly one of --cards or --config is required",
            ))
        }
    };

    let per_step_rs = theory::p_rs(&profile);
    let per_step_wrs = theory::p_wrs(&profile);
    println!("n,p_rs_n,p_wrs_n");
    for n in args.n_min..=args.n_max {
        println!(
            "{n},{},{}",
            theory::p_after_n(per_step_rs, n),
            theory::p_after_n(per_step_wrs, n)
        );
    }
    Ok(())
}

fn bench_cmd(name: &str, at: &[String], dims: usize) -> Result<(), CliError> {
    let points: Vec<Vec<f64>> = if at.is_empty() {
        vec![vec![0.0; dims]]
    } else {
        at.iter()
            .map(|p| parse_list::<f64>(p, "coordinate"))
            .collect::<Result<_, _>>()?
    };
    for point in points {
        let objective = BuiltinObjective::by_name(name, point.len())
            .map_err(|e| CliError::config(e.to_string()))?;
        let candidate = Candidate {
            values: point
                .iter()
                .map(|&v| wrs_core::space::Value::Real(v))
                .collect(),
        };
        // `+ 0.0` folds IEEE negative zero into plain zero for display.
        let value = objective
            .evaluate(&candidate)
            .map_err(|e| CliError::config(e.to_string()))?
            + 0.0;
        let joined: Vec<String> = point.iter().map(|v| v.to_string()).collect();
        println!("{name}({}) = {value}", joined.join(","));
    }
    Ok(())
}
