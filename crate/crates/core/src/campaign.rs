//! Campaign orchestration: configuration files, seeded dispatch of
//! independent runs across a worker pool, JSONL trial logs, and CSV
//! summaries with the RS-vs-WRS significance test.
//!
//! Runs are data-parallel: each owns a disjoint random substream and its
//! own log file, so a campaign replayed with the same config and base
//! seed reproduces every artifact byte for byte (wall-time fields aside).

use crate::engine::{self, default_phase_split, ChangeSchedule, Phase, RunOptions, ScheduleMode};
use crate::importance::{self, ImportanceParams};
use crate::objectives::{BuiltinObjective, ExternalObjective, Objective};
use crate::seed;
use crate::space::{Candidate, Dimension, SearchSpace, Value};
use crate::stats::{self, CampaignSummary, TTest};
use serde::{Deserialize, Deserializer, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

/// Overrides the configured output directory when set and non-empty.
pub const OUTPUT_DIR_ENV: &str = "WRS_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("degenerate data: {0}")]
    Degenerate(String),
}

fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CampaignError {
    move |source| CampaignError::Io {
        path: path.into(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "RS", alias = "rs")]
    Rs,
    #[serde(rename = "WRS", alias = "wrs")]
    Wrs,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Rs => "RS",
            OptimizerKind::Wrs => "WRS",
        })
    }
}

/// Dimension declaration as it appears in the config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DimensionSpec {
    Real { name: String, lo: f64, hi: f64 },
    Int { name: String, lo: i64, hi: i64 },
    Categorical { name: String, values: Vec<Value> },
}

/// Objective selector: a built-in name or an external command.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ObjectiveSpec {
    Builtin(String),
    External {
        command: Vec<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: f64,
        #[serde(default)]
        persistent: bool,
        #[serde(default)]
        max_parallelism: Option<usize>,
    },
}

fn default_timeout_secs() -> f64 {
    3600.0
}

/// `"auto"` or an explicit phase-one length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseSplit {
    #[default]
    Auto,
    Fixed(usize),
}

impl<'de> Deserialize<'de> for PhaseSplit {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Count(n) => Ok(PhaseSplit::Fixed(n)),
            Raw::Text(s) if s == "auto" => Ok(PhaseSplit::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "n_phase1 must be \"auto\" or an integer, got {s:?}"
            ))),
        }
    }
}

/// `"auto"` (importance-derived) or explicit probabilities.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScheduleSpec {
    #[default]
    Auto,
    Fixed {
        probs: Vec<f64>,
        min_samples: Option<Vec<usize>>,
    },
}

impl<'de> Deserialize<'de> for ScheduleSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Table {
                probs: Vec<f64>,
                #[serde(default)]
                min_samples: Option<Vec<usize>>,
            },
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) if s == "auto" => Ok(ScheduleSpec::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "schedule must be \"auto\" or a table with probs, got {s:?}"
            ))),
            Raw::Table { probs, min_samples } => Ok(ScheduleSpec::Fixed { probs, min_samples }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceConfig {
    #[serde(default = "default_trees")]
    pub trees: usize,
    #[serde(default = "default_min_samples_leaf")]
    pub min_samples_leaf: usize,
}

fn default_trees() -> usize {
    ImportanceParams::default().n_trees
}

fn default_min_samples_leaf() -> usize {
    ImportanceParams::default().min_samples_leaf
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            trees: default_trees(),
            min_samples_leaf: default_min_samples_leaf(),
        }
    }
}

fn default_optimizers() -> Vec<OptimizerKind> {
    vec![OptimizerKind::Rs, OptimizerKind::Wrs]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "dimension")]
    pub dimensions: Vec<DimensionSpec>,
    pub objective: ObjectiveSpec,
    pub n_total: usize,
    #[serde(default)]
    pub n_phase1: PhaseSplit,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    pub n_runs: usize,
    pub base_seed: u64,
    #[serde(default = "default_optimizers")]
    pub optimizers: Vec<OptimizerKind>,
    /// Worker-pool size; 0 means all available hardware threads.
    #[serde(default)]
    pub parallelism: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub independent_draws: bool,
    #[serde(default)]
    pub importance: ImportanceConfig,
}

/// Read and parse a config file, applying the output-dir env override.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CampaignError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CampaignError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| CampaignError::Config(format!("cannot parse {}: {e}", path.display())))?;
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            config.output_dir = PathBuf::from(dir);
        }
    }
    Ok(config)
}

pub fn build_space(specs: &[DimensionSpec]) -> Result<SearchSpace, CampaignError> {
    let dims = specs
        .iter()
        .map(|s| match s {
            DimensionSpec::Real { name, lo, hi } => Dimension::real(name.clone(), *lo, *hi),
            DimensionSpec::Int { name, lo, hi } => Dimension::integer(name.clone(), *lo, *hi),
            DimensionSpec::Categorical { name, values } => {
                Dimension::categorical(name.clone(), values.clone())
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CampaignError::Config(e.to_string()))?;
    SearchSpace::new(dims).map_err(|e| CampaignError::Config(e.to_string()))
}

fn build_objective(
    spec: &ObjectiveSpec,
    space: &SearchSpace,
) -> Result<Arc<dyn Objective>, CampaignError> {
    match spec {
        ObjectiveSpec::Builtin(name) => {
            let objective = BuiltinObjective::by_name(name, space.len())
                .map_err(|e| CampaignError::Config(e.to_string()))?;
            Ok(Arc::new(objective))
        }
        ObjectiveSpec::External {
            command,
            timeout_secs,
            persistent,
            max_parallelism,
        } => {
            let names = space
                .dimensions()
                .iter()
                .map(|d| d.name().to_string())
                .collect();
            let objective = ExternalObjective::new(command.clone(), names)
                .map_err(|e| CampaignError::Config(e.to_string()))?
                .with_timeout(Duration::from_secs_f64(*timeout_secs))
                .persistent(*persistent)
                .with_max_parallelism(*max_parallelism);
            Ok(Arc::new(objective))
        }
    }
}

/// One line of a trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLogEntry {
    pub run: String,
    pub optimizer: OptimizerKind,
    pub iteration: usize,
    pub phase: Phase,
    pub values: BTreeMap<String, Value>,
    pub value: Option<f64>,
    pub failure: Option<String>,
    pub changed: Vec<bool>,
    /// Best successful value through this iteration.
    pub best: Option<f64>,
    pub wall_time_ms: f64,
}

struct RunArtifact {
    optimizer: OptimizerKind,
    best: Option<f64>,
    /// Best-so-far value after each iteration.
    curve: Vec<Option<f64>>,
    log_path: PathBuf,
}

#[derive(Debug)]
pub struct CampaignReport {
    pub output_dir: PathBuf,
    pub log_paths: Vec<PathBuf>,
    pub summaries: Vec<(OptimizerKind, CampaignSummary)>,
    /// WRS minus RS, present when both optimizers ran.
    pub t_test: Option<TTest>,
    pub summary_path: PathBuf,
    pub convergence_paths: Vec<PathBuf>,
}

struct Plan {
    space: SearchSpace,
    objective: Arc<dyn Objective>,
    optimizers: Vec<OptimizerKind>,
    n_phase1: Option<usize>,
    wrs_schedule: ScheduleMode,
    importance: ImportanceParams,
    // Worker-pool size; the sequential fallback build ignores it.
    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    threads: usize,
}

fn validate(config: &ExperimentConfig) -> Result<Plan, CampaignError> {
    if config.n_runs == 0 {
        return Err(CampaignError::Config("n_runs must be at least 1".into()));
    }
    if config.n_total < 2 {
        return Err(CampaignError::Config("n_total must be at least 2".into()));
    }
    if config.optimizers.is_empty() {
        return Err(CampaignError::Config(
            "optimizers must list RS, WRS, or both".into(),
        ));
    }
    let mut optimizers = Vec::new();
    for opt in &config.optimizers {
        if !optimizers.contains(opt) {
            optimizers.push(*opt);
        }
    }

    let space = build_space(&config.dimensions)?;
    let objective = build_objective(&config.objective, &space)?;

    let n_phase1 = match config.n_phase1 {
        PhaseSplit::Auto => None,
        PhaseSplit::Fixed(n0) => {
            if n0 == 0 || n0 >= config.n_total {
                return Err(CampaignError::Config(format!(
                    "n_phase1 = {n0} must satisfy 1 <= n_phase1 < n_total"
                )));
            }
            Some(n0)
        }
    };
    let resolved_n0 = n_phase1.unwrap_or_else(|| default_phase_split(config.n_total));

    let wrs_schedule = match &config.schedule {
        ScheduleSpec::Auto => ScheduleMode::Auto,
        ScheduleSpec::Fixed { probs, min_samples } => {
            if probs.len() != space.len() {
                return Err(CampaignError::Config(format!(
                    "schedule probs has {} entries for a {}-dimensional space",
                    probs.len(),
                    space.len()
                )));
            }
            let min_samples = match min_samples {
                Some(ks) if ks.len() != space.len() => {
                    return Err(CampaignError::Config(format!(
                        "schedule min_samples has {} entries for a {}-dimensional space",
                        ks.len(),
                        space.len()
                    )))
                }
                Some(ks) => ks.clone(),
                None => vec![resolved_n0; space.len()],
            };
            let schedule = ChangeSchedule::new(probs.clone(), min_samples)
                .map_err(|e| CampaignError::Config(e.to_string()))?;
            ScheduleMode::Fixed(schedule)
        }
    };

    // Distinct substreams per (optimizer, run index) are a campaign
    // invariant; a collision would silently duplicate a run.
    let mut seeds = HashSet::new();
    for opt in &optimizers {
        for idx in 0..config.n_runs {
            if !seeds.insert(seed::derive_seed(
                config.base_seed,
                &opt.to_string(),
                idx as u64,
            )) {
                return Err(CampaignError::Config(format!(
                    "seed collision for {opt} run {idx}; choose a different base_seed"
                )));
            }
        }
    }

    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mut threads = if config.parallelism == 0 {
        available
    } else {
        config.parallelism
    };
    if let Some(limit) = objective.max_parallelism() {
        threads = threads.min(limit);
    }

    Ok(Plan {
        space,
        objective,
        optimizers,
        n_phase1,
        wrs_schedule,
        importance: ImportanceParams {
            n_trees: config.importance.trees,
            min_samples_leaf: config.importance.min_samples_leaf,
            ..ImportanceParams::default()
        },
        threads: threads.max(1),
    })
}

fn float_cell(v: f64) -> String {
    // Rust's shortest round-trip formatting keeps CSV values exactly
    // recomputable from the logs.
    format!("{v}")
}

fn run_one(
    config: &ExperimentConfig,
    plan: &Plan,
    optimizer: OptimizerKind,
    index: usize,
) -> Result<RunArtifact, CampaignError> {
    let options = RunOptions {
        schedule: match optimizer {
            OptimizerKind::Rs => ScheduleMode::PureRs,
            OptimizerKind::Wrs => plan.wrs_schedule.clone(),
        },
        importance: plan.importance.clone(),
        independent_draws: config.independent_draws,
    };
    let mut rng = seed::stream(config.base_seed, &optimizer.to_string(), index as u64);
    let history = engine::run(
        &plan.space,
        plan.objective.as_ref(),
        config.n_total,
        plan.n_phase1,
        &options,
        &mut rng,
    )
    .map_err(|e| CampaignError::Config(e.to_string()))?;

    let run_id = format!("{optimizer}-{index:04}");
    let log_path = config.output_dir.join(format!("trials_{run_id}.jsonl"));
    let file = File::create(&log_path).map_err(io_err(&log_path))?;
    let mut writer = BufWriter::new(file);

    let names: Vec<&str> = plan.space.dimensions().iter().map(|d| d.name()).collect();
    let mut best: Option<f64> = None;
    let mut curve = Vec::with_capacity(history.trials().len());
    for trial in history.trials() {
        if let Some(v) = trial.value {
            best = Some(best.map_or(v, |b| if v >= b { v } else { b }));
        }
        curve.push(best);
        let entry = TrialLogEntry {
            run: run_id.clone(),
            optimizer,
            iteration: trial.iteration,
            phase: trial.phase,
            values: names
                .iter()
                .map(|n| n.to_string())
                .zip(trial.candidate.values.iter().cloned())
                .collect(),
            value: trial.value,
            failure: trial.failure.clone(),
            changed: trial.changed.clone(),
            best,
            wall_time_ms: trial.eval_ms,
        };
        let line = serde_json::to_string(&entry)
            .map_err(|e| CampaignError::Config(format!("cannot serialize trial: {e}")))?;
        writeln!(writer, "{line}").map_err(io_err(&log_path))?;
    }
    writer.flush().map_err(io_err(&log_path))?;

    Ok(RunArtifact {
        optimizer,
        best: history.best().map(|b| b.value),
        curve,
        log_path,
    })
}

fn execute_runs(config: &ExperimentConfig, plan: &Plan) -> Result<Vec<RunArtifact>, CampaignError> {
    let tasks: Vec<(OptimizerKind, usize)> = plan
        .optimizers
        .iter()
        .flat_map(|&opt| (0..config.n_runs).map(move |idx| (opt, idx)))
        .collect();

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.threads)
            .build()
            .map_err(|e| CampaignError::Config(format!("cannot build worker pool: {e}")))?;
        pool.install(|| {
            tasks
                .into_par_iter()
                .map(|(opt, idx)| run_one(config, plan, opt, idx))
                .collect()
        })
    }
    #[cfg(not(feature = "parallel"))]
    {
        tasks
            .into_iter()
            .map(|(opt, idx)| run_one(config, plan, opt, idx))
            .collect()
    }
}

/// Execute every configured run, write logs, convergence curves, and the
/// summary CSV, and return the digest.
pub fn run_campaign(config: &ExperimentConfig) -> Result<CampaignReport, CampaignError> {
    let plan = validate(config)?;
    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;

    let artifacts = execute_runs(config, &plan)?;

    let mut summaries = Vec::new();
    let mut bests_by_opt: BTreeMap<OptimizerKind, Vec<f64>> = BTreeMap::new();
    for &opt in &plan.optimizers {
        let bests: Vec<f64> = artifacts
            .iter()
            .filter(|a| a.optimizer == opt)
            .filter_map(|a| a.best)
            .collect();
        if bests.is_empty() {
            return Err(CampaignError::Degenerate(format!(
                "no {opt} run produced a successful trial"
            )));
        }
        let summary =
            stats::summarize(&bests).map_err(|e| CampaignError::Degenerate(e.to_string()))?;
        summaries.push((opt, summary));
        bests_by_opt.insert(opt, bests);
    }

    let t_test = match (
        bests_by_opt.get(&OptimizerKind::Wrs),
        bests_by_opt.get(&OptimizerKind::Rs),
    ) {
        (Some(wrs), Some(rs)) if wrs.len() >= 2 && rs.len() >= 2 => {
            Some(stats::pooled_t_test(wrs, rs).expect("lengths checked"))
        }
        _ => None,
    };

    let summary_path = config.output_dir.join("summary.csv");
    write_summary(&summary_path, &summaries, t_test.as_ref())?;

    let mut convergence_paths = Vec::new();
    for &opt in &plan.optimizers {
        let path = config.output_dir.join(format!("convergence_{opt}.csv"));
        let curves: Vec<&RunArtifact> = artifacts.iter().filter(|a| a.optimizer == opt).collect();
        write_convergence(&path, config.n_total, &curves)?;
        convergence_paths.push(path);
    }

    Ok(CampaignReport {
        output_dir: config.output_dir.clone(),
        log_paths: artifacts.into_iter().map(|a| a.log_path).collect(),
        summaries,
        t_test,
        summary_path,
        convergence_paths,
    })
}

fn write_summary(
    path: &Path,
    summaries: &[(OptimizerKind, CampaignSummary)],
    t_test: Option<&TTest>,
) -> Result<(), CampaignError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "kind,optimizer,best,mean,sd,n_runs,t,df,se,p_value").map_err(io_err(path))?;
    for (opt, s) in summaries {
        writeln!(
            w,
            "summary,{opt},{},{},{},{},,,,",
            float_cell(s.best),
            float_cell(s.mean),
            float_cell(s.sd),
            s.n_runs
        )
        .map_err(io_err(path))?;
    }
    if let Some(t) = t_test {
        writeln!(
            w,
            "t_test,WRS_vs_RS,,,,,{},{},{},{}",
            float_cell(t.t),
            float_cell(t.df),
            float_cell(t.se),
            float_cell(t.p_value)
        )
        .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_convergence(
    path: &Path,
    n_total: usize,
    runs: &[&RunArtifact],
) -> Result<(), CampaignError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut header = String::from("iteration,mean");
    for (i, _) in runs.iter().enumerate() {
        header.push_str(&format!(",run_{i:04}"));
    }
    writeln!(w, "{header}").map_err(io_err(path))?;
    for t in 0..n_total {
        let mut row = format!("{}", t + 1);
        let values: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.curve.get(t).copied().flatten())
            .collect();
        if values.is_empty() {
            row.push(',');
        } else {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            row.push(',');
            row.push_str(&float_cell(mean));
        }
        for r in runs {
            row.push(',');
            if let Some(Some(v)) = r.curve.get(t) {
                row.push_str(&float_cell(*v));
            }
        }
        writeln!(w, "{row}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Parsed result of fitting importance weights on a trial log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogImportance {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
    pub probs: Vec<f64>,
    pub n_trials: usize,
}

/// Fit importance weights on a trial log. Domains are inferred from the
/// observed values: numeric dimensions get their observed range,
/// string-valued dimensions become categorical over the observed set.
pub fn importance_from_log(path: &Path, fit_seed: u64) -> Result<LogImportance, CampaignError> {
    let file = File::open(path)
        .map_err(|e| CampaignError::Config(format!("cannot read {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut entries: Vec<TrialLogEntry> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TrialLogEntry = serde_json::from_str(&line).map_err(|e| {
            CampaignError::Config(format!(
                "malformed log line {} in {}: {e}",
                lineno + 1,
                path.display()
            ))
        })?;
        entries.push(entry);
    }
    let successful: Vec<&TrialLogEntry> = entries.iter().filter(|e| e.value.is_some()).collect();
    if successful.len() < 10 {
        return Err(CampaignError::Config(format!(
            "need at least 10 successful trials to estimate importance, got {}",
            successful.len()
        )));
    }

    let names: Vec<String> = successful[0].values.keys().cloned().collect();
    for e in &successful {
        if e.values.keys().cloned().collect::<Vec<_>>() != names {
            return Err(CampaignError::Config(
                "log lines disagree on dimension names".into(),
            ));
        }
    }

    let space = infer_space(&names, &successful)?;
    let candidates: Vec<Candidate> = successful
        .iter()
        .map(|e| Candidate {
            values: names.iter().map(|n| e.values[n].clone()).collect(),
        })
        .collect();
    let values: Vec<f64> = successful.iter().map(|e| e.value.unwrap()).collect();

    let params = ImportanceParams::default();
    let report = importance::fit_ensemble_raw(&space, &candidates, &values, &params, fit_seed)
        .and_then(|ensemble| importance::main_effect_weights(&ensemble, &space))
        .map_err(|e| match e {
            importance::ImportanceError::ConstantObjective
            | importance::ImportanceError::ConstantModel => {
                CampaignError::Degenerate(e.to_string())
            }
            other => CampaignError::Config(other.to_string()),
        })?;

    let probs = engine::derive_schedule(&report.weights, 0)
        .map_err(|e| CampaignError::Degenerate(e.to_string()))?
        .probs()
        .to_vec();
    Ok(LogImportance {
        names,
        weights: report.weights,
        probs,
        n_trials: successful.len(),
    })
}

fn infer_space(names: &[String], entries: &[&TrialLogEntry]) -> Result<SearchSpace, CampaignError> {
    let mut dims = Vec::with_capacity(names.len());
    for name in names {
        let column: Vec<&Value> = entries.iter().map(|e| &e.values[name]).collect();
        let dim = if column.iter().any(|v| matches!(v, Value::Str(_))) {
            let mut cats: Vec<Value> = Vec::new();
            for v in &column {
                if !cats.contains(v) {
                    cats.push((*v).clone());
                }
            }
            cats.sort_by_key(|a| a.to_string());
            Dimension::categorical(name.clone(), cats)
        } else if column.iter().all(|v| matches!(v, Value::Int(_))) {
            let ints: Vec<i64> = column
                .iter()
                .map(|v| match v {
                    Value::Int(i) => *i,
                    _ => unreachable!(),
                })
                .collect();
            Dimension::integer(
                name.clone(),
                *ints.iter().min().unwrap(),
                *ints.iter().max().unwrap(),
            )
        } else {
            let reals: Vec<f64> = column.iter().filter_map(|v| v.as_f64()).collect();
            let lo = reals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = reals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Dimension::real(name.clone(), lo, hi)
        };
        dims.push(dim.map_err(|e| CampaignError::Config(e.to_string()))?);
    }
    SearchSpace::new(dims).map_err(|e| CampaignError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn g6_config(dir: &Path, n_total: usize, n_runs: usize) -> ExperimentConfig {
        ExperimentConfig {
            dimensions: (1..=6)
                .map(|i| DimensionSpec::Real {
                    name: format!("x{i}"),
                    lo: -600.0,
                    hi: 600.0,
                })
                .collect(),
            objective: ObjectiveSpec::Builtin("neg_griewank_mod6".into()),
            n_total,
            n_phase1: PhaseSplit::Auto,
            schedule: ScheduleSpec::Auto,
            n_runs,
            base_seed: 42,
            optimizers: default_optimizers(),
            parallelism: 0,
            output_dir: dir.to_path_buf(),
            independent_draws: false,
            importance: ImportanceConfig::default(),
        }
    }

    #[test]
    fn config_parses_from_toml() {
        let text = r#"
            n_total = 64
            n_runs = 2
            base_seed = 7
            output_dir = "out"
            objective = "neg_griewank_mod6"
            optimizers = ["rs", "wrs"]
            n_phase1 = "auto"

            [[dimension]]
            name = "x1"
            kind = "real"
            lo = -600.0
            hi = 600.0

            [[dimension]]
            name = "x2"
            kind = "int"
            lo = 0
            hi = 10

            [[dimension]]
            name = "x3"
            kind = "categorical"
            values = [3, 4, 5, 6]
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(config.n_total, 64);
        assert_eq!(config.n_phase1, PhaseSplit::Auto);
        assert_eq!(config.dimensions.len(), 3);
        assert_eq!(config.importance.trees, 32);
        assert_eq!(
            config.optimizers,
            vec![OptimizerKind::Rs, OptimizerKind::Wrs]
        );
    }

    #[test]
    fn explicit_schedule_parses() {
        let text = r#"
            n_total = 10
            n_runs = 1
            base_seed = 1
            output_dir = "out"
            objective = "neg_griewank"

            [schedule]
            probs = [1.0, 0.5]

            [[dimension]]
            name = "a"
            kind = "real"
            lo = 0.0
            hi = 1.0

            [[dimension]]
            name = "b"
            kind = "real"
            lo = 0.0
            hi = 1.0
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(
            config.schedule,
            ScheduleSpec::Fixed {
                probs: vec![1.0, 0.5],
                min_samples: None
            }
        );
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let text = r#"
            n_total = 10
            n_runs = 1
            base_seed = 1
            output_dir = "out"
            objective = "neg_griewank"
            independant_draws = true

            [[dimension]]
            name = "a"
            kind = "real"
            lo = 0.0
            hi = 1.0
        "#;
        let err = toml::from_str::<ExperimentConfig>(text).unwrap_err();
        assert!(err.to_string().contains("independant_draws"), "{err}");
    }

    #[test]
    fn external_objective_spec_parses() {
        let text = r#"
            n_total = 10
            n_runs = 1
            base_seed = 1
            output_dir = "out"

            [objective]
            command = ["python3", "eval.py"]
            timeout_secs = 5.0
            persistent = true

            [[dimension]]
            name = "a"
            kind = "real"
            lo = 0.0
            hi = 1.0
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        match &config.objective {
            ObjectiveSpec::External {
                command,
                timeout_secs,
                persistent,
                max_parallelism,
            } => {
                assert_eq!(command, &["python3".to_string(), "eval.py".to_string()]);
                assert_eq!(*timeout_secs, 5.0);
                assert!(*persistent);
                assert!(max_parallelism.is_none());
            }
            other => panic!("unexpected objective: {other:?}"),
        }
    }

    #[test]
    fn campaign_emits_the_expected_artifacts() {
        let dir = TempDir::new().unwrap();
        let config = g6_config(dir.path(), 40, 2);
        let report = run_campaign(&config).unwrap();
        // Two optimizers x two runs.
        assert_eq!(report.log_paths.len(), 4);
        for p in &report.log_paths {
            assert!(p.exists(), "missing log {}", p.display());
            let lines = fs::read_to_string(p).unwrap().lines().count();
            assert_eq!(lines, 40);
        }
        assert!(report.summary_path.exists());
        let summary = fs::read_to_string(&report.summary_path).unwrap();
        let rows: Vec<&str> = summary.lines().collect();
        assert_eq!(rows.len(), 4); // header + RS + WRS + t-test
        assert!(rows[1].starts_with("summary,RS,"));
        assert!(rows[2].starts_with("summary,WRS,"));
        assert!(rows[3].starts_with("t_test,WRS_vs_RS,"));
        assert_eq!(report.convergence_paths.len(), 2);
        for p in &report.convergence_paths {
            let text = fs::read_to_string(p).unwrap();
            assert_eq!(text.lines().count(), 41); // header + one row per iteration
            assert!(text
                .lines()
                .next()
                .unwrap()
                .starts_with("iteration,mean,run_0000,run_0001"));
        }
    }

    #[test]
    fn singleton_space_repeats_the_unique_candidate() {
        let dir = TempDir::new().unwrap();
        let mut config = g6_config(dir.path(), 5, 1);
        config.dimensions = vec![DimensionSpec::Int {
            name: "k".into(),
            lo: 7,
            hi: 7,
        }];
        config.objective = ObjectiveSpec::Builtin("neg_griewank".into());
        config.optimizers = vec![OptimizerKind::Rs];
        let report = run_campaign(&config).unwrap();
        let log = fs::read_to_string(&report.log_paths[0]).unwrap();
        let entries: Vec<TrialLogEntry> = log
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(entries.len(), 5);
        for e in &entries {
            assert_eq!(e.values["k"], Value::Int(7));
            assert_eq!(e.best, entries[0].value);
        }
    }

    #[test]
    fn best_column_is_non_decreasing_and_matches_summary() {
        let dir = TempDir::new().unwrap();
        let config = g6_config(dir.path(), 60, 3);
        let report = run_campaign(&config).unwrap();

        let mut bests_by_opt: BTreeMap<OptimizerKind, Vec<f64>> = BTreeMap::new();
        for path in &report.log_paths {
            let text = fs::read_to_string(path).unwrap();
            let mut last_best = f64::NEG_INFINITY;
            let mut final_best = None;
            let mut optimizer = None;
            for (lineno, line) in text.lines().enumerate() {
                let e: TrialLogEntry = serde_json::from_str(line).unwrap();
                assert_eq!(
                    e.iteration,
                    lineno + 1,
                    "iterations must be strictly increasing"
                );
                if let Some(b) = e.best {
                    assert!(b >= last_best, "best column decreased");
                    last_best = b;
                    final_best = Some(b);
                }
                optimizer = Some(e.optimizer);
            }
            bests_by_opt
                .entry(optimizer.unwrap())
                .or_default()
                .push(final_best.unwrap());
        }
        // Summary rows must be exactly recomputable from the logs.
        for (opt, summary) in &report.summaries {
            let recomputed = stats::summarize(&bests_by_opt[opt]).unwrap();
            assert_eq!(summary.best, recomputed.best);
            assert_eq!(summary.mean, recomputed.mean);
            assert_eq!(summary.sd, recomputed.sd);
        }
    }

    #[test]
    fn replay_is_byte_identical_modulo_wall_time() {
        let dir_a = TempDir::new().unwrap();
        let dir_b = TempDir::new().unwrap();
        let config_a = g6_config(dir_a.path(), 30, 2);
        let config_b = g6_config(dir_b.path(), 30, 2);
        let report_a = run_campaign(&config_a).unwrap();
        let report_b = run_campaign(&config_b).unwrap();
        for (pa, pb) in report_a.log_paths.iter().zip(&report_b.log_paths) {
            let strip = |path: &Path| -> Vec<String> {
                fs::read_to_string(path)
                    .unwrap()
                    .lines()
                    .map(|l| {
                        let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                        v.as_object_mut().unwrap().remove("wall_time_ms");
                        v.to_string()
                    })
                    .collect()
            };
            assert_eq!(strip(pa), strip(pb));
        }
        let summary_a = fs::read_to_string(&report_a.summary_path).unwrap();
        let summary_b = fs::read_to_string(&report_b.summary_path).unwrap();
        assert_eq!(summary_a, summary_b);
    }

    #[test]
    fn importance_from_log_recovers_the_dominant_dimension() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("synthetic.jsonl");
        let mut rng = crate::seed::stream(3, "log-gen", 0);
        use rand::Rng;
        let mut file = File::create(&path).unwrap();
        for i in 0..80 {
            let x1: f64 = rng.gen_range(0.0..1.0);
            let x2: f64 = rng.gen_range(0.0..1.0);
            let entry = TrialLogEntry {
                run: "RS-0000".into(),
                optimizer: OptimizerKind::Rs,
                iteration: i + 1,
                phase: Phase::Rs,
                values: [
                    ("x1".to_string(), Value::Real(x1)),
                    ("x2".to_string(), Value::Real(x2)),
                ]
                .into_iter()
                .collect(),
                value: Some(x1),
                failure: None,
                changed: vec![true, true],
                best: None,
                wall_time_ms: 0.0,
            };
            writeln!(file, "{}", serde_json::to_string(&entry).unwrap()).unwrap();
        }
        let result = importance_from_log(&path, 1).unwrap();
        assert_eq!(result.names, vec!["x1", "x2"]);
        assert!(result.weights[0] > result.weights[1]);
        assert_eq!(result.probs[0], 1.0);
        assert_eq!(result.n_trials, 80);
    }

    #[test]
    fn importance_from_log_rejects_short_logs() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("short.jsonl");
        let entry = TrialLogEntry {
            run: "RS-0000".into(),
            optimizer: OptimizerKind::Rs,
            iteration: 1,
            phase: Phase::Rs,
            values: [("x".to_string(), Value::Real(0.5))].into_iter().collect(),
            value: Some(1.0),
            failure: None,
            changed: vec![true],
            best: Some(1.0),
            wall_time_ms: 0.0,
        };
        fs::write(&path, serde_json::to_string(&entry).unwrap()).unwrap();
        assert!(matches!(
            importance_from_log(&path, 1),
            Err(CampaignError::Config(_))
        ));
    }

    #[test]
    fn importance_from_log_flags_constant_objectives() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("constant.jsonl");
        let mut file = File::create(&path).unwrap();
        let mut rng = crate::seed::stream(4, "log-gen", 0);
        use rand::Rng;
        for i in 0..20 {
            let entry = TrialLogEntry {
                run: "RS-0000".into(),
                optimizer: OptimizerKind::Rs,
                iteration: i + 1,
                phase: Phase::Rs,
                values: [("x".to_string(), Value::Real(rng.gen_range(0.0..1.0)))]
                    .into_iter()
                    .collect(),
                value: Some(2.5),
                failure: None,
                changed: vec![true],
                best: Some(2.5),
                wall_time_ms: 0.0,
            };
            writeln!(file, "{}", serde_json::to_string(&entry).unwrap()).unwrap();
        }
        assert!(matches!(
            importance_from_log(&path, 1),
            Err(CampaignError::Degenerate(_))
        ));
    }

    #[test]
    fn external_objective_campaign_end_to_end() {
        let dir = TempDir::new().unwrap();
        let mut config = g6_config(dir.path(), 12, 1);
        config.dimensions = vec![DimensionSpec::Real {
            name: "x".into(),
            lo: 0.0,
            hi: 1.0,
        }];
        config.optimizers = vec![OptimizerKind::Rs];
        // Echoes the coordinate back as the value; fails above 0.9.
        config.objective = ObjectiveSpec::External {
            command: vec![
                "/bin/sh".into(),
                "-c".into(),
                r#"read line; x=$(printf '%s' "$line" | sed 's/.*"x"://; s/[},].*//')
                   case "$x" in 0.9*) exit 3;; esac
                   printf '{"value": %s}\n' "$x""#
                    .into(),
            ],
            timeout_secs: 30.0,
            persistent: false,
            max_parallelism: Some(2),
        };
        let report = run_campaign(&config).unwrap();
        let text = fs::read_to_string(&report.log_paths[0]).unwrap();
        let entries: Vec<TrialLogEntry> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(entries.len(), 12);
        for e in &entries {
            match (e.value, &e.failure) {
                (Some(v), None) => {
                    let x = match &e.values["x"] {
                        Value::Real(x) => *x,
                        other => panic!("unexpected value {other:?}"),
                    };
                    assert!((v - x).abs() <= 1e-12, "stub echoed {v} for {x}");
                }
                (None, Some(_)) => {}
                other => panic!("inconsistent trial outcome {other:?}"),
            }
        }
        // The sed-based stub fails exactly on coordinates printed as 0.9x.
        let failures = entries.iter().filter(|e| e.failure.is_some()).count();
        let expected = entries
            .iter()
            .filter(
                |e| matches!(&e.values["x"], Value::Real(x) if format!("{x}").starts_with("0.9")),
            )
            .count();
        assert_eq!(failures, expected);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let dir = TempDir::new().unwrap();
        let mut config = g6_config(dir.path(), 40, 0);
        assert!(matches!(
            run_campaign(&config),
            Err(CampaignError::Config(_))
        ));
        config.n_runs = 1;
        config.n_total = 1;
        assert!(matches!(
            run_campaign(&config),
            Err(CampaignError::Config(_))
        ));
        config.n_total = 40;
        config.objective = ObjectiveSpec::Builtin("nope".into());
        assert!(matches!(
            run_campaign(&config),
            Err(CampaignError::Config(_))
        ));
    }
}
