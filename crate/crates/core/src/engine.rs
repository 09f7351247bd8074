//! The optimizer engine: one weighted-random-search step, the two-phase
//! driver, and plain random search as the all-probabilities-one special
//! case.
//!
//! A step draws a single uniform `p` in (0, 1) and resamples dimension `i`
//! when `p_i >= p` or when the step index is still at most `k_i`;
//! otherwise it copies the best-known coordinate for that dimension. One
//! shared draw couples the change events across dimensions: whenever a
//! dimension changes, every dimension with a higher change probability
//! changed too. The objective is evaluated once per step and the best is
//! replaced whenever the new value is greater than or equal to it.

use crate::importance::{self, ImportanceParams, WeightReport};
use crate::objectives::Objective;
use crate::space::{Candidate, SearchSpace};
use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("objective arity {objective} does not match space dimension {space}")]
    ArityMismatch { objective: usize, space: usize },
    #[error("schedule length {schedule} does not match space dimension {space}")]
    ScheduleLength { schedule: usize, space: usize },
    #[error("change probabilities must lie in (0, 1] with the maximum exactly 1")]
    InvalidProbabilities,
    #[error("trial budget must be at least {min}, got {got}")]
    BudgetTooSmall { min: usize, got: usize },
    #[error("phase split {n_phase1} is not in [1, {max}]")]
    InvalidPhaseSplit { n_phase1: usize, max: usize },
    #[error("step requires a change schedule, but none is set")]
    NoSchedule,
    #[error("importance weights are all zero; falling back to pure random search")]
    AllZeroWeights,
    #[error("importance weights must be finite and non-negative")]
    InvalidWeights,
}

/// Smallest probability of change a dimension can be assigned; keeps every
/// dimension reachable even when its importance weight is exactly zero.
pub const MIN_CHANGE_PROB: f64 = 1e-3;

/// Per-dimension probabilities of change `p_i` and minimum sample counts
/// `k_i`, in space order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSchedule {
    probs: Vec<f64>,
    min_samples: Vec<usize>,
}

impl ChangeSchedule {
    pub fn new(probs: Vec<f64>, min_samples: Vec<usize>) -> Result<Self, EngineError> {
        if probs.is_empty() || probs.len() != min_samples.len() {
            return Err(EngineError::ScheduleLength {
                schedule: probs.len(),
                space: min_samples.len(),
            });
        }
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max != 1.0 || probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(EngineError::InvalidProbabilities);
        }
        Ok(Self { probs, min_samples })
    }

    /// The schedule that makes every step a plain random-search step.
    pub fn all_ones(d: usize) -> Self {
        Self {
            probs: vec![1.0; d],
            min_samples: vec![0; d],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn min_samples(&self) -> &[usize] {
        &self.min_samples
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "RS")]
    Rs,
    #[serde(rename = "WRS")]
    Wrs,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Rs => "RS",
            Phase::Wrs => "WRS",
        })
    }
}

/// One evaluated candidate. `value` is `None` when the evaluation failed;
/// `failure` then carries the reason. Failed trials still consume budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// 1-based step index.
    pub iteration: usize,
    pub candidate: Candidate,
    pub value: Option<f64>,
    pub failure: Option<String>,
    /// Which dimensions were resampled this step, in space order.
    pub changed: Vec<bool>,
    pub phase: Phase,
    /// Objective evaluation wall time.
    pub eval_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSoFar {
    pub candidate: Candidate,
    pub value: f64,
    pub iteration: usize,
}

/// The ordered trial ledger of one run plus its running best, schedule and
/// weights. This is the unit of persistence and of importance estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    space: SearchSpace,
    trials: Vec<TrialRecord>,
    best: Option<BestSoFar>,
    schedule: Option<ChangeSchedule>,
    weights: Option<WeightReport>,
    n_total: usize,
    n_phase1: usize,
    schedule_fallback: bool,
    independent_draws: bool,
}

impl RunHistory {
    pub fn new(space: SearchSpace, n_total: usize, n_phase1: usize) -> Result<Self, EngineError> {
        if n_total == 0 {
            return Err(EngineError::BudgetTooSmall {
                min: 1,
                got: n_total,
            });
        }
        if n_phase1 == 0 || n_phase1 > n_total {
            return Err(EngineError::InvalidPhaseSplit {
                n_phase1,
                max: n_total,
            });
        }
        Ok(Self {
            space,
            trials: Vec::new(),
            best: None,
            schedule: None,
            weights: None,
            n_total,
            n_phase1,
            schedule_fallback: false,
            independent_draws: false,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn best(&self) -> Option<&BestSoFar> {
        self.best.as_ref()
    }

    pub fn schedule(&self) -> Option<&ChangeSchedule> {
        self.schedule.as_ref()
    }

    pub fn set_schedule(&mut self, schedule: ChangeSchedule) -> Result<(), EngineError> {
        if schedule.len() != self.space.len() {
            return Err(EngineError::ScheduleLength {
                schedule: schedule.len(),
                space: self.space.len(),
            });
        }
        self.schedule = Some(schedule);
        Ok(())
    }

    pub fn weights(&self) -> Option<&WeightReport> {
        self.weights.as_ref()
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_phase1(&self) -> usize {
        self.n_phase1
    }

    /// True when importance estimation failed and the run fell back to an
    /// all-ones schedule (pure random search) for phase two.
    pub fn schedule_fallback(&self) -> bool {
        self.schedule_fallback
    }

    pub fn independent_draws(&self) -> bool {
        self.independent_draws
    }
}

fn evaluate_into_record(
    objective: &dyn Objective,
    candidate: Candidate,
    changed: Vec<bool>,
    phase: Phase,
    iteration: usize,
) -> (TrialRecord, Option<f64>) {
    let started = Instant::now();
    let outcome = objective.evaluate(&candidate);
    let eval_ms = started.elapsed().as_secs_f64() * 1e3;
    let (value, failure) = match outcome {
        Ok(v) if v.is_finite() => (Some(v), None),
        Ok(v) => (None, Some(format!("non-finite objective value {v}"))),
        Err(e) => (None, Some(e.to_string())),
    };
    (
        TrialRecord {
            iteration,
            candidate,
            value,
            failure,
            changed,
            phase,
            eval_ms,
        },
        value,
    )
}

fn step<R: Rng + ?Sized>(
    history: &mut RunHistory,
    rng: &mut R,
    objective: &dyn Objective,
    schedule: Option<&ChangeSchedule>,
    phase: Phase,
) -> usize {
    let d = history.space.len();
    let iteration = history.trials.len() + 1;

    let mut changed: Vec<bool> = if history.independent_draws {
        (0..d)
            .map(|i| {
                let u: f64 = rng.sample(Open01);
                match schedule {
                    Some(s) => s.probs[i] >= u || iteration <= s.min_samples[i],
                    None => true,
                }
            })
            .collect()
    } else {
        let p: f64 = rng.sample(Open01);
        (0..d)
            .map(|i| match schedule {
                Some(s) => s.probs[i] >= p || iteration <= s.min_samples[i],
                None => true,
            })
            .collect()
    };
    // Without a successful baseline there is nothing to reuse.
    if history.best.is_none() {
        changed.iter_mut().for_each(|c| *c = true);
    }

    let values = history
        .space
        .dimensions()
        .iter()
        .enumerate()
        .map(|(i, dim)| {
            if changed[i] {
                dim.sample(rng)
            } else {
                history
                    .best
                    .as_ref()
                    .expect("baseline present")
                    .candidate
                    .values[i]
                    .clone()
            }
        })
        .collect();

    let (record, value) =
        evaluate_into_record(objective, Candidate { values }, changed, phase, iteration);
    if let Some(v) = value {
        let replaces = history.best.as_ref().is_none_or(|b| v >= b.value);
        if replaces {
            history.best = Some(BestSoFar {
                candidate: record.candidate.clone(),
                value: v,
                iteration,
            });
        }
    }
    history.trials.push(record);
    history.trials.len() - 1
}

/// One plain random-search step: resample every dimension, evaluate once,
/// keep the best on ties. Consumes the stream exactly like a WRS step
/// under an all-ones schedule, so the two produce bit-identical runs.
pub fn rs_step<'h, R: Rng + ?Sized>(
    history: &'h mut RunHistory,
    rng: &mut R,
    objective: &dyn Objective,
) -> &'h TrialRecord {
    let idx = step(history, rng, objective, None, Phase::Rs);
    &history.trials[idx]
}

/// One weighted-random-search step against the history's schedule.
pub fn wrs_step<'h, R: Rng + ?Sized>(
    history: &'h mut RunHistory,
    rng: &mut R,
    objective: &dyn Objective,
) -> Result<&'h TrialRecord, EngineError> {
    let schedule = history.schedule.clone().ok_or(EngineError::NoSchedule)?;
    let idx = step(history, rng, objective, Some(&schedule), Phase::Wrs);
    Ok(&history.trials[idx])
}

/// How phase two obtains its change schedule.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScheduleMode {
    /// Estimate importance weights on the phase-one history and derive the
    /// probabilities from them.
    #[default]
    Auto,
    /// Use the given schedule; no importance estimation.
    Fixed(ChangeSchedule),
    /// Plain random search for the whole budget; no phase two.
    PureRs,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    pub schedule: ScheduleMode,
    pub importance: ImportanceParams,
    /// Draw one uniform per dimension instead of one shared draw per step.
    /// Off by default: the shared draw is the documented behavior.
    pub independent_draws: bool,
}

/// Default phase split: `round(n_total / e)`, clamped into `[1, n-1]`.
pub fn default_phase_split(n_total: usize) -> usize {
    let raw = (n_total as f64 / std::f64::consts::E).round() as usize;
    raw.clamp(1, n_total.saturating_sub(1).max(1))
}

/// Turn importance weights into a change schedule: `p_i = w_i / w_max`,
/// floored at [`MIN_CHANGE_PROB`], and `k_i = n_phase1` for every
/// dimension. The dimension with the largest weight gets probability
/// exactly 1.
pub fn derive_schedule(weights: &[f64], n_phase1: usize) -> Result<ChangeSchedule, EngineError> {
    if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(EngineError::InvalidWeights);
    }
    let w_max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if w_max <= 0.0 {
        return Err(EngineError::AllZeroWeights);
    }
    let probs = weights
        .iter()
        .map(|w| (w / w_max).max(MIN_CHANGE_PROB))
        .collect();
    ChangeSchedule::new(probs, vec![n_phase1; weights.len()])
}

/// Execute a full seeded run: `n_phase1` random-search steps, one round of
/// importance estimation (unless the schedule is fixed), then
/// weighted-random-search steps up to `n_total`.
pub fn run<R: Rng + ?Sized>(
    space: &SearchSpace,
    objective: &dyn Objective,
    n_total: usize,
    n_phase1: Option<usize>,
    options: &RunOptions,
    rng: &mut R,
) -> Result<RunHistory, EngineError> {
    if objective.arity() != space.len() {
        return Err(EngineError::ArityMismatch {
            objective: objective.arity(),
            space: space.len(),
        });
    }
    let pure_rs = matches!(options.schedule, ScheduleMode::PureRs);
    let min_budget = if pure_rs { 1 } else { 2 };
    if n_total < min_budget {
        return Err(EngineError::BudgetTooSmall {
            min: min_budget,
            got: n_total,
        });
    }
    let n0 = if pure_rs {
        n_total
    } else {
        let n0 = n_phase1.unwrap_or_else(|| default_phase_split(n_total));
        if n0 == 0 || n0 >= n_total {
            return Err(EngineError::InvalidPhaseSplit {
                n_phase1: n0,
                max: n_total - 1,
            });
        }
        n0
    };

    let mut history = RunHistory::new(space.clone(), n_total, n0)?;
    history.independent_draws = options.independent_draws;

    for _ in 0..n0 {
        rs_step(&mut history, rng, objective);
    }
    if pure_rs {
        return Ok(history);
    }

    match &options.schedule {
        ScheduleMode::Fixed(schedule) => {
            history.set_schedule(schedule.clone())?;
        }
        ScheduleMode::Auto => {
            // The estimation seed comes from the run's own stream, so a
            // replayed run re-derives the identical schedule.
            let seed: u64 = rng.gen();
            let derived = importance::fit_ensemble(&history, &options.importance, seed)
                .and_then(|ensemble| importance::main_effect_weights(&ensemble, space))
                .map_err(|_| EngineError::AllZeroWeights)
                .and_then(|report| {
                    derive_schedule(&report.weights, n0).map(|schedule| (report, schedule))
                });
            match derived {
                Ok((report, schedule)) => {
                    history.weights = Some(report);
                    history.set_schedule(schedule)?;
                }
                Err(_) => {
                    history.schedule_fallback = true;
                    history.set_schedule(ChangeSchedule::all_ones(space.len()))?;
                }
            }
        }
        ScheduleMode::PureRs => unreachable!(),
    }

    for _ in n0..n_total {
        wrs_step(&mut history, rng, objective).expect("schedule was just set");
    }
    Ok(history)
}
