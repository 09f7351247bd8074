//! Weighted random search (WRS) for black-box optimization.
//!
//! WRS is a two-phase variant of random search. Phase one is plain random
//! search. Between phases, per-dimension importance weights are estimated
//! from the trial history with a tree-ensemble variance decomposition, and
//! each dimension receives a probability of change proportional to its
//! weight. Phase two resamples a dimension with that probability and
//! otherwise reuses the best value found so far for it.
//!
//! The crate also ships numerical implementations of the per-step
//! optimum-hit probabilities for both optimizers on finite discrete spaces
//! (see [`theory`]), benchmark objectives, campaign statistics, and a
//! campaign orchestrator that persists trial logs and summaries.

pub mod campaign;
pub mod engine;
pub mod importance;
pub mod objectives;
pub mod seed;
pub mod space;
pub mod stats;
pub mod theory;

pub use engine::{ChangeSchedule, Phase, RunHistory, RunOptions, ScheduleMode, TrialRecord};
pub use importance::{ImportanceParams, WeightReport};
pub use objectives::Objective;
pub use space::{Candidate, Cardinality, Dimension, Domain, SearchSpace, Value};
