//! Per-step and n-step optimum-hit probabilities for random search and
//! weighted random search on finite discrete spaces.
//!
//! All formulas assume statistically uncorrelated dimensions and uniform
//! sampling. Spaces with real-interval dimensions are rejected: these
//! probabilities are defined for countable sets only.

use crate::space::{Cardinality, SearchSpace};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error(
        "dimension `{0}` has infinite cardinality; probabilities are defined for finite sets only"
    )]
    InfiniteCardinality(String),
    #[error("profile vectors must have equal, non-zero length")]
    LengthMismatch,
    #[error("cardinalities must be >= 1")]
    InvalidCardinality,
    #[error("change probabilities must lie in (0, 1] and the first must be exactly 1")]
    InvalidProbability,
    #[error("distinct-value counts must lie in [1, |S_i|]")]
    InvalidDistinctCount,
}

/// A discrete what-if profile: per-dimension cardinalities `|S_i|`, change
/// probabilities `p_i` (with `p_1 = 1`), and counts `m_i` of distinct
/// values already generated.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProfile {
    cards: Vec<u64>,
    probs: Vec<f64>,
    distinct: Vec<u64>,
}

impl DiscreteProfile {
    pub fn new(cards: Vec<u64>, probs: Vec<f64>, distinct: Vec<u64>) -> Result<Self, TheoryError> {
        if cards.is_empty() || cards.len() != probs.len() || cards.len() != distinct.len() {
            return Err(TheoryError::LengthMismatch);
        }
        if cards.contains(&0) {
            return Err(TheoryError::InvalidCardinality);
        }
        if probs[0] != 1.0 || probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(TheoryError::InvalidProbability);
        }
        if distinct.iter().zip(&cards).any(|(&m, &c)| m == 0 || m > c) {
            return Err(TheoryError::InvalidDistinctCount);
        }
        Ok(Self {
            cards,
            probs,
            distinct,
        })
    }

    /// Build a profile from a search space; errors on any real-interval
    /// dimension.
    pub fn from_space(
        space: &SearchSpace,
        probs: Vec<f64>,
        distinct: Vec<u64>,
    ) -> Result<Self, TheoryError> {
        let cards = space
            .dimensions()
            .iter()
            .map(|d| match d.cardinality() {
                Cardinality::Finite(n) => Ok(n),
                Cardinality::Infinite => {
                    Err(TheoryError::InfiniteCardinality(d.name().to_string()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(cards, probs, distinct)
    }

    pub fn cards(&self) -> &[u64] {
        &self.cards
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn distinct(&self) -> &[u64] {
        &self.distinct
    }
}

// Above this dimension count the products are evaluated in log space to
// avoid underflow.
const LOG_SPACE_DIMS: usize = 50;

/// Per-step probability that plain random search hits the global optimum:
/// the product of the reciprocal cardinalities.
pub fn p_rs(profile: &DiscreteProfile) -> f64 {
    if profile.cards.len() > LOG_SPACE_DIMS {
        let log_sum: f64 = profile.cards.iter().map(|&c| -(c as f64).ln()).sum();
        return log_sum.exp();
    }
    let mut acc = 1.0;
    for &c in &profile.cards {
        acc *= 1.0 / c as f64;
    }
    acc
}

fn wrs_term(card: u64, prob: f64, distinct: u64) -> f64 {
    let s = card as f64;
    if distinct == 1 {
        // The mixture collapses: reuse and resample both hit with 1/|S_i|.
        1.0 / s
    } else {
        let m = distinct as f64;
        prob / s + (1.0 - prob) / (s - m + 1.0)
    }
}

/// Per-step probability that weighted random search hits the global
/// optimum. The first dimension always changes and contributes `1/|S_1|`;
/// every other dimension contributes a mixture of the resample term
/// `p_i/|S_i|` and the reuse term `(1-p_i)/(|S_i|-m_i+1)`.
pub fn p_wrs(profile: &DiscreteProfile) -> f64 {
    let d = profile.cards.len();
    if d > LOG_SPACE_DIMS {
        let mut log_sum = -(profile.cards[0] as f64).ln();
        for i in 1..d {
            log_sum += wrs_term(profile.cards[i], profile.probs[i], profile.distinct[i]).ln();
        }
        return log_sum.exp();
    }
    let mut acc = 1.0 / profile.cards[0] as f64;
    for i in 1..d {
        acc *= wrs_term(profile.cards[i], profile.probs[i], profile.distinct[i]);
    }
    acc
}

/// Probability of at least one hit in `n` independent steps with per-step
/// probability `p`.
pub fn p_after_n(p: f64, n: u64) -> f64 {
    1.0 - (1.0 - p).powf(n as f64)
}

/// Expected number of distinct values after `n` steps of resampling a
/// uniform dimension of the given cardinality with change probability `p`.
pub fn expected_distinct(card: u64, n: u64, p: f64) -> f64 {
    let s = card as f64;
    s * (1.0 - ((s - 1.0) / s).powf(n as f64 * p))
}

/// Sufficient condition for per-step dominance of WRS over RS: at least
/// two distinct values generated for every dimension past the first.
pub fn dominance_holds(profile: &DiscreteProfile) -> bool {
    profile.distinct.iter().skip(1).all(|&m| m >= 2)
}
