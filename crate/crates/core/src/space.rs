//! Search spaces: ordered dimensions with finite or interval domains, and
//! seeded uniform sampling over them.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("dimension `{0}`: empty categorical value set")]
    EmptyCategorical(String),
    #[error("dimension `{0}`: duplicate categorical value")]
    DuplicateCategory(String),
    #[error("dimension `{0}`: non-finite categorical value")]
    NonFiniteCategory(String),
    #[error("dimension `{name}`: invalid interval [{lo}, {hi}]")]
    InvalidInterval { name: String, lo: f64, hi: f64 },
    #[error("search space has no dimensions")]
    EmptySpace,
    #[error("duplicate dimension name `{0}`")]
    DuplicateName(String),
}

/// A scalar value a dimension can take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Str(String),
}

impl Value {
    /// Numeric view, used by built-in objectives and the importance trees.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            Value::Str(_) => None,
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v}"),
        }
    }
}

/// Number of points in a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    Finite(u64),
    Infinite,
}

impl Cardinality {
    pub fn as_finite(&self) -> Option<u64> {
        match self {
            Cardinality::Finite(n) => Some(*n),
            Cardinality::Infinite => None,
        }
    }
}

/// The set of values a dimension ranges over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// Finite explicit value set.
    Categorical(Vec<Value>),
    /// Integers in `[lo, hi]`, both ends inclusive.
    Integer { lo: i64, hi: i64 },
    /// Reals in `[lo, hi]`.
    Real { lo: f64, hi: f64 },
}

/// Sampling law over a domain. Uniform is the only built-in law; the enum
/// is the extension point for non-uniform priors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Distribution {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    name: String,
    domain: Domain,
    #[serde(default)]
    distribution: Distribution,
}

impl Dimension {
    pub fn new(name: impl Into<String>, domain: Domain) -> Result<Self, SpaceError> {
        let name = name.into();
        match &domain {
            Domain::Categorical(values) => {
                if values.is_empty() {
                    return Err(SpaceError::EmptyCategorical(name));
                }
                for (i, v) in values.iter().enumerate() {
                    if matches!(v, Value::Real(x) if !x.is_finite()) {
                        return Err(SpaceError::NonFiniteCategory(name));
                    }
                    if values[..i].contains(v) {
                        return Err(SpaceError::DuplicateCategory(name));
                    }
                }
            }
            Domain::Integer { lo, hi } => {
                if lo > hi {
                    return Err(SpaceError::InvalidInterval {
                        name,
                        lo: *lo as f64,
                        hi: *hi as f64,
                    });
                }
            }
            Domain::Real { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(SpaceError::InvalidInterval {
                        name,
                        lo: *lo,
                        hi: *hi,
                    });
                }
            }
        }
        Ok(Self {
            name,
            domain,
            distribution: Distribution::Uniform,
        })
    }

    /// Real interval dimension, the common case for benchmark objectives.
    pub fn real(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self, SpaceError> {
        Self::new(name, Domain::Real { lo, hi })
    }

    pub fn integer(name: impl Into<String>, lo: i64, hi: i64) -> Result<Self, SpaceError> {
        Self::new(name, Domain::Integer { lo, hi })
    }

    pub fn categorical(name: impl Into<String>, values: Vec<Value>) -> Result<Self, SpaceError> {
        Self::new(name, Domain::Categorical(values))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Set size: exact for categorical and integer domains, infinite for
    /// real intervals.
    pub fn cardinality(&self) -> Cardinality {
        match &self.domain {
            Domain::Categorical(values) => Cardinality::Finite(values.len() as u64),
            Domain::Integer { lo, hi } => Cardinality::Finite((hi - lo) as u64 + 1),
            Domain::Real { .. } => Cardinality::Infinite,
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (&self.domain, value) {
            (Domain::Categorical(values), v) => values.contains(v),
            (Domain::Integer { lo, hi }, Value::Int(v)) => lo <= v && v <= hi,
            (Domain::Real { lo, hi }, Value::Real(v)) => lo <= v && v <= hi,
            _ => false,
        }
    }

    /// Draw one value uniformly from the domain, consuming the stream
    /// deterministically.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match &self.domain {
            Domain::Categorical(values) => values[rng.gen_range(0..values.len())].clone(),
            Domain::Integer { lo, hi } => Value::Int(rng.gen_range(*lo..=*hi)),
            Domain::Real { lo, hi } => {
                if lo == hi {
                    Value::Real(*lo)
                } else {
                    Value::Real(rng.gen_range(*lo..=*hi))
                }
            }
        }
    }
}

/// One point of a search space, in dimension order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub values: Vec<Value>,
}

impl Candidate {
    /// Coordinates as reals; `None` if any coordinate is non-numeric.
    pub fn as_f64_vec(&self) -> Option<Vec<f64>> {
        self.values.iter().map(Value::as_f64).collect()
    }
}

/// An ordered, immutable list of dimensions. The order is fixed and indexes
/// every per-dimension array elsewhere (schedules, weights, change flags).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    dimensions: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self, SpaceError> {
        if dimensions.is_empty() {
            return Err(SpaceError::EmptySpace);
        }
        for (i, dim) in dimensions.iter().enumerate() {
            if dimensions[..i].iter().any(|d| d.name == dim.name) {
                return Err(SpaceError::DuplicateName(dim.name.clone()));
            }
        }
        Ok(Self { dimensions })
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    /// Draw a full candidate, one coordinate per dimension in order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Candidate {
        Candidate {
            values: self.dimensions.iter().map(|d| d.sample(rng)).collect(),
        }
    }

    pub fn contains(&self, candidate: &Candidate) -> bool {
        candidate.values.len() == self.dimensions.len()
            && self
                .dimensions
                .iter()
                .zip(&candidate.values)
                .all(|(d, v)| d.contains(v))
    }
}
