use std::fmt;

use serde::Serialize;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("distance undefined: {0}")]
    DistanceUndefined(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("infeasible problem: {0}")]
    Infeasible(InfeasibilityReport),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("rank deficient: found {found} of {requested} requested indices before the residual vanished")]
    RankDeficient { found: usize, requested: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl fmt::Display, actual: impl fmt::Display) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn infeasible(issue: Issue) -> Self {
        Error::Infeasible(InfeasibilityReport { issues: vec![issue] })
    }
}

/// One reason a dictionary/constraint problem cannot be solved.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    NoDictionaries,
    EmptyDictionary { dictionary: String },
    BandMismatch { dictionary: String, expected: usize, actual: usize },
    CountExceedsAtoms { dictionary: String, count: usize, atoms: usize },
    ExactSumMismatch { sum: usize, rank: usize },
    ExactSumExceedsRank { sum: usize, rank: usize },
    LowerBoundsExceedRank { sum: usize, rank: usize },
    CapacityBelowRank { capacity: usize, rank: usize },
    ConstraintCountMismatch { dictionaries: usize, constraints: usize },
    UnnormalizedConstraint { dictionary: String },
    TooManyColumns { dictionary: String, assigned: usize, atoms: usize },
    ZeroRank,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NoDictionaries => write!(f, "no dictionaries given"),
            Issue::EmptyDictionary { dictionary } => write!(f, "dictionary `{dictionary}` has no atoms"),
            Issue::BandMismatch { dictionary, expected, actual } => {
                write!(f, "dictionary `{dictionary}` has {actual} bands, expected {expected}")
            }
            Issue::CountExceedsAtoms { dictionary, count, atoms } => {
                write!(f, "dictionary `{dictionary}` must supply {count} atoms but has only {atoms}")
            }
            Issue::ExactSumMismatch { sum, rank } => {
                write!(f, "exact counts sum to {sum} but rank is {rank} and no slack constraint exists")
            }
            Issue::ExactSumExceedsRank { sum, rank } => write!(f, "exact counts sum to {sum}, exceeding rank {rank}"),
            Issue::LowerBoundsExceedRank { sum, rank } => {
                write!(f, "lower bounds sum to {sum}, exceeding rank {rank}")
            }
            Issue::CapacityBelowRank { capacity, rank } => {
                write!(f, "constraints allow at most {capacity} atoms but rank is {rank}")
            }
            Issue::ConstraintCountMismatch { dictionaries, constraints } => {
                write!(f, "{dictionaries} dictionaries but {constraints} constraints")
            }
            Issue::UnnormalizedConstraint { dictionary } => {
                write!(f, "dictionary `{dictionary}` carries an at-least constraint; normalize first")
            }
            Issue::TooManyColumns { dictionary, assigned, atoms } => {
                write!(f, "dictionary `{dictionary}` assigned {assigned} columns but has {atoms} atoms")
            }
            Issue::ZeroRank => write!(f, "rank must be at least 1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibilityReport {
    pub issues: Vec<Issue>,
}

impl fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}
