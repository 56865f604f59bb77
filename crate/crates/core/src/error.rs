use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::model::ConfigViolation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// One or more configuration invariants failed; every violation is listed.
    InvalidConfig(Vec<ConfigViolation>),
    /// A cost family was constructed with parameters that break strict
    /// convexity or monotonicity.
    InvalidCost(String),
    /// Allocation vectors must be componentwise non-negative.
    NegativeAllocation {
        index: usize,
        value: f64,
    },
    DimensionMismatch {
        expected: usize,
        found: usize,
    },
    /// A back-off pattern entry is neither `beta` nor `1`.
    InvalidPattern {
        index: usize,
        value: f64,
    },
    /// Multiplicative factor outside the open unit interval.
    BetaOutOfRange(f64),
    NonFiniteGradient {
        agent: usize,
        resource: usize,
    },
    /// Advancing the additive-increase phase would push a resource past capacity.
    Overshoot {
        resource: usize,
        total: f64,
        capacity: f64,
    },
    /// A chain state is not strictly interior or does not sum to capacity.
    InvalidState(String),
    /// `z` and `w` coincide (after projection onto the zero-sum subspace).
    ZeroDifference,
    /// Projected gradient did not reach the tolerance; carries the last iterate.
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Vec<Vec<f64>>,
    },
    /// Allocation does not satisfy the capacity equality constraints.
    Infeasible {
        resource: usize,
        total: f64,
        capacity: f64,
    },
    /// Brute-force search requested on an instance that is too large.
    TooLarge(String),
    InvalidArgument(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(violations) => {
                write!(f, "invalid configuration:")?;
                for v in violations {
                    write!(f, "\n  {v}")?;
                }
                Ok(())
            }
            Error::InvalidCost(msg) => write!(f, "invalid cost function: {msg}"),
            Error::NegativeAllocation { index, value } => {
                write!(f, "allocation component {index} is negative ({value})")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidPattern { index, value } => {
                write!(f, "pattern entry {index} = {value} is neither beta nor 1")
            }
            Error::BetaOutOfRange(beta) => write!(f, "beta {beta} out of (0,1)"),
            Error::NonFiniteGradient { agent, resource } => {
                write!(f, "non-finite gradient for agent {agent}, resource {resource}")
            }
            Error::Overshoot { resource, total, capacity } => {
                write!(f, "additive increase overshoots resource {resource}: {total} > {capacity}")
            }
            Error::InvalidState(msg) => write!(f, "invalid chain state: {msg}"),
            Error::ZeroDifference => write!(f, "z and w coincide on the zero-sum subspace"),
            Error::NotConverged { iterations, residual, .. } => {
                write!(f, "projected gradient did not converge after {iterations} iterations (residual {residual:e})")
            }
            Error::Infeasible { resource, total, capacity } => {
                write!(f, "allocation of resource {resource} sums to {total}, capacity is {capacity}")
            }
            Error::TooLarge(msg) => write!(f, "instance too large: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
