use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::Matrix;
use crate::error::{Error, Result};

/// Which agents back off at one capacity event (`true` = multiply by `β`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BackoffPattern(Vec<bool>);

impl BackoffPattern {
    pub fn new(backs_off: Vec<bool>) -> Self {
        Self(backs_off)
    }

    /// Every agent backs off.
    pub fn full(n: usize) -> Self {
        Self(vec![true; n])
    }

    /// No agent backs off.
    pub fn none(n: usize) -> Self {
        Self(vec![false; n])
    }

    /// Reads a pattern of multiplicative factors, each of which must be exactly
    /// `beta` or `1`.
    pub fn from_factors(factors: &[f64], beta: f64) -> Result<Self> {
        factors
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                if value == beta {
                    Ok(true)
                } else if value == 1.0 {
                    Ok(false)
                } else {
                    Err(Error::InvalidPattern { index, value })
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    /// Pattern number `index` in `0..2^n`, bit `i` set meaning agent `i` backs off.
    pub fn from_index(n: usize, index: u64) -> Self {
        Self((0..n).map(|i| index >> i & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn backs_off(&self, agent: usize) -> bool {
        self.0[agent]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(|&b| b)
    }

    pub fn is_none(&self) -> bool {
        self.0.iter().all(|&b| !b)
    }

    pub fn factors(&self, beta: f64) -> Vec<f64> {
        self.0.iter().map(|&b| if b { beta } else { 1.0 }).collect()
    }

    /// Applies the pattern's AIMD matrix to `x` without forming it:
    /// `diag(β̃) x + e (Σ_i (1 - β̃_i) x_i) / n`.
    pub fn apply(&self, beta: f64, x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let released: f64 = self.0.iter().zip(x).map(|(&b, &x)| if b { (1.0 - beta) * x } else { 0.0 }).sum();
        let share = released / n;
        self.0.iter().zip(x).map(|(&b, &x)| if b { beta * x + share } else { x + share }).collect()
    }
}

/// `A = diag(β̃) + (1/n) e (eᵀ - β̃ᵀ)` for one back-off pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct AimdMatrix {
    beta: f64,
    pattern: BackoffPattern,
    matrix: Matrix,
}

impl AimdMatrix {
    pub fn new(pattern: BackoffPattern, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::BetaOutOfRange(beta));
        }
        let n = pattern.len();
        if n == 0 {
            return Err(Error::InvalidArgument("AIMD matrix needs at least one agent".into()));
        }
        let factors = pattern.factors(beta);
        let mut matrix = Matrix::zeros(n, n);
        for col in 0..n {
            let spread = (1.0 - factors[col]) / n as f64;
            for row in 0..n {
                matrix[(row, col)] = spread;
            }
            matrix[(col, col)] += factors[col];
        }
        Ok(Self { beta, pattern, matrix })
    }

    pub fn n(&self) -> usize {
        self.pattern.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn pattern(&self) -> &BackoffPattern {
        &self.pattern
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn is_full_backoff(&self) -> bool {
        self.pattern.is_full()
    }
}

/// Builds the AIMD matrix from a vector of multiplicative factors in `{β, 1}`.
pub fn build_aimd_matrix(factors: &[f64], beta: f64) -> Result<AimdMatrix> {
    AimdMatrix::new(BackoffPattern::from_factors(factors, beta)?, beta)
}

/// The matrix `B` in which every agent backs off; all its entries are positive.
pub fn full_backoff_matrix(beta: f64, n: usize) -> Result<AimdMatrix> {
    AimdMatrix::new(BackoffPattern::full(n), beta)
}

/// Probability of drawing `pattern` when agent `i` backs off independently
/// with probability `lambda[i]`.
pub fn matrix_probability(pattern: &BackoffPattern, lambda: &[f64]) -> f64 {
    pattern.as_slice().iter().zip(lambda).map(|(&b, &l)| if b { l } else { 1.0 - l }).product()
}

/// Independent Bernoulli draw per agent: agent `i` backs off iff `u_i < λ_i`.
/// Consumes exactly one uniform per agent, in agent order.
pub fn sample_pattern<R: RngCore + ?Sized>(lambda: &[f64], rng: &mut R) -> BackoffPattern {
    BackoffPattern(lambda.iter().map(|&l| rng.random::<f64>() < l).collect())
}
