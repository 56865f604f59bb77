use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use crate::error::{Error, Result};

/// A private agent cost `f_i : R^m_+ -> R_+`.
///
/// Implementations must be continuously differentiable, strictly convex and
/// strictly increasing in every coordinate on the open positive orthant, and
/// provide the gradient in closed form.
pub trait AgentCost: Debug + Send + Sync {
    /// Number of resources `m` the function is defined over.
    fn dim(&self) -> usize;

    /// Cost at `x`; `x` is assumed componentwise non-negative and of length `dim()`.
    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇f(x)` into `out`.
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);

    /// Partial derivative along resource `j`.
    fn partial(&self, x: &[f64], j: usize) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        g[j]
    }

    /// Diagonal of the Hessian, when available in closed form.
    fn hessian_diagonal(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Whether `f` is a sum of one-dimensional terms, so `∂_j f` depends on `x^j` only.
    fn is_separable(&self) -> bool {
        false
    }
}

/// `f(x) = Σ_j c_j (x^j)² / 2 + b_j x^j` with `c_j > 0`, `b_j ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    c: Vec<f64>,
    b: Vec<f64>,
}

impl Quadratic {
    pub fn new(c: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if c.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: c.len(), found: b.len() });
        }
        if c.is_empty() {
            return Err(Error::InvalidCost("quadratic cost needs at least one resource".into()));
        }
        if let Some(j) = c.iter().position(|&c| !(c.is_finite() && c > 0.0)) {
            return Err(Error::InvalidCost(format!(
                "quadratic curvature c[{j}] = {} must be > 0 (strict convexity)",
                c[j]
            )));
        }
        if let Some(j) = b.iter().position(|&b| !(b.is_finite() && b >= 0.0)) {
            return Err(Error::InvalidCost(format!(
                "quadratic linear term b[{j}] = {} must be ≥ 0 (monotonicity)",
                b[j]
            )));
        }
        Ok(Self { c, b })
    }

    pub fn curvature(&self) -> &[f64] {
        &self.c
    }

    pub fn linear(&self) -> &[f64] {
        &self.b
    }
}

impl AgentCost for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.c.iter().zip(&self.b)).map(|(&x, (&c, &b))| 0.5 * c * x * x + b * x).sum()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, (&x, (&c, &b))) in out.iter_mut().zip(x.iter().zip(self.c.iter().zip(&self.b))) {
            *o = c * x + b;
        }
    }

    fn partial(&self, x: &[f64], j: usize) -> f64 {
        self.c[j] * x[j] + self.b[j]
    }

    fn hessian_diagonal(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(self.c.clone())
    }

    fn is_separable(&self) -> bool {
        true
    }
}

/// `f(x) = Σ_j a_j exp(d_j x^j)` with `a_j, d_j > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Exponential {
    a: Vec<f64>,
    d: Vec<f64>,
}

impl Exponential {
    pub fn new(a: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if a.len() != d.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), found: d.len() });
        }
        if a.is_empty() {
            return Err(Error::InvalidCost("exponential cost needs at least one resource".into()));
        }
        for (name, params) in [("a", &a), ("d", &d)] {
            if let Some(j) = params.iter().position(|&p| !(p.is_finite() && p > 0.0)) {
                return Err(Error::InvalidCost(format!(
                    "exponential parameter {name}[{j}] = {} must be > 0",
                    params[j]
                )));
            }
        }
        Ok(Self { a, d })
    }
}

impl AgentCost for Exponential {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.a.iter().zip(&self.d)).map(|(&x, (&a, &d))| a * libm::exp(d * x)).sum()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, (&x, (&a, &d))) in out.iter_mut().zip(x.iter().zip(self.a.iter().zip(&self.d))) {
            *o = a * d * libm::exp(d * x);
        }
    }

    fn partial(&self, x: &[f64], j: usize) -> f64 {
        self.a[j] * self.d[j] * libm::exp(self.d[j] * x[j])
    }

    fn hessian_diagonal(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.iter().zip(self.a.iter().zip(&self.d)).map(|(&x, (&a, &d))| a * d * d * libm::exp(d * x)).collect())
    }

    fn is_separable(&self) -> bool {
        true
    }
}

/// The cost functions of all `n` agents over `m` resources.
#[derive(Debug, Clone)]
pub struct CostModel {
    agents: Vec<Arc<dyn AgentCost>>,
    resources: usize,
}

impl CostModel {
    pub fn new(agents: Vec<Arc<dyn AgentCost>>) -> Result<Self> {
        let resources = agents
            .first()
            .map(|a| a.dim())
            .ok_or_else(|| Error::InvalidCost("cost model needs at least one agent".into()))?;
        if let Some(bad) = agents.iter().find(|a| a.dim() != resources) {
            return Err(Error::DimensionMismatch { expected: resources, found: bad.dim() });
        }
        Ok(Self { agents, resources })
    }

    /// Every agent gets a clone of the same function.
    pub fn identical(n: usize, cost: impl AgentCost + Clone + 'static) -> Result<Self> {
        Self::new((0..n).map(|_| Arc::new(cost.clone()) as Arc<dyn AgentCost>).collect())
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn resource_count(&self) -> usize {
        self.resources
    }

    pub fn agent(&self, i: usize) -> &dyn AgentCost {
        self.agents[i].as_ref()
    }

    pub fn is_separable(&self) -> bool {
        self.agents.iter().all(|a| a.is_separable())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.resources {
            return Err(Error::DimensionMismatch { expected: self.resources, found: x.len() });
        }
        match x.iter().position(|&v| v < 0.0 || v.is_nan()) {
            Some(index) => Err(Error::NegativeAllocation { index, value: x[index] }),
            None => Ok(()),
        }
    }

    pub fn eval_cost(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self.agents[i].value(x))
    }

    pub fn eval_gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut g = vec![0.0; self.resources];
        self.agents[i].gradient_into(x, &mut g);
        Ok(g)
    }

    /// Social cost `Σ_i f_i(y_i)` for an allocation indexed `[agent][resource]`.
    pub fn social_cost(&self, y: &[Vec<f64>]) -> Result<f64> {
        if y.len() != self.agents.len() {
            return Err(Error::DimensionMismatch { expected: self.agents.len(), found: y.len() });
        }
        y.iter().enumerate().map(|(i, yi)| self.eval_cost(i, yi)).sum()
    }
}

/// Largest deviation between the analytic gradient and a central difference
/// with step `h` at `x`.
pub fn check_gradient(f: &dyn AgentCost, x: &[f64], h: f64) -> f64 {
    let mut analytic = vec![0.0; f.dim()];
    f.gradient_into(x, &mut analytic);
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for j in 0..f.dim() {
        probe[j] = x[j] + h;
        let up = f.value(&probe);
        probe[j] = x[j] - h;
        let down = f.value(&probe);
        probe[j] = x[j];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((analytic[j] - numeric).abs());
    }
    worst
}
