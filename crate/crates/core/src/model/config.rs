use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use crate::error::{Error, Result};

/// Which running mean feeds the drop probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AverageMode {
    /// Mean over every capacity event of the resource so far.
    Cumulative,
    /// Mean over the last `window` capacity events (all of them while fewer exist).
    #[default]
    Windowed,
}

/// Normalization factor of a resource: either fixed or derived from the costs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Gamma {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceParams {
    pub capacity: f64,
    /// Additive increase rate (units per second, per agent).
    pub alpha: f64,
    /// Multiplicative decrease factor, strictly inside (0, 1).
    pub beta: f64,
    pub gamma: Gamma,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ResourceParams {
    pub fn new(capacity: f64, alpha: f64, beta: f64) -> Self {
        Self { capacity, alpha, beta, gamma: Gamma::Auto, lambda_min: 0.05, lambda_max: 0.95 }
    }

    pub fn with_gamma(mut self, gamma: Gamma) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_lambda_bounds(mut self, lambda_min: f64, lambda_max: f64) -> Self {
        self.lambda_min = lambda_min;
        self.lambda_max = lambda_max;
        self
    }

    /// Time between a capacity event at which every agent backs off and the
    /// next capacity event of the same resource: `(1 - β) C / (n α)`.
    pub fn psi(&self, agents: usize) -> f64 {
        (1.0 - self.beta) * self.capacity / (agents as f64 * self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of agents `n`.
    pub agents: usize,
    /// One entry per resource; `m = resources.len()`.
    pub resources: Vec<ResourceParams>,
    /// Averaging window `T` (in capacity events).
    pub window: usize,
    pub average_mode: AverageMode,
    pub seed: u64,
    /// Initial allocations indexed `[resource][agent]`; `None` selects the
    /// interior default `C^j / (2n)`.
    pub initial: Option<Vec<Vec<f64>>>,
}

impl SystemConfig {
    pub fn new(agents: usize, resources: Vec<ResourceParams>, window: usize) -> Self {
        Self { agents, resources, window, average_mode: AverageMode::default(), seed: 0, initial: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_average_mode(mut self, mode: AverageMode) -> Self {
        self.average_mode = mode;
        self
    }

    pub fn with_initial(mut self, initial: Vec<Vec<f64>>) -> Self {
        self.initial = Some(initial);
        self
    }

    pub fn resource_count(&self) -> usize {
        self.resources.len()
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(self) -> Result<ValidConfig> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(ValidConfig(self))
        } else {
            Err(Error::InvalidConfig(violations))
        }
    }

    pub fn violations(&self) -> Vec<ConfigViolation> {
        let mut out = Vec::new();
        if self.agents < 1 {
            out.push(ConfigViolation::new("agents", "agent count must be ≥ 1"));
        }
        if self.resources.is_empty() {
            out.push(ConfigViolation::new("resources", "resource count must be ≥ 1"));
        }
        if self.window < 1 {
            out.push(ConfigViolation::new("window", "window must be ≥ 1"));
        }
        for (j, r) in self.resources.iter().enumerate() {
            let field = |name: &str| format!("resources[{j}].{name}");
            if !(r.capacity.is_finite() && r.capacity > 0.0) {
                out.push(ConfigViolation::new(field("capacity"), "capacity must be > 0"));
            }
            if !(r.alpha.is_finite() && r.alpha > 0.0) {
                out.push(ConfigViolation::new(field("alpha"), "alpha must be > 0"));
            }
            if !(r.beta > 0.0 && r.beta < 1.0) {
                out.push(ConfigViolation::new(field("beta"), "beta out of (0,1)"));
            }
            if let Gamma::Fixed(g) = r.gamma {
                if !(g.is_finite() && g > 0.0) {
                    out.push(ConfigViolation::new(field("gamma"), "gamma must be > 0"));
                }
            }
            if !(r.lambda_min > 0.0 && r.lambda_min <= r.lambda_max && r.lambda_max < 1.0) {
                out.push(ConfigViolation::new(
                    field("lambda"),
                    "lambda bounds must satisfy 0 < lambda_min ≤ lambda_max < 1",
                ));
            }
        }
        if let Some(initial) = &self.initial {
            if initial.len() != self.resources.len() {
                out.push(ConfigViolation::new(
                    "initial",
                    format!("expected {} resource rows, found {}", self.resources.len(), initial.len()),
                ));
            } else {
                for (j, (row, r)) in initial.iter().zip(&self.resources).enumerate() {
                    if row.len() != self.agents {
                        out.push(ConfigViolation::new(
                            format!("initial[{j}]"),
                            format!("expected {} agents, found {}", self.agents, row.len()),
                        ));
                        continue;
                    }
                    if row.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                        out.push(ConfigViolation::new(
                            format!("initial[{j}]"),
                            "initial allocations must be strictly positive",
                        ));
                    }
                    let total: f64 = row.iter().sum();
                    if total > r.capacity {
                        out.push(ConfigViolation::new(
                            format!("initial[{j}]"),
                            format!("initial allocations sum to {total}, above capacity {}", r.capacity),
                        ));
                    }
                }
            }
        }
        out
    }
}

/// A [`SystemConfig`] that passed [`SystemConfig::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidConfig(SystemConfig);

impl ValidConfig {
    pub fn into_inner(self) -> SystemConfig {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0.agents
    }

    pub fn m(&self) -> usize {
        self.0.resources.len()
    }

    pub fn window(&self) -> usize {
        self.0.window
    }

    /// Initial allocations `[resource][agent]`, falling back to `C^j / (2n)`.
    pub fn initial_allocations(&self) -> Vec<Vec<f64>> {
        match &self.0.initial {
            Some(init) => init.clone(),
            None => self.0.resources.iter().map(|r| vec![r.capacity / (2.0 * self.n() as f64); self.n()]).collect(),
        }
    }
}

impl Deref for ValidConfig {
    type Target = SystemConfig;

    fn deref(&self) -> &SystemConfig {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation {
    pub field: String,
    pub message: String,
}

impl ConfigViolation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(beta: f64) -> SystemConfig {
        SystemConfig::new(2, vec![ResourceParams::new(1.0, 0.1, beta)], 1)
    }

    fn messages(cfg: SystemConfig) -> Vec<String> {
        match cfg.validate() {
            Err(Error::InvalidConfig(v)) => v.into_iter().map(|v| v.message).collect(),
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn accepts_reference_config() {
        let cfg = single(0.5).validate().unwrap();
        assert_eq!((cfg.n(), cfg.m(), cfg.window()), (2, 1, 1));
        assert_eq!(cfg.initial_allocations(), vec![vec![0.25, 0.25]]);
    }

    #[test]
    fn rejects_beta_above_one() {
        assert_eq!(messages(single(1.2)), vec!["beta out of (0,1)"]);
    }

    #[test]
    fn rejects_zero_window() {
        let mut cfg = single(0.5);
        cfg.window = 0;
        assert_eq!(messages(cfg), vec!["window must be ≥ 1"]);
    }

    #[test]
    fn reports_every_violation_with_field() {
        let mut cfg = SystemConfig::new(0, vec![ResourceParams::new(-1.0, 0.0, 1.0).with_lambda_bounds(0.5, 0.2)], 0);
        cfg.resources[0].gamma = Gamma::Fixed(-3.0);
        let violations = cfg.violations();
        let fields: Vec<&str> = violations.iter().map(|v| v.field.as_str()).collect();
        assert_eq!(
            fields,
            vec![
                "agents",
                "window",
                "resources[0].capacity",
                "resources[0].alpha",
                "resources[0].beta",
                "resources[0].gamma",
                "resources[0].lambda",
            ]
        );
    }

    #[test]
    fn rejects_bad_initial_allocations() {
        let cfg = single(0.5).with_initial(vec![vec![0.0, 2.0]]);
        let msgs = messages(cfg);
        assert_eq!(msgs.len(), 2);
        assert!(msgs[0].contains("strictly positive"));
        assert!(msgs[1].contains("above capacity"));
    }

    #[test]
    fn psi_closed_form() {
        let r = ResourceParams::new(1.0, 0.1, 0.5);
        assert!((r.psi(2) - 2.5).abs() < 1e-15);
        assert!((r.psi(4) - 1.25).abs() < 1e-15);
    }
}
