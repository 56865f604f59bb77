//! The utilitarian optimum: minimize `Σ_i f_i(y_i)` subject to
//! `Σ_i y_i^j = C^j`, `y ≥ 0`.
//!
//! Allocations here are indexed `[agent][resource]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::check_costs;
use crate::error::{Error, Result};
use crate::model::{CostModel, SystemConfig};

/// Entries above `ACTIVE_REL · C^j` count as active in the KKT check.
pub const ACTIVE_REL: f64 = 1e-7;

/// Largest grid the brute-force search will enumerate.
pub const MAX_GRID_POINTS: u128 = 20_000_000;

/// Euclidean projection of `v` onto `{y ≥ 0, Σ y = capacity}`.
pub fn project_capacity_simplex(v: &[f64], capacity: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - capacity) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn project_columns(y: &mut [Vec<f64>], cfg: &SystemConfig) {
    for (j, r) in cfg.resources.iter().enumerate() {
        let col: Vec<f64> = y.iter().map(|yi| yi[j]).collect();
        for (yi, p) in y.iter_mut().zip(project_capacity_simplex(&col, r.capacity)) {
            yi[j] = p;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalAllocation {
    /// `[agent][resource]`.
    pub y: Vec<Vec<f64>>,
    pub objective: f64,
    /// KKT residual per resource.
    pub kkt: Vec<f64>,
    pub iterations: usize,
    /// Final `‖y − P(y − ∇F(y))‖_∞` (grid width for brute force).
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Initial step length; adapted by backtracking.
    pub step: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { step: 1.0, tol: 1e-10, max_iters: 100_000 }
    }
}

fn gradients(costs: &CostModel, y: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    y.iter().enumerate().map(|(i, yi)| costs.eval_gradient(i, yi)).collect()
}

fn stationarity(y: &[Vec<f64>], g: &[Vec<f64>], cfg: &SystemConfig) -> f64 {
    let mut probe: Vec<Vec<f64>> =
        y.iter().zip(g).map(|(yi, gi)| yi.iter().zip(gi).map(|(a, b)| a - b).collect()).collect();
    project_columns(&mut probe, cfg);
    y.iter().zip(&probe).flat_map(|(a, b)| a.iter().zip(b).map(|(x, z)| (x - z).abs())).fold(0.0, f64::max)
}

/// Projected gradient descent with backtracking from `start` (equal split
/// when `None`). Every iterate is feasible and the objective never increases.
pub fn solve_optimal(
    cfg: &SystemConfig,
    costs: &CostModel,
    opts: SolverOptions,
    start: Option<Vec<Vec<f64>>>,
) -> Result<OptimalAllocation> {
    check_costs(cfg, costs)?;
    let n = cfg.agents;
    let mut y = match start {
        Some(s) => {
            if s.len() != n || s.iter().any(|r| r.len() != cfg.resources.len()) {
                return Err(Error::DimensionMismatch { expected: n, found: s.len() });
            }
            s
        }
        None => vec![cfg.resources.iter().map(|r| r.capacity / n as f64).collect(); n],
    };
    project_columns(&mut y, cfg);
    let mut f = costs.social_cost(&y)?;
    let mut step = opts.step;
    let mut residual = f64::INFINITY;
    for iter in 0..opts.max_iters {
        let g = gradients(costs, &y)?;
        residual = stationarity(&y, &g, cfg);
        if residual < opts.tol {
            return Ok(OptimalAllocation {
                kkt: kkt_residual(cfg, costs, &y)?,
                objective: f,
                y,
                iterations: iter,
                residual,
            });
        }
        loop {
            let mut cand: Vec<Vec<f64>> =
                y.iter().zip(&g).map(|(yi, gi)| yi.iter().zip(gi).map(|(a, b)| a - step * b).collect()).collect();
            project_columns(&mut cand, cfg);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((c, yi), gi) in cand.iter().zip(&y).zip(&g) {
                for ((a, b), d) in c.iter().zip(yi).zip(gi) {
                    lin += d * (a - b);
                    sq += (a - b) * (a - b);
                }
            }
            let fc = costs.social_cost(&cand)?;
            let accept = sq == 0.0
                || fc <= f + lin + sq / (2.0 * step)
                // Below the resolution of the objective, test the curvature
                // through the gradients instead.
                || ((f - fc).abs() <= 64.0 * f64::EPSILON * f.abs().max(1.0)
                    && gradient_change(costs, &cand, &g)? <= libm::sqrt(sq) / step);
            if accept {
                y = cand;
                f = fc;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(Error::NotConverged { iterations: iter, residual, last: y });
            }
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iters, residual, last: y })
}

/// `‖∇F(cand) − g‖₂`, compared against `‖cand − y‖₂ / step` to check the
/// local Lipschitz estimate `1/step`.
fn gradient_change(costs: &CostModel, cand: &[Vec<f64>], g: &[Vec<f64>]) -> Result<f64> {
    let gc = gradients(costs, cand)?;
    let mut sq = 0.0;
    for (a, b) in gc.iter().zip(g) {
        for (x, z) in a.iter().zip(b) {
            sq += (x - z) * (x - z);
        }
    }
    Ok(libm::sqrt(sq))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Per resource: the spread of marginal costs among active agents around
/// their median, plus how far any inactive agent's marginal cost falls below
/// that median.
pub fn kkt_residual(cfg: &SystemConfig, costs: &CostModel, y: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_costs(cfg, costs)?;
    if y.len() != cfg.agents {
        return Err(Error::DimensionMismatch { expected: cfg.agents, found: y.len() });
    }
    for (j, r) in cfg.resources.iter().enumerate() {
        let total: f64 = y.iter().map(|yi| yi[j]).sum();
        if (total - r.capacity).abs() > 1e-9 * r.capacity || y.iter().any(|yi| yi[j] < -1e-12) {
            return Err(Error::Infeasible { resource: j, total, capacity: r.capacity });
        }
    }
    let g = gradients(costs, &y.iter().map(|yi| yi.iter().map(|v| v.max(0.0)).collect()).collect::<Vec<_>>())?;
    let mut out = Vec::with_capacity(cfg.resources.len());
    for (j, r) in cfg.resources.iter().enumerate() {
        let threshold = ACTIVE_REL * r.capacity;
        let mut active: Vec<f64> = (0..cfg.agents).filter(|&i| y[i][j] > threshold).map(|i| g[i][j]).collect();
        let med = median(&mut active);
        let spread = active.iter().map(|v| (v - med).abs()).fold(0.0, f64::max);
        let violation =
            (0..cfg.agents).filter(|&i| y[i][j] <= threshold).map(|i| (med - g[i][j]).max(0.0)).fold(0.0, f64::max);
        out.push(spread + violation);
    }
    Ok(out)
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// All ways to split `units` grid steps among `parts` agents.
fn compositions(units: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![units]];
    }
    let mut out = Vec::new();
    for first in 0..=units {
        for mut rest in compositions(units - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Exhaustive minimization over the grid `y_i^j ∈ {0, h^j, 2h^j, …, C^j}`
/// with `h^j = C^j / (resolution − 1)`. Needs `n·m ≤ 6` and at most
/// [`MAX_GRID_POINTS`] feasible grid points.
pub fn brute_force_small(cfg: &SystemConfig, costs: &CostModel, resolution: usize) -> Result<OptimalAllocation> {
    check_costs(cfg, costs)?;
    let (n, m) = (cfg.agents, cfg.resources.len());
    if n * m > 6 {
        return Err(Error::TooLarge(alloc::format!("n·m = {} exceeds 6", n * m)));
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be ≥ 2".into()));
    }
    let units = resolution - 1;
    let per_resource = binomial((units + n - 1) as u128, (n - 1) as u128);
    let total = (0..m).try_fold(1u128, |acc, _| acc.checked_mul(per_resource));
    if total.is_none_or(|t| t > MAX_GRID_POINTS) {
        return Err(Error::TooLarge(alloc::format!(
            "{} grid points per resource over {m} resources exceeds {MAX_GRID_POINTS}",
            per_resource
        )));
    }
    let grid = compositions(units, n);
    let widths: Vec<f64> = cfg.resources.iter().map(|r| r.capacity / units as f64).collect();
    let mut odometer = vec![0usize; m];
    let mut y = vec![vec![0.0; m]; n];
    let mut best = f64::INFINITY;
    let mut best_y = y.clone();
    loop {
        for (j, &k) in odometer.iter().enumerate() {
            for (i, &u) in grid[k].iter().enumerate() {
                y[i][j] = if u == units { cfg.resources[j].capacity } else { u as f64 * widths[j] };
            }
        }
        let f = costs.social_cost(&y)?;
        if f < best {
            best = f;
            best_y.clone_from(&y);
        }
        let mut j = 0;
        loop {
            if j == m {
                return Ok(OptimalAllocation {
                    kkt: kkt_residual(cfg, costs, &best_y)?,
                    y: best_y,
                    objective: best,
                    iterations: total.unwrap_or(0) as usize,
                    residual: widths.iter().cloned().fold(0.0, f64::max),
                });
            }
            odometer[j] += 1;
            if odometer[j] < grid.len() {
                break;
            }
            odometer[j] = 0;
            j += 1;
        }
    }
}
