//! Event-driven simulator of the distributed protocol.
//!
//! Between capacity events every agent grows each of its allocations linearly
//! at rate `α^j`. When the aggregate demand for resource `j` reaches `C^j`,
//! the central agent broadcasts one bit and each agent independently
//! multiplies its allocation of `j` by `β^j` with a probability derived from
//! its own marginal cost at its running average allocation.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::matrix::{sample_pattern, BackoffPattern};
use crate::model::{AverageMode, CostModel, Gamma, ResourceParams, SystemConfig, ValidConfig};

/// Averages below `EPS_FLOOR_REL · C^j` are replaced by that value before
/// evaluating the drop probability.
pub const EPS_FLOOR_REL: f64 = 1e-9;

/// Relative slack of the overshoot check in [`ai_advance`].
const OVERSHOOT_TOL: f64 = 1e-9;

/// Probe points per resource used by [`compute_gamma`].
const GAMMA_PROBES: usize = 65;

/// How back-off probabilities are obtained at each event.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DropPolicy {
    /// `λ = Γ ∂_j f_i(x̄_i) / x̄_i^j`, clamped to the resource's bounds.
    #[default]
    CostDriven,
    /// Fixed probabilities indexed `[resource][agent]`, used as given.
    Constant(Vec<Vec<f64>>),
}

/// Live state of the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationState {
    pub time: f64,
    /// Allocations `[resource][agent]`.
    pub x: Vec<Vec<f64>>,
    /// Absolute time of the next capacity event of every resource.
    pub next_event: Vec<f64>,
    /// Capacity events seen so far per resource (`|K^j|`).
    pub event_count: Vec<usize>,
    /// Last `T` pre-event allocations per resource, oldest first.
    pub history: Vec<VecDeque<Vec<f64>>>,
    /// Sums of all pre-event allocations per resource.
    pub cumulative: Vec<Vec<f64>>,
    /// `∫ x dt` since time zero, per resource and agent.
    pub integral: Vec<Vec<f64>>,
}

impl AllocationState {
    /// State at `t = 0` with the configured (or default interior) allocations.
    pub fn new(cfg: &ValidConfig) -> Self {
        let n = cfg.n();
        let x = cfg.initial_allocations();
        let next_event = x.iter().zip(&cfg.resources).map(|(xj, r)| next_event_gap(xj, r, n)).collect();
        Self {
            time: 0.0,
            next_event,
            event_count: vec![0; cfg.m()],
            history: (0..cfg.m()).map(|_| VecDeque::with_capacity(cfg.window())).collect(),
            cumulative: vec![vec![0.0; n]; cfg.m()],
            integral: vec![vec![0.0; n]; cfg.m()],
            x,
        }
    }

    pub fn n(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn m(&self) -> usize {
        self.x.len()
    }

    /// Resource whose capacity event comes first; ties go to the lowest index.
    pub fn next_resource(&self) -> usize {
        let mut best = 0;
        for (j, &t) in self.next_event.iter().enumerate().skip(1) {
            if t < self.next_event[best] {
                best = j;
            }
        }
        best
    }

    /// Running average of agent `i` for every resource, as fed to the drop
    /// probability. A resource without events yet contributes the current
    /// allocation.
    pub fn averages(&self, i: usize, mode: AverageMode) -> Vec<f64> {
        (0..self.m())
            .map(|j| {
                if self.event_count[j] == 0 {
                    return self.x[j][i];
                }
                match mode {
                    AverageMode::Cumulative => self.cumulative[j][i] / self.event_count[j] as f64,
                    AverageMode::Windowed => {
                        let h = &self.history[j];
                        h.iter().map(|v| v[i]).sum::<f64>() / h.len() as f64
                    }
                }
            })
            .collect()
    }
}

/// Time until `Σ_i x_i` reaches `C` when every agent grows at rate `α`:
/// `(C − Σ_i x_i) / (n α)`, never negative.
pub fn next_event_gap(x: &[f64], params: &ResourceParams, n: usize) -> f64 {
    let total: f64 = x.iter().sum();
    ((params.capacity - total) / (n as f64 * params.alpha)).max(0.0)
}

/// Gap after a back-off. All-keep patterns leave the resource at capacity, so
/// the event recurs immediately and the gap is exactly zero.
pub fn backoff_gap(post: &[f64], pattern: &BackoffPattern, params: &ResourceParams) -> f64 {
    if pattern.is_none() {
        0.0
    } else {
        next_event_gap(post, params, post.len())
    }
}

/// `(1 − β) C / (n α)`: the gap that follows a full back-off.
pub fn compute_psi(cfg: &SystemConfig, j: usize) -> f64 {
    cfg.resources[j].psi(cfg.agents)
}

/// Additive increase of every allocation up to `to_time`.
pub fn ai_advance(state: &mut AllocationState, to_time: f64, resources: &[ResourceParams]) -> Result<()> {
    let dt = to_time - state.time;
    if dt < 0.0 {
        return Err(Error::InvalidArgument("cannot advance backwards in time".into()));
    }
    let n = state.n() as f64;
    for (j, (xj, r)) in state.x.iter().zip(resources).enumerate() {
        let total = xj.iter().sum::<f64>() + n * r.alpha * dt;
        if total > r.capacity * (1.0 + OVERSHOOT_TOL) {
            return Err(Error::Overshoot { resource: j, total, capacity: r.capacity });
        }
    }
    for ((xj, acc), r) in state.x.iter_mut().zip(&mut state.integral).zip(resources) {
        let step = r.alpha * dt;
        for (v, a) in xj.iter_mut().zip(acc.iter_mut()) {
            *a += (*v + 0.5 * step) * dt;
            *v += step;
        }
    }
    state.time = to_time;
    Ok(())
}

/// Outcome of one drop-probability evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropProbability {
    pub value: f64,
    /// Value before clamping.
    pub raw: f64,
    pub clamped: bool,
    /// Some average was below the floor and was replaced.
    pub floored: bool,
}

/// Drop probability of agent `i` at a capacity event of resource `j`,
/// evaluated at the agent's running averages `averages` (one per resource).
pub fn drop_probability(
    costs: &CostModel,
    resources: &[ResourceParams],
    i: usize,
    j: usize,
    averages: &[f64],
    gamma: f64,
) -> Result<DropProbability> {
    let mut floored = false;
    let point: Vec<f64> = averages
        .iter()
        .zip(resources)
        .map(|(&a, r)| {
            let floor = EPS_FLOOR_REL * r.capacity;
            if a < floor {
                floored = true;
                floor
            } else {
                a
            }
        })
        .collect();
    let grad = costs.agent(i).partial(&point, j);
    if !grad.is_finite() {
        return Err(Error::NonFiniteGradient { agent: i, resource: j });
    }
    let raw = gamma * grad / point[j];
    let r = &resources[j];
    let value = raw.clamp(r.lambda_min, r.lambda_max);
    Ok(DropProbability { value, raw, clamped: value != raw, floored })
}

/// Normalization factor of every resource. `Auto` resolves to
/// `λ_max · min x̄^j / ∂_j f_i(x̄)` over all agents and a probe grid on which
/// every coordinate is `s C^{j'} / n`, `s ∈ [1/4, 1]`, so the raw probability
/// never exceeds `λ_max` on that range.
pub fn compute_gamma(cfg: &SystemConfig, costs: &CostModel) -> Result<Vec<f64>> {
    check_costs(cfg, costs)?;
    let n = cfg.agents as f64;
    let mut out = Vec::with_capacity(cfg.resources.len());
    for (j, r) in cfg.resources.iter().enumerate() {
        let gamma = match r.gamma {
            Gamma::Fixed(g) => g,
            Gamma::Auto => {
                let mut best = f64::INFINITY;
                let mut point = vec![0.0; cfg.resources.len()];
                for p in 0..GAMMA_PROBES {
                    let s = 0.25 + 0.75 * p as f64 / (GAMMA_PROBES - 1) as f64;
                    for (v, rr) in point.iter_mut().zip(&cfg.resources) {
                        *v = s * rr.capacity / n;
                    }
                    for i in 0..cfg.agents {
                        let g = costs.agent(i).partial(&point, j);
                        if !(g.is_finite() && g > 0.0) {
                            return Err(Error::NonFiniteGradient { agent: i, resource: j });
                        }
                        best = best.min(point[j] / g);
                    }
                }
                r.lambda_max * best
            }
        };
        out.push(gamma);
    }
    Ok(out)
}

pub(crate) fn check_costs(cfg: &SystemConfig, costs: &CostModel) -> Result<()> {
    if costs.agent_count() != cfg.agents {
        return Err(Error::DimensionMismatch { expected: cfg.agents, found: costs.agent_count() });
    }
    if costs.resource_count() != cfg.resources.len() {
        return Err(Error::DimensionMismatch { expected: cfg.resources.len(), found: costs.resource_count() });
    }
    Ok(())
}

/// Draws the back-off pattern for resource `j` and applies it to the
/// allocations of that resource only.
pub fn md_backoff<R: RngCore + ?Sized>(
    state: &mut AllocationState,
    j: usize,
    lambda: &[f64],
    beta: f64,
    rng: &mut R,
) -> BackoffPattern {
    let pattern = sample_pattern(lambda, rng);
    for (v, &b) in state.x[j].iter_mut().zip(pattern.as_slice()) {
        if b {
            *v *= beta;
        }
    }
    pattern
}

/// Records the current allocation of `j` as a new sample and returns the
/// resulting average of every agent for that resource.
pub fn update_averages(state: &mut AllocationState, j: usize, mode: AverageMode, window: usize) -> Vec<f64> {
    let sample = state.x[j].clone();
    for (c, v) in state.cumulative[j].iter_mut().zip(&sample) {
        *c += v;
    }
    let h = &mut state.history[j];
    if h.len() == window {
        h.pop_front();
    }
    h.push_back(sample);
    state.event_count[j] += 1;
    let n = state.x[j].len();
    (0..n)
        .map(|i| match mode {
            AverageMode::Cumulative => state.cumulative[j][i] / state.event_count[j] as f64,
            AverageMode::Windowed => h.iter().map(|v| v[i]).sum::<f64>() / h.len() as f64,
        })
        .collect()
}

/// Mean of all samples.
pub fn cumulative_mean(samples: &[f64]) -> f64 {
    crate::mean(samples)
}

/// Mean of the last `min(window, len)` samples.
pub fn windowed_mean(samples: &[f64], window: usize) -> f64 {
    crate::mean(&samples[samples.len().saturating_sub(window)..])
}

/// One capacity event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    /// Position in the merged event sequence `K`.
    pub index: usize,
    pub resource: usize,
    /// Position within `K^j`.
    pub resource_event: usize,
    pub time: f64,
    /// Allocations of the resource just before the back-off (sum to `C^j`).
    pub pre: Vec<f64>,
    pub lambda: Vec<f64>,
    pub backoff: BackoffPattern,
    /// Allocations right after the back-off.
    pub post: Vec<f64>,
    /// Time until the next capacity event of the same resource.
    pub gap: f64,
}

impl EventRecord {
    /// Multiplicative factor applied to agent `i`.
    pub fn factor(&self, i: usize, beta: f64) -> f64 {
        if self.backoff.backs_off(i) {
            beta
        } else {
            1.0
        }
    }
}

/// Ordered capacity events of a run together with summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub n: usize,
    pub m: usize,
    pub records: Vec<EventRecord>,
    pub gamma: Vec<f64>,
    /// Probabilities clamped into `[λ_min, λ_max]`, per resource.
    pub clamp_count: Vec<usize>,
    /// Averages replaced by the floor, per resource.
    pub floor_count: Vec<usize>,
    /// `|K^j|` per resource.
    pub event_count: Vec<usize>,
    /// Mean pre-event allocation `[resource][agent]` (NaN without events).
    pub event_mean: Vec<Vec<f64>>,
    /// Time-averaged allocation `[resource][agent]` over `[0, end_time]`.
    pub time_mean: Vec<Vec<f64>>,
    pub end_time: f64,
}

impl EventTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Indices into `records` of the events of resource `j` (`K^j`).
    pub fn resource_events(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().filter(move |r| r.resource == j).map(|r| r.index)
    }

    /// Event times of the merged sequence `K`.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.time)
    }

    /// Mean pre-event allocation indexed `[agent][resource]`.
    pub fn agent_means(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.m).map(|j| self.event_mean[j][i]).collect()).collect()
    }
}

/// Stepwise simulator owning its state and generator.
#[derive(Debug, Clone)]
pub struct Simulator<R> {
    cfg: ValidConfig,
    costs: CostModel,
    policy: DropPolicy,
    gamma: Vec<f64>,
    state: AllocationState,
    rng: R,
    events: usize,
    clamp_count: Vec<usize>,
    floor_count: Vec<usize>,
}

impl<R: RngCore> Simulator<R> {
    pub fn new(cfg: ValidConfig, costs: CostModel, rng: R) -> Result<Self> {
        Self::with_policy(cfg, costs, DropPolicy::CostDriven, rng)
    }

    pub fn with_policy(cfg: ValidConfig, costs: CostModel, policy: DropPolicy, rng: R) -> Result<Self> {
        let gamma = compute_gamma(&cfg, &costs)?;
        if let DropPolicy::Constant(l) = &policy {
            let ok = l.len() == cfg.m()
                && l.iter().all(|row| row.len() == cfg.n() && row.iter().all(|p| (0.0..=1.0).contains(p)));
            if !ok {
                return Err(Error::InvalidArgument(
                    "constant drop probabilities must be an m × n table of values in [0, 1]".into(),
                ));
            }
        }
        let state = AllocationState::new(&cfg);
        let m = cfg.m();
        Ok(Self { cfg, costs, policy, gamma, state, rng, events: 0, clamp_count: vec![0; m], floor_count: vec![0; m] })
    }

    pub fn state(&self) -> &AllocationState {
        &self.state
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn config(&self) -> &ValidConfig {
        &self.cfg
    }

    /// Advances to the next capacity event and processes it.
    pub fn step(&mut self) -> Result<EventRecord> {
        let cfg = &self.cfg;
        let j = self.state.next_resource();
        let params = &cfg.resources[j];
        let at = self.state.next_event[j];
        ai_advance(&mut self.state, at, &cfg.resources)?;
        let pre = self.state.x[j].clone();
        update_averages(&mut self.state, j, cfg.average_mode, cfg.window);
        let lambda = match &self.policy {
            DropPolicy::Constant(l) => l[j].clone(),
            DropPolicy::CostDriven => {
                let mut out = Vec::with_capacity(cfg.n());
                for i in 0..cfg.n() {
                    let avg = self.state.averages(i, cfg.average_mode);
                    let p = drop_probability(&self.costs, &cfg.resources, i, j, &avg, self.gamma[j])?;
                    self.clamp_count[j] += p.clamped as usize;
                    self.floor_count[j] += p.floored as usize;
                    out.push(p.value);
                }
                out
            }
        };
        let backoff = md_backoff(&mut self.state, j, &lambda, params.beta, &mut self.rng);
        let post = self.state.x[j].clone();
        let gap = backoff_gap(&post, &backoff, params);
        let time = self.state.time;
        self.state.next_event[j] = time + gap;
        let record = EventRecord {
            index: self.events,
            resource: j,
            resource_event: self.state.event_count[j] - 1,
            time,
            pre,
            lambda,
            backoff,
            post,
            gap,
        };
        self.events += 1;
        Ok(record)
    }

    /// Runs `events` further events and collects them into a trace.
    pub fn run(mut self, events: usize) -> Result<EventTrace> {
        let mut records = Vec::with_capacity(events);
        for _ in 0..events {
            records.push(self.step()?);
        }
        Ok(self.finish(records))
    }

    fn finish(self, records: Vec<EventRecord>) -> EventTrace {
        let s = &self.state;
        let event_mean = s
            .cumulative
            .iter()
            .zip(&s.event_count)
            .map(|(sum, &k)| sum.iter().map(|v| if k == 0 { f64::NAN } else { v / k as f64 }).collect())
            .collect();
        let time_mean = s
            .integral
            .iter()
            .zip(&s.x)
            .map(|(acc, x)| acc.iter().zip(x).map(|(a, &v)| if s.time > 0.0 { a / s.time } else { v }).collect())
            .collect();
        EventTrace {
            n: self.cfg.n(),
            m: self.cfg.m(),
            records,
            gamma: self.gamma,
            clamp_count: self.clamp_count,
            floor_count: self.floor_count,
            event_count: s.event_count.clone(),
            event_mean,
            time_mean,
            end_time: s.time,
        }
    }
}

/// Runs `horizon` capacity events with the generator seeded from the config.
pub fn run_simulation(cfg: &ValidConfig, costs: &CostModel, horizon: usize) -> Result<EventTrace> {
    Simulator::new(cfg.clone(), costs.clone(), crate::seeded_rng(cfg.seed))?.run(horizon)
}

/// As [`run_simulation`] with an explicit drop policy.
pub fn run_simulation_with_policy(
    cfg: &ValidConfig,
    costs: &CostModel,
    policy: DropPolicy,
    horizon: usize,
) -> Result<EventTrace> {
    Simulator::with_policy(cfg.clone(), costs.clone(), policy, crate::seeded_rng(cfg.seed))?.run(horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Exponential, Quadratic, SystemConfig};
    use alloc::sync::Arc;
    use approx::assert_relative_eq;

    fn one_resource(n: usize, c: f64, alpha: f64, beta: f64) -> ValidConfig {
        SystemConfig::new(n, vec![ResourceParams::new(c, alpha, beta)], 1).validate().unwrap()
    }

    fn half_square(m: usize) -> Quadratic {
        Quadratic::new(vec![1.0; m], vec![0.0; m]).unwrap()
    }

    #[test]
    fn gap_examples() {
        let r = ResourceParams::new(1.0, 0.1, 0.5);
        let full = BackoffPattern::full(2);
        assert_relative_eq!(backoff_gap(&[0.25, 0.25], &full, &r), 2.5, max_relative = 1e-15);
        assert_eq!(backoff_gap(&[0.5, 0.5], &BackoffPattern::none(2), &r), 0.0);
        let r1 = ResourceParams::new(1.0, 0.5, 0.5);
        assert_relative_eq!(backoff_gap(&[0.5], &BackoffPattern::full(1), &r1), 1.0);
    }

    #[test]
    fn psi_examples() {
        let cfg = one_resource(2, 1.0, 0.1, 0.5);
        assert_relative_eq!(compute_psi(&cfg, 0), 2.5, max_relative = 1e-15);
        let four = one_resource(4, 1.0, 0.1, 0.5);
        assert_relative_eq!(compute_psi(&four, 0), 1.25, max_relative = 1e-15);
        assert!(ResourceParams::new(1.0, 0.1, 0.999_999).psi(2) < 1e-5);
    }

    #[test]
    fn ai_advance_examples() {
        let resources = vec![ResourceParams::new(1.0, 0.1, 0.5), ResourceParams::new(1.0, 0.2, 0.5)];
        let cfg = SystemConfig::new(2, resources.clone(), 1)
            .with_initial(vec![vec![0.2, 0.2], vec![0.45, 0.45]])
            .validate()
            .unwrap();
        let mut s = AllocationState::new(&cfg);
        ai_advance(&mut s, 0.0, &resources).unwrap();
        assert_eq!(s.x[0], vec![0.2, 0.2]);
        ai_advance(&mut s, 0.25, &resources).unwrap();
        assert_relative_eq!(s.x[0][0], 0.225);
        assert_relative_eq!(s.x[1][1], 0.5);
        assert!(matches!(ai_advance(&mut s, 1.0, &resources), Err(Error::Overshoot { resource: 1, .. })));
        let mut s = AllocationState::new(&cfg);
        let mut r = resources.clone();
        r[1].alpha = 0.01;
        ai_advance(&mut s, 1.0, &r).unwrap();
        assert_relative_eq!(s.x[0][0], 0.3);
        assert_relative_eq!(s.x[1][0], 0.46);
    }

    #[test]
    fn drop_probability_examples() {
        let costs = CostModel::identical(1, half_square(1)).unwrap();
        let r = vec![ResourceParams::new(1.0, 0.1, 0.5)];
        for avg in [0.1, 0.5, 0.9] {
            let p = drop_probability(&costs, &r, 0, 0, &[avg], 0.3).unwrap();
            assert_relative_eq!(p.value, 0.3, max_relative = 1e-15);
            assert!(!p.clamped);
        }
        let costs = CostModel::identical(1, Quadratic::new(vec![1.0], vec![0.1]).unwrap()).unwrap();
        let p = drop_probability(&costs, &r, 0, 0, &[0.5], 0.25).unwrap();
        assert_relative_eq!(p.value, 0.3, max_relative = 1e-14);
        let p = drop_probability(&costs, &r, 0, 0, &[0.5], 1.4 * 0.5 / 0.6).unwrap();
        assert_relative_eq!(p.raw, 1.4, max_relative = 1e-14);
        assert_eq!(p.value, 0.95);
        assert!(p.clamped);
        let p = drop_probability(&costs, &r, 0, 0, &[0.0], 0.25).unwrap();
        assert!(p.floored && p.clamped && p.value == 0.95);
    }

    #[test]
    fn averages_examples() {
        assert_relative_eq!(cumulative_mean(&[0.2, 0.4]), 0.3);
        assert_relative_eq!(windowed_mean(&[0.1, 0.3, 0.5], 2), 0.4);
        assert_eq!(windowed_mean(&[0.7], 4), 0.7);

        let cfg = SystemConfig::new(1, vec![ResourceParams::new(1.0, 0.1, 0.5)], 2)
            .with_initial(vec![vec![0.1]])
            .validate()
            .unwrap();
        let mut s = AllocationState::new(&cfg);
        for (k, v) in [0.1, 0.3, 0.5].into_iter().enumerate() {
            s.x[0][0] = v;
            let w = update_averages(&mut s, 0, AverageMode::Windowed, 2);
            if k == 0 {
                assert_eq!(w, vec![0.1]);
            }
        }
        assert_relative_eq!(s.averages(0, AverageMode::Windowed)[0], 0.4);
        assert_relative_eq!(s.averages(0, AverageMode::Cumulative)[0], 0.3);
    }

    #[test]
    fn gamma_examples() {
        let cfg = one_resource(3, 1.0, 0.1, 0.5);
        let g = compute_gamma(&cfg, &CostModel::identical(3, half_square(1)).unwrap()).unwrap();
        assert_relative_eq!(g[0], 0.95, max_relative = 1e-14);

        let cfg2 = one_resource(2, 1.0, 0.1, 0.5);
        let steep = Quadratic::new(vec![2.0], vec![0.0]).unwrap();
        let costs = CostModel::new(vec![Arc::new(half_square(1)), Arc::new(steep)]).unwrap();
        let g = compute_gamma(&cfg2, &costs).unwrap();
        assert_relative_eq!(g[0], 0.475, max_relative = 1e-14);

        let fixed = SystemConfig::new(1, vec![ResourceParams::new(1.0, 0.1, 0.5).with_gamma(Gamma::Fixed(0.3))], 1)
            .validate()
            .unwrap();
        let g = compute_gamma(&fixed, &CostModel::identical(1, half_square(1)).unwrap()).unwrap();
        assert_eq!(g, vec![0.3]);

        let mismatch = compute_gamma(&cfg, &CostModel::identical(2, half_square(1)).unwrap());
        assert!(matches!(mismatch, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gamma_keeps_probe_range_below_lambda_max() {
        let cfg = one_resource(2, 2.0, 0.1, 0.5);
        let costs = CostModel::identical(2, Quadratic::new(vec![1.0], vec![0.2]).unwrap()).unwrap();
        let g = compute_gamma(&cfg, &costs).unwrap()[0];
        for s in 0..=100 {
            let avg = 0.25 + 0.75 * s as f64 / 100.0;
            let p = drop_probability(&costs, &cfg.resources, 0, 0, &[avg], g).unwrap();
            assert!(p.raw <= 0.95 + 1e-12);
        }
    }

    #[test]
    fn forced_probabilities() {
        let cfg = one_resource(3, 1.0, 0.1, 0.5);
        let mut s = AllocationState::new(&cfg);
        let mut rng = crate::seeded_rng(1);
        let before = s.x[0].clone();
        let p = md_backoff(&mut s, 0, &[1.0; 3], 0.5, &mut rng);
        assert!(p.is_full());
        assert_eq!(s.x[0], before.iter().map(|v| v * 0.5).collect::<Vec<_>>());
        let p = md_backoff(&mut s, 0, &[0.0; 3], 0.5, &mut rng);
        assert!(p.is_none());
    }

    #[test]
    fn zero_horizon_is_empty() {
        let cfg = one_resource(2, 1.0, 0.1, 0.5);
        let t = run_simulation(&cfg, &CostModel::identical(2, half_square(1)).unwrap(), 0).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.event_count, vec![0]);
    }

    #[test]
    fn single_agent_sawtooth() {
        let cfg = one_resource(1, 1.0, 0.5, 0.5);
        let t = run_simulation(&cfg, &CostModel::identical(1, half_square(1)).unwrap(), 200).unwrap();
        for r in &t.records {
            assert_relative_eq!(r.pre[0], 1.0, max_relative = 1e-12);
        }
        assert_relative_eq!(t.event_mean[0][0], 1.0, max_relative = 1e-12);
        // Every back-off is a full one; after each, the allocation climbs from
        // β C back to C, so the time average of a complete cycle is C (1 + β) / 2.
        let full_cycles = t.records.iter().all(|r| r.backoff.is_full() || r.gap == 0.0);
        assert!(full_cycles);
        let busy: f64 = t.records.iter().map(|r| r.gap).sum();
        assert!(busy > 0.0);
    }

    #[test]
    fn two_resources_interleave() {
        let cfg = SystemConfig::new(2, vec![ResourceParams::new(1.0, 0.1, 0.5), ResourceParams::new(2.0, 0.3, 0.6)], 3)
            .with_seed(11)
            .validate()
            .unwrap();
        let costs = CostModel::identical(2, Exponential::new(vec![1.0, 0.5], vec![1.0, 0.7]).unwrap()).unwrap();
        let t = run_simulation(&cfg, &costs, 2000).unwrap();
        assert!(t.event_count.iter().all(|&k| k > 100));
        for w in t.records.windows(2) {
            assert!(w[1].time >= w[0].time);
        }
        for j in 0..2 {
            let times: Vec<f64> = t.resource_events(j).map(|k| t.records[k].time).collect();
            assert!(times.windows(2).all(|w| w[1] >= w[0]));
        }
        for r in &t.records {
            let c = cfg.resources[r.resource].capacity;
            assert!((r.pre.iter().sum::<f64>() - c).abs() <= 1e-9 * c);
            assert!(r.lambda.iter().all(|&l| (0.05..=0.95).contains(&l)));
        }
    }
}
