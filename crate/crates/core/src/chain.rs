//! The lifted chain `ξ(k+1) = U(k) ξ(k)` on the stacked partial averages.
//!
//! For every resource `j` the state carries the `Tn`-vector
//! `[x(k), (x(k)+x(k−1))/2, …, (x(k)+…+x(k−T+1))/T]`, where `x(k)` is the
//! allocation at the `k`-th capacity event of `j` (so it sums to `C^j`). A
//! step picks the resource whose event comes next, draws the back-off pattern
//! with probabilities taken from the current averages, and applies the
//! lifted AIMD matrix to that resource's block.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::engine::{backoff_gap, check_costs, compute_gamma, drop_probability, next_event_gap, DropPolicy};
use crate::error::{Error, Result};
use crate::matrix::{
    apply_lifted, build_d, build_u, norm_combined, project_w, sample_pattern, AimdMatrix, BackoffPattern, BlockMatrix,
};
use crate::model::{CostModel, ValidConfig};
use crate::stats::RunningMean;

/// Stacked window state `ξ ∈ R^{mTn}` with the raw allocations it summarizes.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowState {
    n: usize,
    window: usize,
    pub xi: Vec<f64>,
    /// Last `T` raw allocation vectors per resource, newest first.
    pub history: Vec<VecDeque<Vec<f64>>>,
    /// Raw allocations observed per resource, counting the initial one.
    pub samples: Vec<usize>,
    /// Absolute time of the capacity event the raw subblock refers to.
    pub next_time: Vec<f64>,
    /// Time of the last processed event.
    pub time: f64,
}

impl WindowState {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn m(&self) -> usize {
        self.history.len()
    }

    pub fn block(&self, j: usize) -> &[f64] {
        let size = self.n * self.window;
        &self.xi[j * size..(j + 1) * size]
    }

    /// Subblock `r` (1-based) of resource `j`: the mean of the last `r` raw vectors.
    pub fn subblock(&self, j: usize, r: usize) -> &[f64] {
        &self.block(j)[(r - 1) * self.n..r * self.n]
    }

    /// Allocation of resource `j` at its upcoming capacity event.
    pub fn raw(&self, j: usize) -> &[f64] {
        self.subblock(j, 1)
    }

    /// Windowed averages the next drop probabilities are computed from: the
    /// subblock covering all samples seen so far, capped at `T`.
    pub fn averages(&self, j: usize) -> &[f64] {
        self.subblock(j, self.samples[j].min(self.window))
    }

    /// Largest deviation between `ξ` and the partial means recomputed from
    /// the ring buffers.
    pub fn buffer_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (j, h) in self.history.iter().enumerate() {
            let mut acc = vec![0.0; self.n];
            for r in 1..=self.window {
                for (a, v) in acc.iter_mut().zip(&h[r - 1]) {
                    *a += v;
                }
                for (s, a) in self.subblock(j, r).iter().zip(&acc) {
                    worst = worst.max((s - a / r as f64).abs());
                }
            }
        }
        worst
    }

    /// Next resource to fire; ties go to the lowest index.
    pub fn next_resource(&self) -> usize {
        let mut best = 0;
        for (j, &t) in self.next_time.iter().enumerate().skip(1) {
            if t < self.next_time[best] {
                best = j;
            }
        }
        best
    }

    /// Rebuilds a state from a stacked vector, recovering the raw history
    /// through `x(k−r+1) = r z_r − (r−1) z_{r−1}`. All resources are due at
    /// time zero and every window counts as full.
    pub fn from_xi(cfg: &ValidConfig, xi: Vec<f64>) -> Result<Self> {
        let (n, window, m) = (cfg.n(), cfg.window(), cfg.m());
        if xi.len() != m * n * window {
            return Err(Error::DimensionMismatch { expected: m * n * window, found: xi.len() });
        }
        let mut history = Vec::with_capacity(m);
        for (j, block) in xi.chunks(n * window).enumerate() {
            let mut h = VecDeque::with_capacity(window);
            for r in 1..=window {
                let z = &block[(r - 1) * n..r * n];
                let raw: Vec<f64> = if r == 1 {
                    z.to_vec()
                } else {
                    let prev = &block[(r - 2) * n..(r - 1) * n];
                    z.iter().zip(prev).map(|(a, b)| r as f64 * a - (r - 1) as f64 * b).collect()
                };
                if raw.iter().any(|&v| v < -1e-9 * cfg.resources[j].capacity) {
                    return Err(Error::InvalidState(alloc::format!(
                        "resource {j}: window history has negative entries"
                    )));
                }
                h.push_back(raw);
            }
            history.push(h);
        }
        Ok(Self { n, window, xi, history, samples: vec![window; m], next_time: vec![0.0; m], time: 0.0 })
    }
}

/// Builds the state at the start of a run from allocations at time zero
/// (`[resource][agent]`, strictly positive, each resource within capacity).
/// Each resource is advanced to its first capacity event, which becomes the
/// raw subblock, and the ring buffer is filled with that vector.
pub fn init_state(cfg: &ValidConfig, initial: &[Vec<f64>]) -> Result<WindowState> {
    let (n, window, m) = (cfg.n(), cfg.window(), cfg.m());
    if initial.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: initial.len() });
    }
    let mut xi = Vec::with_capacity(m * n * window);
    let mut history = Vec::with_capacity(m);
    let mut next_time = Vec::with_capacity(m);
    for (j, (x0, r)) in initial.iter().zip(&cfg.resources).enumerate() {
        if x0.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x0.len() });
        }
        let total: f64 = x0.iter().sum();
        if x0.iter().any(|&v| v.is_nan() || v <= 0.0) || total > r.capacity * (1.0 + 1e-12) {
            return Err(Error::InvalidState(alloc::format!(
                "resource {j}: initial allocations must be positive and sum to at most the capacity"
            )));
        }
        let gap = next_event_gap(x0, r, n);
        let raw: Vec<f64> = x0.iter().map(|v| v + r.alpha * gap).collect();
        for _ in 0..window {
            xi.extend_from_slice(&raw);
        }
        history.push(core::iter::repeat_n(raw, window).collect());
        next_time.push(gap);
    }
    Ok(WindowState { n, window, xi, history, samples: vec![1; m], next_time, time: 0.0 })
}

/// One transition of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStep {
    pub resource: usize,
    pub time: f64,
    pub pattern: BackoffPattern,
    pub lambda: Vec<f64>,
    /// Raw allocation of the active resource before the step.
    pub pre: Vec<f64>,
    pub gap: f64,
}

impl ChainStep {
    /// The block operator `U` this step applied.
    pub fn operator(&self, cfg: &ValidConfig) -> Result<BlockMatrix> {
        let a = AimdMatrix::new(self.pattern.clone(), cfg.resources[self.resource].beta)?;
        build_u(&build_d(&a, cfg.window())?, self.resource, cfg.m())
    }
}

/// Transition kernel: configuration, costs and resolved normalization factors.
#[derive(Debug, Clone)]
pub struct ChainModel {
    cfg: ValidConfig,
    costs: CostModel,
    gamma: Vec<f64>,
    policy: DropPolicy,
}

impl ChainModel {
    pub fn new(cfg: ValidConfig, costs: CostModel) -> Result<Self> {
        Self::with_policy(cfg, costs, DropPolicy::CostDriven)
    }

    pub fn with_policy(cfg: ValidConfig, costs: CostModel, policy: DropPolicy) -> Result<Self> {
        check_costs(&cfg, &costs)?;
        let gamma = compute_gamma(&cfg, &costs)?;
        if let DropPolicy::Constant(l) = &policy {
            if l.len() != cfg.m() || l.iter().any(|row| row.len() != cfg.n()) {
                return Err(Error::InvalidArgument("constant drop probabilities must be m × n".into()));
            }
        }
        Ok(Self { cfg, costs, gamma, policy })
    }

    pub fn config(&self) -> &ValidConfig {
        &self.cfg
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Start state from the configured initial allocations.
    pub fn initial_state(&self) -> Result<WindowState> {
        init_state(&self.cfg, &self.cfg.initial_allocations())
    }

    /// Back-off probabilities of every agent at an event of `j` in `state`.
    pub fn lambda(&self, state: &WindowState, j: usize) -> Result<Vec<f64>> {
        match &self.policy {
            DropPolicy::Constant(l) => Ok(l[j].clone()),
            DropPolicy::CostDriven => (0..self.cfg.n())
                .map(|i| {
                    let avg: Vec<f64> = (0..self.cfg.m()).map(|jj| state.averages(jj)[i]).collect();
                    drop_probability(&self.costs, &self.cfg.resources, i, j, &avg, self.gamma[j]).map(|p| p.value)
                })
                .collect(),
        }
    }

    /// Advances `state` by one capacity event.
    pub fn step<R: RngCore + ?Sized>(&self, state: &mut WindowState, rng: &mut R) -> Result<ChainStep> {
        let j = state.next_resource();
        let params = &self.cfg.resources[j];
        let n = self.cfg.n();
        let lambda = self.lambda(state, j)?;
        let pattern = sample_pattern(&lambda, rng);
        let pre = state.raw(j).to_vec();
        let post: Vec<f64> =
            pre.iter().zip(pattern.as_slice()).map(|(&v, &b)| if b { v * params.beta } else { v }).collect();
        let gap = backoff_gap(&post, &pattern, params);
        let size = n * self.cfg.window();
        apply_lifted(&pattern, params.beta, &mut state.xi[j * size..(j + 1) * size], n);
        let h = &mut state.history[j];
        h.pop_back();
        h.push_front(state.xi[j * size..j * size + n].to_vec());
        state.samples[j] += 1;
        state.time = state.next_time[j];
        state.next_time[j] += gap;
        Ok(ChainStep { resource: j, time: state.time, pattern, lambda, pre, gap })
    }
}

/// Cesàro mean of the visited states.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicEstimate {
    /// `(1/(k+1)) Σ_{ℓ=0}^{k} ξ(ℓ)`.
    pub mean: Vec<f64>,
    /// Number of states averaged (`k + 1`).
    pub count: usize,
    /// Mean of the `T`-th subblocks, `[resource][agent]`.
    pub agent_means: Vec<Vec<f64>>,
}

/// Streaming accumulator behind [`ErgodicEstimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicAccumulator {
    n: usize,
    window: usize,
    sum: Vec<f64>,
    count: usize,
}

impl ErgodicAccumulator {
    pub fn new(n: usize, window: usize, m: usize) -> Self {
        Self { n, window, sum: vec![0.0; m * n * window], count: 0 }
    }

    pub fn push(&mut self, xi: &[f64]) {
        for (s, v) in self.sum.iter_mut().zip(xi) {
            *s += v;
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn estimate(&self) -> ErgodicEstimate {
        let k = self.count.max(1) as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / k).collect();
        let size = self.n * self.window;
        let agent_means = mean.chunks(size).map(|b| b[size - self.n..].to_vec()).collect();
        ErgodicEstimate { mean, count: self.count, agent_means }
    }
}

/// Cesàro mean of a trajectory.
pub fn ergodic_average(trajectory: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = trajectory.first().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let mut sum = vec![0.0; first.len()];
    for xi in trajectory {
        if xi.len() != sum.len() {
            return Err(Error::DimensionMismatch { expected: sum.len(), found: xi.len() });
        }
        for (s, v) in sum.iter_mut().zip(xi) {
            *s += v;
        }
    }
    let k = trajectory.len() as f64;
    Ok(sum.into_iter().map(|s| s / k).collect())
}

/// A recorded chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    /// `ξ(0), ξ(1), …, ξ(steps)`.
    pub trajectory: Vec<Vec<f64>>,
    pub steps: Vec<ChainStep>,
    pub estimate: ErgodicEstimate,
}

/// Runs `steps` transitions from the configured start and keeps the trajectory.
pub fn run_chain(cfg: &ValidConfig, costs: &CostModel, steps: usize, seed: u64) -> Result<ChainRun> {
    run_chain_with(&ChainModel::new(cfg.clone(), costs.clone())?, steps, seed)
}

/// As [`run_chain`] for an already built model.
pub fn run_chain_with(model: &ChainModel, steps: usize, seed: u64) -> Result<ChainRun> {
    let window = model.cfg.window();
    if steps < window {
        return Err(Error::InvalidArgument(alloc::format!("steps ({steps}) must be at least T ({window})")));
    }
    let mut rng = crate::seeded_rng(seed);
    let mut state = model.initial_state()?;
    let mut acc = ErgodicAccumulator::new(model.cfg.n(), window, model.cfg.m());
    let mut trajectory = Vec::with_capacity(steps + 1);
    let mut records = Vec::with_capacity(steps);
    acc.push(&state.xi);
    trajectory.push(state.xi.clone());
    for _ in 0..steps {
        records.push(model.step(&mut state, &mut rng)?);
        acc.push(&state.xi);
        trajectory.push(state.xi.clone());
    }
    Ok(ChainRun { trajectory, steps: records, estimate: acc.estimate() })
}

/// Runs the chain without storing the trajectory and reports the ergodic
/// estimate at each requested checkpoint (step counts, ascending).
pub fn ergodic_checkpoints(
    model: &ChainModel,
    start: WindowState,
    checkpoints: &[usize],
    seed: u64,
) -> Result<Vec<ErgodicEstimate>> {
    let mut rng = crate::seeded_rng(seed);
    let mut state = start;
    let mut acc = ErgodicAccumulator::new(model.cfg.n(), model.cfg.window(), model.cfg.m());
    acc.push(&state.xi);
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut done = 0;
    for &target in checkpoints {
        if target < done {
            return Err(Error::InvalidArgument("checkpoints must be ascending".into()));
        }
        while done < target {
            model.step(&mut state, &mut rng)?;
            acc.push(&state.xi);
            done += 1;
        }
        out.push(acc.estimate());
    }
    Ok(out)
}

/// Product `U(k_L) ⋯ U(k_1)` of the operators of consecutive steps.
pub fn h_product(cfg: &ValidConfig, steps: &[ChainStep]) -> Result<BlockMatrix> {
    let mut acc = BlockMatrix::identity(cfg.n(), cfg.window(), cfg.m());
    for s in steps {
        acc = acc.then(&s.operator(cfg)?)?;
    }
    Ok(acc)
}

/// Result of running two chains from different starts.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    /// Combined-norm distance between the two ergodic means at the end.
    pub distance: f64,
    /// `(steps, distance)` at every checkpoint.
    pub trend: Vec<(usize, f64)>,
    pub mean_a: ErgodicEstimate,
    pub mean_b: ErgodicEstimate,
}

/// Runs chains from `start_a` and `start_b` (allocations at time zero,
/// `[resource][agent]`) with seeds `seeds.0` and `seeds.1` and compares their
/// ergodic means at `checkpoints` (the last one is the total length).
pub fn uniqueness_probe(
    model: &ChainModel,
    start_a: &[Vec<f64>],
    start_b: &[Vec<f64>],
    seeds: (u64, u64),
    checkpoints: &[usize],
) -> Result<UniquenessReport> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument("at least one checkpoint is required".into()));
    }
    let a = ergodic_checkpoints(model, init_state(&model.cfg, start_a)?, checkpoints, seeds.0)?;
    let b = ergodic_checkpoints(model, init_state(&model.cfg, start_b)?, checkpoints, seeds.1)?;
    let (n, window) = (model.cfg.n(), model.cfg.window());
    let mut trend = Vec::with_capacity(checkpoints.len());
    for ((ea, eb), &k) in a.iter().zip(&b).zip(checkpoints) {
        let diff: Vec<f64> = ea.mean.iter().zip(&eb.mean).map(|(x, y)| x - y).collect();
        trend.push((k, norm_combined(&diff, n, window)?));
    }
    Ok(UniquenessReport {
        distance: trend.last().map(|t| t.1).unwrap_or(0.0),
        trend,
        mean_a: a.last().cloned().unwrap_or_else(|| unreachable_estimate(n, window, model.cfg.m())),
        mean_b: b.last().cloned().unwrap_or_else(|| unreachable_estimate(n, window, model.cfg.m())),
    })
}

fn unreachable_estimate(n: usize, window: usize, m: usize) -> ErgodicEstimate {
    ErgodicAccumulator::new(n, window, m).estimate()
}

/// Number of events per sampled product: `Σ_j ⌈Ψ_max / Ψ^j⌉ + 1`, enough
/// for a resource with the slowest full back-off recurrence to be reached
/// while the faster ones cycle.
pub fn horizon_from_psi(cfg: &ValidConfig) -> usize {
    let psi: Vec<f64> = cfg.resources.iter().map(|r| r.psi(cfg.n())).collect();
    let max = psi.iter().cloned().fold(0.0, f64::max);
    psi.iter().map(|p| libm::ceil(max / p) as usize).sum::<usize>() + 1
}

/// Monte Carlo estimate of the expected contraction over one product.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub horizon: usize,
    pub samples: usize,
    /// Mean of `‖H(z−w)‖ / ‖z−w‖` over products `H` drawn from `z`.
    pub mean_ratio: f64,
    pub std_error: f64,
    /// One-sided 95% upper confidence bound of the mean ratio.
    pub upper_95: f64,
    pub max_ratio: f64,
    /// Fraction of sampled products with a full back-off of every resource.
    pub full_backoff_frequency: f64,
    /// `Π_j (λ_min^j)^n`.
    pub full_backoff_bound: f64,
    /// Binomial standard deviation of the frequency at the bound.
    pub full_backoff_sigma: f64,
    /// Fraction of products in which every resource had an event.
    pub coverage: f64,
    /// Contraction factor used for the pair-mass estimate.
    pub mu: f64,
    /// Fraction of paired draws from `z` and `w` that produced the same
    /// product with ratio at most `mu`.
    pub pair_mass: f64,
    pub pair_mass_std_error: f64,
}

impl ContractionReport {
    pub fn contracts(&self) -> bool {
        self.upper_95 < 1.0
    }
}

/// Estimates `Σ_H p_H(z) ‖H(z−w)‖ / ‖z−w‖` by sampling `samples` products of
/// `horizon` events from `z`. The difference is projected onto the zero-sum
/// subspace first; it must not vanish.
pub fn contraction_on_average<R: RngCore + ?Sized>(
    model: &ChainModel,
    z: &WindowState,
    w: &WindowState,
    horizon: usize,
    samples: usize,
    mu: f64,
    rng: &mut R,
) -> Result<ContractionReport> {
    let cfg = &model.cfg;
    let (n, window) = (cfg.n(), cfg.window());
    if horizon == 0 || samples == 0 {
        return Err(Error::InvalidArgument("horizon and samples must be ≥ 1".into()));
    }
    let raw: Vec<f64> = z.xi.iter().zip(&w.xi).map(|(a, b)| a - b).collect();
    let diff = project_w(&raw, n)?;
    let base = norm_combined(&diff, n, window)?;
    let scale = cfg.resources.iter().map(|r| r.capacity).fold(0.0, f64::max);
    if base.is_nan() || base <= 1e-14 * scale {
        return Err(Error::ZeroDifference);
    }
    let mut ratio = RunningMean::new();
    let mut max_ratio = 0.0f64;
    let mut full = 0usize;
    let mut covered = 0usize;
    let mut pairs = RunningMean::new();
    for _ in 0..samples {
        let h = sample_product(model, z, horizon, rng)?;
        let r = norm_combined(&h.apply(&diff)?, n, window)? / base;
        ratio.push(r);
        max_ratio = max_ratio.max(r);
        full += h.is_full_backoff_product() as usize;
        covered += h.events().iter().all(|&e| e > 0) as usize;
        let hw = sample_product(model, w, horizon, rng)?;
        let same = same_product(&h, &hw);
        pairs.push((same && r <= mu) as u8 as f64);
    }
    let bound: f64 = cfg.resources.iter().map(|r| libm::pow(r.lambda_min, n as f64)).product();
    let s = samples as f64;
    Ok(ContractionReport {
        horizon,
        samples,
        mean_ratio: ratio.mean(),
        std_error: ratio.std_error(),
        upper_95: ratio.mean() + 1.645 * ratio.std_error(),
        max_ratio,
        full_backoff_frequency: full as f64 / s,
        full_backoff_bound: bound,
        full_backoff_sigma: libm::sqrt(bound * (1.0 - bound) / s),
        coverage: covered as f64 / s,
        mu,
        pair_mass: pairs.mean(),
        pair_mass_std_error: pairs.std_error(),
    })
}

fn sample_product<R: RngCore + ?Sized>(
    model: &ChainModel,
    start: &WindowState,
    horizon: usize,
    rng: &mut R,
) -> Result<BlockMatrix> {
    let mut state = start.clone();
    let mut h = BlockMatrix::identity(model.cfg.n(), model.cfg.window(), model.cfg.m());
    for _ in 0..horizon {
        let step = model.step(&mut state, rng)?;
        h = h.then(&step.operator(&model.cfg)?)?;
    }
    Ok(h)
}

fn same_product(a: &BlockMatrix, b: &BlockMatrix) -> bool {
    a.events() == b.events() && (0..a.m()).all(|j| a.block(j).max_abs_diff(b.block(j)) <= 1e-12)
}
