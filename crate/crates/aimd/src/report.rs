//! Serializable report types. Every allocation matrix is indexed
//! `[resource][agent]`.

use aimd_core::chain::{ContractionReport, UniquenessReport};
use aimd_core::matrix::verify::PropertyOutcome;
use aimd_core::oracle::OptimalAllocation;
use serde::{Deserialize, Serialize};

pub fn to_json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize infallibly");
    bytes.push(b'\n');
    bytes
}

/// `None` for NaN and infinities so they come out as `null`.
pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn finite_matrix(rows: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    rows.iter().map(|r| r.iter().map(|&x| finite(x)).collect()).collect()
}

/// `[a][b]` to `[b][a]`.
pub fn transpose(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    (0..cols).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub window: usize,
    pub seed: u64,
    pub events: usize,
    pub average_mode: String,
    pub units: Vec<String>,
    pub capacity: Vec<f64>,
    pub gamma: Vec<f64>,
    pub event_count: Vec<usize>,
    pub clamp_count: Vec<usize>,
    pub floor_count: Vec<usize>,
    pub end_time: f64,
    /// Mean allocation at the capacity events; `null` for resources without events.
    pub long_run_mean: Vec<Vec<Option<f64>>>,
    /// Time-averaged allocation over `[0, end_time]`.
    pub time_mean: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub vacuous: bool,
    pub trials: usize,
    pub worst: Option<f64>,
    pub bound: Option<f64>,
    pub witness: Option<Vec<f64>>,
    pub detail: String,
}

impl From<&PropertyOutcome> for PropertyEntry {
    fn from(o: &PropertyOutcome) -> Self {
        Self {
            name: o.name,
            description: o.description,
            passed: o.passed,
            vacuous: o.vacuous,
            trials: o.trials,
            worst: finite(o.worst),
            bound: finite(o.bound),
            witness: o.witness.clone(),
            detail: o.detail.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub n: usize,
    #[serde(rename = "T")]
    pub window: usize,
    pub betas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub builder: &'static str,
    pub passed: bool,
    pub failures: usize,
    pub properties: Vec<PropertyEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicReport {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub window: usize,
    pub steps: usize,
    pub seed: u64,
    /// Number of states averaged, `steps + 1`.
    pub count: usize,
    /// Ergodic mean of the `T`-th subblocks.
    pub long_run_mean: Vec<Vec<f64>>,
    /// Ergodic mean of the whole state vector.
    pub mean: Vec<f64>,
    /// Combined-norm distance between the means of the two trajectory halves,
    /// relative to the norm of the first.
    pub split_half_relative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendPoint {
    pub steps: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessJson {
    pub seeds: [u64; 2],
    pub start_a: Vec<Vec<f64>>,
    pub start_b: Vec<Vec<f64>>,
    pub distance: f64,
    /// `distance` divided by the largest capacity.
    pub distance_relative: f64,
    pub threshold: f64,
    pub passed: bool,
    pub trend: Vec<TrendPoint>,
    pub long_run_mean_a: Vec<Vec<f64>>,
    pub long_run_mean_b: Vec<Vec<f64>>,
}

impl UniquenessJson {
    pub fn new(
        r: &UniquenessReport,
        seeds: [u64; 2],
        starts: (Vec<Vec<f64>>, Vec<Vec<f64>>),
        scale: f64,
        threshold: f64,
    ) -> Self {
        let distance_relative = r.distance / scale;
        Self {
            seeds,
            start_a: starts.0,
            start_b: starts.1,
            distance: r.distance,
            distance_relative,
            threshold,
            passed: distance_relative < threshold,
            trend: r.trend.iter().map(|&(steps, distance)| TrendPoint { steps, distance }).collect(),
            long_run_mean_a: r.mean_a.agent_means.clone(),
            long_run_mean_b: r.mean_b.agent_means.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionJson {
    pub seed: u64,
    pub horizon: usize,
    pub samples: usize,
    pub mean_ratio: f64,
    pub std_error: f64,
    pub upper_95: f64,
    pub max_ratio: f64,
    pub full_backoff_frequency: f64,
    pub full_backoff_bound: f64,
    pub full_backoff_sigma: f64,
    pub coverage: f64,
    pub mu: f64,
    pub pair_mass: f64,
    pub pair_mass_std_error: f64,
    pub contracts: bool,
    pub frequency_ok: bool,
    pub passed: bool,
}

impl ContractionJson {
    pub fn new(r: &ContractionReport, seed: u64) -> Self {
        let frequency_ok = r.full_backoff_frequency >= r.full_backoff_bound - 3.0 * r.full_backoff_sigma;
        Self {
            seed,
            horizon: r.horizon,
            samples: r.samples,
            mean_ratio: r.mean_ratio,
            std_error: r.std_error,
            upper_95: r.upper_95,
            max_ratio: r.max_ratio,
            full_backoff_frequency: r.full_backoff_frequency,
            full_backoff_bound: r.full_backoff_bound,
            full_backoff_sigma: r.full_backoff_sigma,
            coverage: r.coverage,
            mu: r.mu,
            pair_mass: r.pair_mass,
            pair_mass_std_error: r.pair_mass_std_error,
            contracts: r.contracts(),
            frequency_ok,
            passed: r.contracts() && frequency_ok,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub n: usize,
    pub m: usize,
    pub allocation: Vec<Vec<f64>>,
    pub objective: f64,
    /// KKT residual per resource.
    pub kkt: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub tol: f64,
}

impl OracleReport {
    pub fn new(sol: &OptimalAllocation, tol: f64) -> Self {
        Self {
            n: sol.y.len(),
            m: sol.y.first().map_or(0, Vec::len),
            allocation: transpose(&sol.y),
            objective: sol.objective,
            kkt: sol.kkt.clone(),
            iterations: sol.iterations,
            residual: sol.residual,
            tol,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub means_sha256: String,
    /// Digest of the oracle file, or `null` when the optimum was solved here.
    pub oracle_sha256: Option<String>,
    pub long_run_mean: Vec<Vec<f64>>,
    pub optimal: Vec<Vec<f64>>,
    pub abs_diff: Vec<Vec<f64>>,
    /// Largest `|mean − y*|` per resource divided by its capacity.
    pub max_abs_diff_relative: Vec<f64>,
    pub social_cost_mean: f64,
    pub social_cost_optimal: f64,
    /// `f(mean) / f(y*) − 1`.
    pub relative_gap: f64,
    pub tolerance: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixHeader {
    pub n: usize,
    #[serde(rename = "T")]
    pub window: usize,
    pub m: usize,
    pub resource: usize,
    pub kind: &'static str,
    pub pattern: String,
    pub beta: f64,
    pub rows: usize,
    pub cols: usize,
}
