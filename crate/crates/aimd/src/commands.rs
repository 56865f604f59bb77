use std::fs;
use std::path::Path;

use aimd_core::chain::{
    contraction_on_average, horizon_from_psi, init_state, run_chain_with, uniqueness_probe, ChainModel,
};
use aimd_core::engine::{run_simulation, EventTrace};
use aimd_core::matrix::verify::{IdentityForFullBackoff, MatrixBuilder, PropertySuite, StandardBuilder};
use aimd_core::matrix::{build_d, build_u, norm_combined, AimdMatrix, BackoffPattern, Matrix};
use aimd_core::model::{AverageMode, ValidConfig};
use aimd_core::oracle::{solve_optimal, SolverOptions};
use aimd_core::seeded_rng;
use rand::RngCore;
use serde_json::Value;

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::manifest::{sha256_hex, Artifact};
use crate::report::*;

/// What a command produced: the report echoed on stdout, the files to write
/// and whether every checked property held.
#[derive(Debug)]
pub struct Output {
    pub report: Value,
    /// Printed verbatim instead of `report` (matrix dumps).
    pub text: Option<String>,
    pub artifacts: Vec<Artifact>,
    pub passed: bool,
}

impl Output {
    fn json(report: &impl serde::Serialize, artifacts: Vec<Artifact>, passed: bool) -> Self {
        Self { report: serde_json::to_value(report).expect("serializable"), text: None, artifacts, passed }
    }
}

pub fn simulate(cfg: &LoadedConfig, events: usize) -> Result<Output, CliError> {
    let trace = run_simulation(&cfg.config, &cfg.costs, events)?;
    let summary = summarize(cfg, &trace, events);
    let artifacts = vec![Artifact::new("trace.csv", trace_csv(&trace)), Artifact::json("summary.json", &summary)];
    Ok(Output::json(&summary, artifacts, true))
}

fn summarize(cfg: &LoadedConfig, trace: &EventTrace, events: usize) -> SimulationSummary {
    let c = &cfg.config;
    SimulationSummary {
        n: c.n(),
        m: c.m(),
        window: c.window(),
        seed: c.seed,
        events,
        average_mode: match c.average_mode {
            AverageMode::Windowed => "windowed".into(),
            AverageMode::Cumulative => "cumulative".into(),
        },
        units: cfg.units.clone(),
        capacity: c.resources.iter().map(|r| r.capacity).collect(),
        gamma: trace.gamma.clone(),
        event_count: trace.event_count.clone(),
        clamp_count: trace.clamp_count.clone(),
        floor_count: trace.floor_count.clone(),
        end_time: trace.end_time,
        long_run_mean: finite_matrix(&trace.event_mean),
        time_mean: finite_matrix(&trace.time_mean),
    }
}

fn trace_csv(trace: &EventTrace) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, row: &[String]| w.write_record(row).expect("in-memory write");
    write(
        &mut w,
        &["event_index", "time", "resource", "agent", "pre_alloc", "lambda", "backoff", "post_alloc"].map(String::from),
    );
    for r in &trace.records {
        for i in 0..trace.n {
            write(
                &mut w,
                &[
                    r.index.to_string(),
                    r.time.to_string(),
                    r.resource.to_string(),
                    i.to_string(),
                    r.pre[i].to_string(),
                    r.lambda[i].to_string(),
                    u8::from(r.backoff.backs_off(i)).to_string(),
                    r.post[i].to_string(),
                ],
            );
        }
    }
    w.into_inner().expect("in-memory flush")
}

pub fn verify(cfg: &LoadedConfig, trials: usize, inject_fault: bool) -> Result<Output, CliError> {
    let c = &cfg.config;
    let mut betas: Vec<f64> = c.resources.iter().map(|r| r.beta).collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let suite = PropertySuite::new(c.n(), c.window(), betas.clone(), trials);
    let (builder, name): (&dyn MatrixBuilder, _) = if inject_fault {
        (&IdentityForFullBackoff, "identity-for-full-backoff")
    } else {
        (&StandardBuilder, "standard")
    };
    let outcomes = suite.run(builder, &mut seeded_rng(c.seed))?;
    let properties: Vec<PropertyEntry> = outcomes.iter().map(PropertyEntry::from).collect();
    let failures = properties.iter().filter(|p| !p.passed).count();
    let report = VerifyReport {
        n: c.n(),
        window: c.window(),
        betas,
        trials,
        seed: c.seed,
        builder: name,
        passed: failures == 0,
        failures,
        properties,
    };
    Ok(Output::json(&report, vec![Artifact::json("verify.json", &report)], failures == 0))
}

#[derive(Debug, Clone, Copy)]
pub struct ChainOptions {
    pub steps: usize,
    pub probe_uniqueness: bool,
    pub contraction: bool,
    pub samples: usize,
    pub threshold: f64,
    pub mu: f64,
}

/// A second admissible start far from the default: agent `i` of every
/// resource gets a share proportional to `n − i` of 90% of the capacity.
pub fn skewed_start(cfg: &ValidConfig) -> Vec<Vec<f64>> {
    let n = cfg.n();
    let total = (n * (n + 1) / 2) as f64;
    cfg.resources.iter().map(|r| (0..n).map(|i| 0.9 * r.capacity * (n - i) as f64 / total).collect()).collect()
}

pub fn chain(cfg: &LoadedConfig, opts: ChainOptions) -> Result<Output, CliError> {
    let c = &cfg.config;
    if opts.steps < c.window() {
        return Err(CliError::Validation(vec![format!(
            "--steps {} is shorter than the window T = {}",
            opts.steps,
            c.window()
        )]));
    }
    // Every sub-run takes its seed from one generator, drawn in a fixed order
    // so a flag never changes the numbers of another report.
    let mut master = seeded_rng(c.seed);
    let chain_seed = master.next_u64();
    let probe_seeds = [master.next_u64(), master.next_u64()];
    let contraction_seed = master.next_u64();

    let model = ChainModel::new(c.clone(), cfg.costs.clone())?;
    let run = run_chain_with(&model, opts.steps, chain_seed)?;
    let (n, window, m) = (c.n(), c.window(), c.m());

    let half = run.trajectory.len() / 2;
    let first = column_mean(&run.trajectory[..half]);
    let second = column_mean(&run.trajectory[half..]);
    let diff: Vec<f64> = first.iter().zip(&second).map(|(a, b)| a - b).collect();
    let split_half_relative = norm_combined(&diff, n, window)? / norm_combined(&first, n, window)?;

    let ergodic = ErgodicReport {
        n,
        m,
        window,
        steps: opts.steps,
        seed: chain_seed,
        count: run.estimate.count,
        long_run_mean: run.estimate.agent_means.clone(),
        mean: run.estimate.mean.clone(),
        split_half_relative,
    };

    let header = serde_json::json!({ "n": n, "T": window, "m": m, "steps": opts.steps, "seed": chain_seed });
    let mut csv_bytes = b"# ".to_vec();
    csv_bytes.extend(serde_json::to_vec(&header).expect("serializable"));
    csv_bytes.push(b'\n');
    csv_bytes.extend(trajectory_csv(
        &run.trajectory,
        &run.steps.iter().map(|s| s.resource).collect::<Vec<_>>(),
        n,
        window,
        m,
    ));

    let mut artifacts = vec![Artifact::new("trajectory.csv", csv_bytes), Artifact::json("ergodic.json", &ergodic)];
    let mut stdout = serde_json::Map::new();
    stdout.insert("ergodic".into(), serde_json::to_value(&ergodic).expect("serializable"));
    let mut passed = true;

    if opts.probe_uniqueness {
        let start_a = c.initial_allocations();
        let start_b = skewed_start(c);
        let checkpoints = checkpoints(opts.steps);
        let r = uniqueness_probe(&model, &start_a, &start_b, (probe_seeds[0], probe_seeds[1]), &checkpoints)?;
        let scale = c.resources.iter().map(|r| r.capacity).fold(0.0, f64::max);
        let report = UniquenessJson::new(&r, probe_seeds, (start_a, start_b), scale, opts.threshold);
        passed &= report.passed;
        stdout.insert("uniqueness".into(), serde_json::to_value(&report).expect("serializable"));
        artifacts.push(Artifact::json("uniqueness.json", &report));
    }

    if opts.contraction {
        if n < 2 {
            return Err(CliError::Validation(vec!["--contraction needs at least two agents".into()]));
        }
        let z = init_state(c, &c.initial_allocations())?;
        let w = init_state(c, &skewed_start(c))?;
        let horizon = horizon_from_psi(c);
        let mut rng = seeded_rng(contraction_seed);
        let r = contraction_on_average(&model, &z, &w, horizon, opts.samples, opts.mu, &mut rng)?;
        let report = ContractionJson::new(&r, contraction_seed);
        passed &= report.passed;
        stdout.insert("contraction".into(), serde_json::to_value(&report).expect("serializable"));
        artifacts.push(Artifact::json("contraction.json", &report));
    }

    Ok(Output { report: Value::Object(stdout), text: None, artifacts, passed })
}

/// Roughly logarithmic checkpoints ending at `steps`.
fn checkpoints(steps: usize) -> Vec<usize> {
    let mut out: Vec<usize> = [1000, 100, 10].iter().map(|d| steps / d).filter(|&k| k > 0).collect();
    out.push(steps);
    out.dedup();
    out
}

fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; rows.first().map_or(0, Vec::len)];
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r) {
            *a += x;
        }
    }
    let k = rows.len().max(1) as f64;
    acc.into_iter().map(|a| a / k).collect()
}

/// One row per `(step, resource, subblock)`: step 0 lists every resource,
/// later steps only the block of the resource that fired.
fn trajectory_csv(trajectory: &[Vec<f64>], fired: &[usize], n: usize, window: usize, m: usize) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["step", "resource", "subblock"].map(String::from).to_vec();
    header.extend((0..n).map(|i| format!("agent_{i}")));
    w.write_record(&header).expect("in-memory write");
    let row = |w: &mut csv::Writer<Vec<u8>>, step: usize, j: usize, xi: &[f64]| {
        let block = &xi[j * n * window..(j + 1) * n * window];
        for (r, sub) in block.chunks(n).enumerate() {
            let mut rec = vec![step.to_string(), j.to_string(), (r + 1).to_string()];
            rec.extend(sub.iter().map(f64::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
    };
    for j in 0..m {
        row(&mut w, 0, j, &trajectory[0]);
    }
    for (k, &j) in fired.iter().enumerate() {
        row(&mut w, k + 1, j, &trajectory[k + 1]);
    }
    w.into_inner().expect("in-memory flush")
}

pub fn oracle(cfg: &LoadedConfig, tol: f64, max_iters: usize) -> Result<Output, CliError> {
    let opts = SolverOptions { tol, max_iters, ..SolverOptions::default() };
    let sol = solve_optimal(&cfg.config, &cfg.costs, opts, None)?;
    let report = OracleReport::new(&sol, tol);
    Ok(Output::json(&report, vec![Artifact::json("oracle.json", &report)], true))
}

fn read_json(path: &Path) -> Result<(Value, String), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::missing(path, e))?;
    let value =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
    Ok((value, sha256_hex(&bytes)))
}

fn matrix_field(value: &Value, field: &str, path: &Path, shape: (usize, usize)) -> Result<Vec<Vec<f64>>, CliError> {
    let bad = |why: &str| CliError::Validation(vec![format!("{}: field {field:?} {why}", path.display())]);
    let rows = value.get(field).and_then(Value::as_array).ok_or_else(|| bad("is missing"))?;
    if rows.len() != shape.0 {
        return Err(bad(&format!("needs {} rows", shape.0)));
    }
    rows.iter()
        .map(|r| {
            let r = r
                .as_array()
                .filter(|r| r.len() == shape.1)
                .ok_or_else(|| bad(&format!("needs rows of {}", shape.1)))?;
            r.iter().map(|x| x.as_f64().ok_or_else(|| bad("has entries that are not numbers"))).collect()
        })
        .collect()
}

pub fn compare(
    cfg: &LoadedConfig,
    means: &Path,
    oracle_path: Option<&Path>,
    tolerance: Option<f64>,
) -> Result<Output, CliError> {
    let c = &cfg.config;
    let shape = (c.m(), c.n());
    let (means_json, means_sha256) = read_json(means)?;
    let oracle_input = oracle_path.map(read_json).transpose()?;
    let mean = matrix_field(&means_json, "long_run_mean", means, shape)?;
    let (optimal, oracle_sha256) = match (oracle_input, oracle_path) {
        (Some((value, digest)), Some(path)) => (matrix_field(&value, "allocation", path, shape)?, Some(digest)),
        _ => {
            let sol = solve_optimal(c, &cfg.costs, SolverOptions::default(), None)?;
            (transpose(&sol.y), None)
        }
    };

    let abs_diff: Vec<Vec<f64>> =
        mean.iter().zip(&optimal).map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect()).collect();
    let max_abs_diff_relative: Vec<f64> =
        abs_diff.iter().zip(&c.resources).map(|(d, r)| d.iter().cloned().fold(0.0, f64::max) / r.capacity).collect();
    let social_cost_mean = cfg.costs.social_cost(&transpose(&mean))?;
    let social_cost_optimal = cfg.costs.social_cost(&transpose(&optimal))?;
    let passed = tolerance.is_none_or(|t| max_abs_diff_relative.iter().all(|&d| d <= t));
    let report = CompareReport {
        means_sha256,
        oracle_sha256,
        long_run_mean: mean,
        optimal,
        abs_diff,
        max_abs_diff_relative,
        social_cost_mean,
        social_cost_optimal,
        relative_gap: social_cost_mean / social_cost_optimal - 1.0,
        tolerance,
        passed,
    };
    Ok(Output::json(&report, vec![Artifact::json("compare.json", &report)], passed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MatrixKind {
    /// The `n × n` AIMD matrix.
    A,
    /// Its `nT × nT` lifting.
    D,
    /// The full block-diagonal operator over all resources.
    U,
}

pub fn matrix_dump(cfg: &LoadedConfig, resource: usize, pattern: &str, kind: MatrixKind) -> Result<Output, CliError> {
    let c = &cfg.config;
    let invalid = |msg: String| CliError::Validation(vec![msg]);
    if resource >= c.m() {
        return Err(invalid(format!("--resource {resource} out of range for m = {}", c.m())));
    }
    if pattern.len() != c.n() || !pattern.chars().all(|ch| ch == '0' || ch == '1') {
        return Err(invalid(format!("--pattern needs {} characters of 0 (keep) or 1 (back off)", c.n())));
    }
    let bits = BackoffPattern::new(pattern.chars().map(|ch| ch == '1').collect());
    let beta = c.resources[resource].beta;
    let a = AimdMatrix::new(bits, beta)?;
    let (matrix, name): (Matrix, _) = match kind {
        MatrixKind::A => (a.matrix().clone(), "A"),
        MatrixKind::D => (build_d(&a, c.window())?.matrix().clone(), "D"),
        MatrixKind::U => (build_u(&build_d(&a, c.window())?, resource, c.m())?.to_dense(), "U"),
    };
    let header = MatrixHeader {
        n: c.n(),
        window: c.window(),
        m: c.m(),
        resource,
        kind: name,
        pattern: pattern.to_string(),
        beta,
        rows: matrix.rows(),
        cols: matrix.cols(),
    };
    let mut text = serde_json::to_string(&header).expect("serializable");
    text.push('\n');
    for r in 0..matrix.rows() {
        let cells: Vec<String> = matrix.row(r).iter().map(f64::to_string).collect();
        text.push_str(&cells.join(" "));
        text.push('\n');
    }
    Ok(Output {
        report: serde_json::to_value(&header).expect("serializable"),
        artifacts: vec![Artifact::new("matrix.txt", text.clone().into_bytes())],
        text: Some(text),
        passed: true,
    })
}
