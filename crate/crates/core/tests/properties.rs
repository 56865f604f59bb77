use std::sync::Arc;

use aimd_core::chain::{uniqueness_probe, ChainModel};
use aimd_core::engine::{run_simulation, run_simulation_with_policy, DropPolicy};
use aimd_core::matrix::{
    build_d, lifted_product,
    verify::{IdentityForFullBackoff, PropertySuite, StandardBuilder},
    AimdMatrix, BackoffPattern, Matrix,
};
use aimd_core::model::{AgentCost, CostModel, Exponential, Quadratic, ResourceParams, SystemConfig};
use aimd_core::oracle::{project_capacity_simplex, solve_optimal, SolverOptions};
use aimd_core::seeded_rng;
use proptest::prelude::*;
use rand::Rng;

fn two_resource(seed: u64, window: usize) -> (aimd_core::model::ValidConfig, CostModel) {
    let cfg =
        SystemConfig::new(3, vec![ResourceParams::new(1.0, 0.1, 0.5), ResourceParams::new(3.0, 0.25, 0.8)], window)
            .with_seed(seed)
            .validate()
            .unwrap();
    let costs = CostModel::new(vec![
        Arc::new(Quadratic::new(vec![1.0, 0.3], vec![0.1, 0.2]).unwrap()) as Arc<dyn AgentCost>,
        Arc::new(Quadratic::new(vec![2.0, 0.5], vec![0.05, 0.1]).unwrap()),
        Arc::new(Exponential::new(vec![0.4, 0.3], vec![1.2, 0.5]).unwrap()),
    ])
    .unwrap();
    (cfg, costs)
}

#[test]
fn simulation_is_deterministic() {
    let (cfg, costs) = two_resource(42, 3);
    let a = run_simulation(&cfg, &costs, 3000).unwrap();
    let b = run_simulation(&cfg, &costs, 3000).unwrap();
    assert_eq!(a, b);
    let (other, _) = two_resource(43, 3);
    assert_ne!(run_simulation(&other, &costs, 3000).unwrap().records, a.records);
}

#[test]
fn constant_probabilities_match_backoff_frequencies() {
    let (cfg, costs) = two_resource(7, 2);
    let lambda = vec![vec![0.2, 0.5, 0.8], vec![0.1, 0.35, 0.6]];
    let trace = run_simulation_with_policy(&cfg, &costs, DropPolicy::Constant(lambda.clone()), 60_000).unwrap();
    for (j, row) in lambda.iter().enumerate() {
        let events: Vec<usize> = trace.resource_events(j).collect();
        assert!(events.len() >= 10_000, "resource {j}: {} events", events.len());
        for (i, &l) in row.iter().enumerate() {
            let hits = events.iter().filter(|&&k| trace.records[k].backoff.backs_off(i)).count();
            let k = events.len() as f64;
            let sigma = (l * (1.0 - l) / k).sqrt();
            let freq = hits as f64 / k;
            assert!((freq - l).abs() <= 3.0 * sigma, "resource {j} agent {i}: {freq} vs {l}");
        }
    }
}

#[test]
fn budget_balance_between_events() {
    let (cfg, costs) = two_resource(9, 4);
    let trace = run_simulation(&cfg, &costs, 5000).unwrap();
    let mut rng = seeded_rng(1);
    for j in 0..cfg.m() {
        let p = &cfg.resources[j];
        let events: Vec<usize> = trace.resource_events(j).collect();
        for &k in &events {
            let r = &trace.records[k];
            for _ in 0..4 {
                let t = rng.random_range(0.0..=1.0) * r.gap;
                let total: f64 = r.post.iter().map(|x| x + p.alpha * t).sum();
                assert!(total <= p.capacity * (1.0 + 1e-12));
            }
        }
        // Event times strictly increase on one resource unless an all-keep re-draw
        // happened at the same instant.
        for w in events.windows(2) {
            let (a, b) = (&trace.records[w[0]], &trace.records[w[1]]);
            assert!(b.time > a.time || (a.backoff.is_none() && b.time == a.time));
        }
    }
}

/// Row block `r` of `D^p` for a lifted matrix with constant `A`, derived by
/// induction on `p`: for `r ≤ p` it is `(1/r) Σ_{q=p−r+1}^{p} A^q` in the
/// first block column; for `r > p` it is `(1/r) Σ_{q=1}^{p} A^q` in the first
/// column plus `((r−p)/r) I` in column `r − p`.
fn closed_form_power(a: &Matrix, window: usize, p: usize) -> Matrix {
    let n = a.rows();
    let mut powers = vec![Matrix::identity(n)];
    for q in 1..=p {
        powers.push(a * &powers[q - 1]);
    }
    let eye = Matrix::identity(n);
    let mut out = Matrix::zeros(n * window, n * window);
    for r in 1..=window {
        let row = (r - 1) * n;
        let lo = if r <= p { p - r + 1 } else { 1 };
        for power in &powers[lo..=p] {
            out.add_block(row, 0, power, 1.0 / r as f64);
        }
        if r > p {
            out.add_block(row, (r - p - 1) * n, &eye, (r - p) as f64 / r as f64);
        }
    }
    out
}

#[test]
fn lifted_powers_match_closed_form() {
    let mut rng = seeded_rng(19);
    for window in 1..=5 {
        for n in [1, 2, 3] {
            for p in 1..=7 {
                let pattern = BackoffPattern::new((0..n).map(|_| rng.random_bool(0.5)).collect());
                let a = AimdMatrix::new(pattern, rng.random_range(0.1..0.9)).unwrap();
                let d = build_d(&a, window).unwrap();
                let dense = lifted_product(&vec![d; p]).unwrap();
                let closed = closed_form_power(a.matrix(), window, p);
                assert!(dense.max_abs_diff(&closed) < 1e-13, "T={window} n={n} p={p}");
            }
        }
    }
    // Hand cases: T = 2, n = 1, A = [1] squared is [[1,0],[1,0]].
    let one = build_d(&AimdMatrix::new(BackoffPattern::full(1), 0.5).unwrap(), 2).unwrap();
    assert_eq!(lifted_product(&[one.clone(), one]).unwrap().to_rows(), vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
}

#[test]
fn property_suite_default_and_single_agent() {
    let mut rng = seeded_rng(23);
    for (n, window) in [(1, 3), (2, 2), (4, 3)] {
        let suite = PropertySuite::new(n, window, vec![0.5, 0.75], 300);
        for o in suite.run(&StandardBuilder, &mut rng).unwrap() {
            assert!(o.passed, "n={n}: {} worst {}", o.name, o.worst);
        }
    }
    let broken = PropertySuite::new(3, 2, vec![0.5], 300).run(&IdentityForFullBackoff, &mut rng).unwrap();
    assert!(broken.iter().any(|o| !o.passed && o.witness.is_some()));
}

#[test]
fn uniqueness_distance_shrinks_with_steep_backoff() {
    let cfg = SystemConfig::new(2, vec![ResourceParams::new(1.0, 0.1, 0.01).with_lambda_bounds(0.5, 0.95)], 2)
        .with_seed(3)
        .validate()
        .unwrap();
    let costs = CostModel::identical(2, Quadratic::new(vec![1.0], vec![0.1]).unwrap()).unwrap();
    let model = ChainModel::new(cfg, costs).unwrap();
    let report =
        uniqueness_probe(&model, &[vec![0.05, 0.9]], &[vec![0.8, 0.1]], (5, 6), &[100, 1_000, 10_000, 100_000])
            .unwrap();
    let d: Vec<f64> = report.trend.iter().map(|t| t.1).collect();
    assert!(d[3] < d[2] && d[2] < d[1] && d[1] < d[0], "{d:?}");
    assert!(report.distance < 0.02);

    let same = uniqueness_probe(&model, &[vec![0.3, 0.3]], &[vec![0.3, 0.3]], (1, 1), &[500]).unwrap();
    assert_eq!(same.distance, 0.0);
}

#[test]
fn optimum_independent_of_start() {
    let (cfg, costs) = two_resource(0, 1);
    let opts = SolverOptions::default();
    let mut rng = seeded_rng(31);
    let reference = solve_optimal(&cfg, &costs, opts, None).unwrap();
    for _ in 0..10 {
        let mut start = vec![vec![0.0; 2]; 3];
        for (j, r) in cfg.resources.iter().enumerate() {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..2.0)).collect();
            for (i, v) in project_capacity_simplex(&raw, r.capacity).into_iter().enumerate() {
                start[i][j] = v;
            }
        }
        let sol = solve_optimal(&cfg, &costs, opts, Some(start)).unwrap();
        for (a, b) in sol.y.iter().flatten().zip(reference.y.iter().flatten()) {
            assert!((a - b).abs() <= 10.0 * opts.tol.max(1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplex_projection_is_feasible_and_idempotent(
        v in proptest::collection::vec(-5.0f64..5.0, 1..8),
        c in 0.1f64..10.0,
    ) {
        let p = project_capacity_simplex(&v, c);
        prop_assert!((p.iter().sum::<f64>() - c).abs() <= 1e-12 * c.max(1.0) * v.len() as f64);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let pp = project_capacity_simplex(&p, c);
        for (a, b) in p.iter().zip(&pp) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn conservation_holds_for_random_configs(
        n in 1usize..5,
        beta in 0.05f64..0.95,
        alpha in 0.01f64..1.0,
        cap in 0.5f64..5.0,
        window in 1usize..5,
        seed in any::<u64>(),
    ) {
        let cfg = SystemConfig::new(n, vec![ResourceParams::new(cap, alpha, beta)], window)
            .with_seed(seed)
            .validate()
            .unwrap();
        let costs = CostModel::identical(n, Quadratic::new(vec![1.0], vec![0.1]).unwrap()).unwrap();
        let trace = run_simulation(&cfg, &costs, 300).unwrap();
        let psi = (1.0 - beta) * cap / (n as f64 * alpha);
        for r in &trace.records {
            prop_assert!((r.pre.iter().sum::<f64>() - cap).abs() <= 1e-9 * cap);
            prop_assert!(r.lambda.iter().all(|&l| (0.05..=0.95).contains(&l)));
            if r.backoff.is_full() {
                prop_assert!((r.gap - psi).abs() <= 1e-12 * psi);
            }
        }
    }
}
