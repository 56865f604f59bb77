use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn config(name: &str) -> String {
    manifest_dir().join("configs").join(name).display().to_string()
}

fn aimd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aimd")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn assert_schema(schema: &str, value: &Value) {
    let schema = read_json(&manifest_dir().join("schemas").join(format!("{schema}.schema.json")));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

fn run_ok(args: &[&str]) -> Output {
    let out = aimd(args);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn check_manifest(dir: &Path, expected: &[&str]) -> Value {
    let manifest = read_json(&dir.join("manifest.json"));
    assert_schema("manifest", &manifest);
    let listed: Vec<&str> =
        manifest["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap()).collect();
    assert_eq!(listed, expected);
    for a in manifest["artifacts"].as_array().unwrap() {
        let bytes = fs::read(dir.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(a["sha256"].as_str().unwrap(), aimd::manifest::sha256_hex(&bytes));
    }
    manifest
}

#[test]
fn simulate_symmetric_pair() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("sim");
    let out = run_ok(&["simulate", &config("symmetric.toml"), "--events", "10000", "--out", dir.to_str().unwrap()]);
    let summary = read_json(&dir.join("summary.json"));
    assert_eq!(stdout_json(&out), summary);
    assert_schema("summary", &summary);
    check_manifest(&dir, &["trace.csv", "summary.json"]);

    for x in summary["long_run_mean"][0].as_array().unwrap() {
        assert!((x.as_f64().unwrap() - 0.5).abs() < 0.02);
    }
    assert_eq!(summary["event_count"][0], 10000);

    let csv = fs::read_to_string(dir.join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "event_index,time,resource,agent,pre_alloc,lambda,backoff,post_alloc");
    assert_eq!(lines.count(), 2 * 10000);
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = config("asymmetric.toml");
    let mut digests = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        run_ok(&["simulate", &cfg, "--events", "3000", "--seed", "5", "--out", dir.to_str().unwrap()]);
        let manifest = check_manifest(&dir, &["trace.csv", "summary.json"]);
        digests.push(manifest["artifacts"].clone());
    }
    assert_eq!(digests[0], digests[1]);
    for file in ["trace.csv", "summary.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(file)).unwrap(),
            fs::read(tmp.path().join("b").join(file)).unwrap()
        );
    }

    let dir = tmp.path().join("c");
    run_ok(&["simulate", &cfg, "--events", "3000", "--seed", "6", "--out", dir.to_str().unwrap()]);
    assert_ne!(check_manifest(&dir, &["trace.csv", "summary.json"])["artifacts"], digests[0]);

    let chain = |name: &str| {
        let dir = tmp.path().join(name);
        // Short runs may fail the probes (exit 2); only the bytes matter here.
        let out = aimd(&[
            "chain",
            &cfg,
            "--steps",
            "500",
            "--probe-uniqueness",
            "--contraction",
            "--samples",
            "50",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!([0, 2].contains(&code(&out)));
        check_manifest(&dir, &["trajectory.csv", "ergodic.json", "uniqueness.json", "contraction.json"])["artifacts"]
            .clone()
    };
    assert_eq!(chain("chain_a"), chain("chain_b"));
}

#[test]
fn zero_events_give_an_empty_trace() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("empty");
    run_ok(&["simulate", &config("symmetric.toml"), "--events", "0", "--out", dir.to_str().unwrap()]);
    let summary = read_json(&dir.join("summary.json"));
    assert_schema("summary", &summary);
    assert_eq!(summary["event_count"][0], 0);
    assert!(summary["long_run_mean"][0][0].is_null());
    assert_eq!(fs::read_to_string(dir.join("trace.csv")).unwrap().lines().count(), 1);
}

#[test]
fn verify_passes_on_sound_builders() {
    for cfg in ["asymmetric.toml", "single_agent.toml"] {
        let out = run_ok(&["verify", &config(cfg), "--trials", "1000"]);
        let report = stdout_json(&out);
        assert_schema("verify", &report);
        assert_eq!(report["passed"], true, "{cfg}");
        assert_eq!(report["failures"], 0);
    }
}

#[test]
fn verify_detects_injected_fault() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("verify");
    let out = aimd(&[
        "verify",
        &config("asymmetric.toml"),
        "--trials",
        "300",
        "--inject-fault",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    let report = read_json(&dir.join("verify.json"));
    assert_schema("verify", &report);
    assert_eq!(report["passed"], false);
    let failed: Vec<&Value> =
        report["properties"].as_array().unwrap().iter().filter(|p| p["passed"] == false).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().any(|p| p["witness"].is_array()));
    assert!(failed.iter().any(|p| p["name"].as_str().unwrap().contains("contracts")));

    let help = String::from_utf8(aimd(&["verify", "--help"]).stdout).unwrap();
    assert!(!help.contains("inject"));
}

#[test]
fn chain_reports() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("chain");
    let out = run_ok(&[
        "chain",
        &config("symmetric.toml"),
        "--steps",
        "100000",
        "--probe-uniqueness",
        "--contraction",
        "--out",
        dir.to_str().unwrap(),
    ]);
    let stdout = stdout_json(&out);
    for (key, schema) in [("ergodic", "ergodic"), ("uniqueness", "uniqueness"), ("contraction", "contraction")] {
        let file = read_json(&dir.join(format!("{key}.json")));
        assert_eq!(stdout[key], file);
        assert_schema(schema, &file);
    }

    let means = &stdout["ergodic"]["long_run_mean"][0];
    let (a, b) = (means[0].as_f64().unwrap(), means[1].as_f64().unwrap());
    assert!((a - b).abs() / ((a + b) / 2.0) < 0.02, "{a} {b}");
    assert!(stdout["uniqueness"]["distance_relative"].as_f64().unwrap() < 0.02);
    assert_eq!(stdout["uniqueness"]["passed"], true);
    assert!(stdout["contraction"]["upper_95"].as_f64().unwrap() < 1.0);
    assert_eq!(stdout["contraction"]["passed"], true);

    let csv = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(header["T"], 3);
    assert_eq!(lines.next().unwrap(), "step,resource,subblock,agent_0,agent_1");
    assert_eq!(lines.count(), 3 * (100_000 + 1));
}

#[test]
fn chain_rejects_short_runs() {
    let tmp = TempDir::new().unwrap();
    let out = aimd(&["chain", &config("symmetric.toml"), "--steps", "2", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("window"));
}

#[test]
fn oracle_on_squares() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("oracle");
    let out = run_ok(&["oracle", &config("squares.toml"), "--out", dir.to_str().unwrap()]);
    let report = read_json(&dir.join("oracle.json"));
    assert_eq!(stdout_json(&out), report);
    assert_schema("oracle", &report);
    let y = &report["allocation"][0];
    assert!((y[0].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-6);
    assert!((y[1].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-6);
    assert!(report["kkt"][0].as_f64().unwrap() < 1e-8);
}

#[test]
fn compare_against_the_optimum() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    run_ok(&["simulate", &config("symmetric.toml"), "--events", "100000", "--out", sim.to_str().unwrap()]);
    let out = run_ok(&[
        "compare",
        &config("symmetric.toml"),
        "--means",
        sim.join("summary.json").to_str().unwrap(),
        "--tolerance",
        "0.02",
    ]);
    let report = stdout_json(&out);
    assert_schema("compare", &report);
    assert!(report["oracle_sha256"].is_null());
    for d in report["abs_diff"][0].as_array().unwrap() {
        assert!(d.as_f64().unwrap() < 0.02);
    }

    let cfg = config("asymmetric.toml");
    let oracle = tmp.path().join("oracle");
    let chain = tmp.path().join("chain");
    run_ok(&["oracle", &cfg, "--out", oracle.to_str().unwrap()]);
    run_ok(&["chain", &cfg, "--steps", "20000", "--out", chain.to_str().unwrap()]);
    let dir = tmp.path().join("cmp");
    run_ok(&[
        "compare",
        &cfg,
        "--means",
        chain.join("ergodic.json").to_str().unwrap(),
        "--oracle",
        oracle.join("oracle.json").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    let report = read_json(&dir.join("compare.json"));
    assert_schema("compare", &report);
    check_manifest(&dir, &["compare.json"]);
    let gap = report["relative_gap"].as_f64().unwrap();
    assert!(gap.is_finite() && gap > -1e-9, "{gap}");
    assert!(report["oracle_sha256"].is_string());

    let strict = aimd(&["compare", &cfg, "--means", chain.join("ergodic.json").to_str().unwrap(), "--tolerance", "0"]);
    assert_eq!(code(&strict), 2);
}

#[test]
fn missing_inputs_exit_3() {
    let tmp = TempDir::new().unwrap();
    let nowhere = tmp.path().join("nowhere.json");
    let out = aimd(&["compare", &config("symmetric.toml"), "--means", nowhere.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    let out = aimd(&["oracle", tmp.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn invalid_config_exits_1_with_violations() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(config("symmetric.toml"))
        .unwrap()
        .replace("beta = 0.5", "beta = 1.5")
        .replace("n = 2", "n = 4");
    let path = tmp.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let out = aimd(&["simulate", path.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("system.n"), "{stderr}");
    assert!(!tmp.path().join("o").exists());

    assert_eq!(code(&aimd(&["simulate"])), 1);
    assert_eq!(code(&aimd(&["--help"])), 0);
}

#[test]
fn matrix_dump_format() {
    let out = run_ok(&["matrix", "dump", &config("asymmetric.toml"), "--resource", "1", "--pattern", "101"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_schema("matrix_header", &header);
    assert_eq!((header["rows"].as_u64(), header["kind"].as_str()), (Some(3 * 4 * 2), Some("U")));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(' ').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 24);
    // Resource 0 is untouched; the raw subblock of resource 1 carries A.
    for (r, row) in rows.iter().enumerate().take(12) {
        for (c, &x) in row.iter().enumerate() {
            assert_eq!(x, if r == c { 1.0 } else { 0.0 });
        }
    }
    for c in 12..15 {
        let s: f64 = rows[12..15].iter().map(|r| r[c]).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    let a = run_ok(&["matrix", "dump", &config("asymmetric.toml"), "--pattern", "111", "--kind", "a"]);
    let text = String::from_utf8(a.stdout).unwrap();
    let first: Vec<f64> = text.lines().nth(1).unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
    // Full back-off with β = 0.5 and n = 3: diagonal β + (1−β)/3.
    assert!((first[0] - (0.5 + 0.5 / 3.0)).abs() < 1e-15);

    assert_eq!(code(&aimd(&["matrix", "dump", &config("asymmetric.toml"), "--pattern", "10"])), 1);
}

#[test]
fn pretty_output_is_a_table() {
    let out = run_ok(&["--pretty", "oracle", &config("squares.toml")]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(serde_json::from_str::<Value>(&text).is_err());
    assert!(text.lines().any(|l| l.starts_with("allocation[0]") && l.contains("0.666667")));
}
