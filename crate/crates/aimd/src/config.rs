//! TOML configuration files.
//!
//! ```toml
//! [system]
//! n = 2          # agents
//! m = 1          # resources
//! T = 3          # averaging window, in capacity events
//! seed = 42
//!
//! [[resources]]
//! capacity = 1.0     # in `unit`
//! alpha = 0.1        # `unit` per second, per agent
//! beta = 0.5
//! gamma = "auto"     # or a positive number
//! lambda_min = 0.05
//! lambda_max = 0.95
//! unit = "Mbit/s"
//!
//! [[agents]]
//! cost = { family = "quadratic", params = { c = [1.0], b = [0.1] } }
//!
//! [engine]
//! average_mode = "windowed"       # or "cumulative"
//! initial = "interior-default"    # or one row of agent allocations per resource
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aimd_core::model::{
    AgentCost, AverageMode, CostModel, Exponential, Gamma, Quadratic, ResourceParams, SystemConfig, ValidConfig,
};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    system: SystemSection,
    resources: Vec<ResourceSection>,
    agents: Vec<AgentSection>,
    #[serde(default)]
    engine: EngineSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    n: usize,
    m: usize,
    #[serde(rename = "T")]
    window: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResourceSection {
    capacity: f64,
    alpha: f64,
    beta: f64,
    #[serde(default)]
    gamma: Option<GammaValue>,
    #[serde(default = "default_lambda_min")]
    lambda_min: f64,
    #[serde(default = "default_lambda_max")]
    lambda_max: f64,
    #[serde(default = "default_unit")]
    unit: String,
}

fn default_lambda_min() -> f64 {
    0.05
}

fn default_lambda_max() -> f64 {
    0.95
}

fn default_unit() -> String {
    "units".into()
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GammaValue {
    Fixed(f64),
    Keyword(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentSection {
    cost: CostEntry,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
enum CostEntry {
    /// `Σ_j c_j x_j² / 2 + b_j x_j`.
    Quadratic {
        c: Vec<f64>,
        #[serde(default)]
        b: Option<Vec<f64>>,
    },
    /// `Σ_j a_j exp(d_j x_j)`.
    Exponential { a: Vec<f64>, d: Vec<f64> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EngineSection {
    #[serde(default)]
    average_mode: Option<String>,
    #[serde(default)]
    initial: Option<InitialValue>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum InitialValue {
    Keyword(String),
    Matrix(Vec<Vec<f64>>),
}

/// A validated configuration together with what is needed to reproduce it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    /// SHA-256 of the file contents.
    pub digest: String,
    pub config: ValidConfig,
    pub costs: CostModel,
    pub units: Vec<String>,
}

impl LoadedConfig {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }
}

/// Reads and validates `path`; `seed` replaces `system.seed` when given.
pub fn load(path: &Path, seed: Option<u64>) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
    let mut loaded = parse(&text, seed)?;
    loaded.path = path.to_path_buf();
    loaded.digest = crate::manifest::sha256_hex(text.as_bytes());
    Ok(loaded)
}

pub fn parse(text: &str, seed: Option<u64>) -> Result<LoadedConfig, CliError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
    let mut violations = Vec::new();

    if file.system.m != file.resources.len() {
        violations.push(format!("system.m: {} but {} [[resources]] entries", file.system.m, file.resources.len()));
    }
    if file.system.n != file.agents.len() {
        violations.push(format!("system.n: {} but {} [[agents]] entries", file.system.n, file.agents.len()));
    }

    let mut resources = Vec::with_capacity(file.resources.len());
    for (j, r) in file.resources.iter().enumerate() {
        let gamma = match &r.gamma {
            None => Gamma::Auto,
            Some(GammaValue::Fixed(g)) => Gamma::Fixed(*g),
            Some(GammaValue::Keyword(k)) if k == "auto" => Gamma::Auto,
            Some(GammaValue::Keyword(k)) => {
                violations.push(format!("resources[{j}].gamma: expected \"auto\" or a number, got {k:?}"));
                Gamma::Auto
            }
        };
        resources.push(
            ResourceParams::new(r.capacity, r.alpha, r.beta)
                .with_gamma(gamma)
                .with_lambda_bounds(r.lambda_min, r.lambda_max),
        );
    }

    let mut agents: Vec<Arc<dyn AgentCost>> = Vec::with_capacity(file.agents.len());
    for (i, a) in file.agents.iter().enumerate() {
        let dims = match &a.cost {
            CostEntry::Quadratic { c, b } => {
                let mut d = vec![c.len()];
                d.extend(b.as_ref().map(Vec::len));
                d
            }
            CostEntry::Exponential { a, d } => vec![a.len(), d.len()],
        };
        if dims.iter().any(|&d| d != file.system.m) {
            violations.push(format!("agents[{i}].cost.params: every vector needs {} entries", file.system.m));
            continue;
        }
        let built: Result<Arc<dyn AgentCost>, aimd_core::Error> = match &a.cost {
            CostEntry::Quadratic { c, b } => {
                let b = b.clone().unwrap_or_else(|| vec![0.0; c.len()]);
                Quadratic::new(c.clone(), b).map(|q| Arc::new(q) as Arc<dyn AgentCost>)
            }
            CostEntry::Exponential { a, d } => {
                Exponential::new(a.clone(), d.clone()).map(|e| Arc::new(e) as Arc<dyn AgentCost>)
            }
        };
        match built {
            Ok(f) => agents.push(f),
            Err(e) => violations.push(format!("agents[{i}].cost: {e}")),
        }
    }

    let average_mode = match file.engine.average_mode.as_deref() {
        None | Some("windowed") => AverageMode::Windowed,
        Some("cumulative") => AverageMode::Cumulative,
        Some(other) => {
            violations.push(format!("engine.average_mode: expected \"windowed\" or \"cumulative\", got {other:?}"));
            AverageMode::Windowed
        }
    };

    let mut cfg = SystemConfig::new(file.system.n, resources, file.system.window)
        .with_seed(seed.unwrap_or(file.system.seed))
        .with_average_mode(average_mode);
    match file.engine.initial {
        None => {}
        Some(InitialValue::Keyword(k)) if k == "interior-default" => {}
        Some(InitialValue::Keyword(k)) => {
            violations.push(format!("engine.initial: expected \"interior-default\" or a matrix, got {k:?}"))
        }
        Some(InitialValue::Matrix(rows)) => cfg = cfg.with_initial(rows),
    }

    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    violations.extend(cfg.violations().iter().map(|v| v.to_string()));
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    let costs = CostModel::new(agents).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
    let config = cfg.validate().map_err(CliError::from_core)?;
    Ok(LoadedConfig {
        path: PathBuf::new(),
        digest: crate::manifest::sha256_hex(text.as_bytes()),
        config,
        costs,
        units: file.resources.into_iter().map(|r| r.unit).collect(),
    })
}
