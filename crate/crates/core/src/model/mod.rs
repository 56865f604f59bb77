//! Shared domain types: system configuration and agent cost functions.

mod config;
mod cost;

pub use config::{AverageMode, ConfigViolation, Gamma, ResourceParams, SystemConfig, ValidConfig};
pub use cost::{check_gradient, AgentCost, CostModel, Exponential, Quadratic};
