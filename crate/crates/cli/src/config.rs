//! Optional key-value configuration file (TOML syntax, flat keys).
//!
//! ```text
//! # channel defaults
//! eta = 0.5
//! nbar_b = 1.0
//! delta = 1.0
//! # Q calibration; computed from the Fock oracle when absent
//! q0 = 0.19
//! q1 = 0.08
//! # truncation overrides
//! conv_tol = 1e-8
//! k_max_two_mode = 48
//! ```
//!
//! Command-line flags take precedence over every key.

use anyhow::{Context, Result};
use covert_core::TruncationConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub eta: Option<f64>,
    pub nbar_b: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub n: Option<u64>,
    pub nbar_s: Option<f64>,
    pub q0: Option<f64>,
    pub q1: Option<f64>,
    pub tail_tol: Option<f64>,
    pub conv_tol: Option<f64>,
    pub step: Option<usize>,
    pub k_max_single: Option<usize>,
    pub k_max_two_mode: Option<usize>,
    pub leakage_bound: Option<f64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn truncation(&self) -> TruncationConfig {
        let d = TruncationConfig::default();
        TruncationConfig {
            tail_tol: self.tail_tol.unwrap_or(d.tail_tol),
            conv_tol: self.conv_tol.unwrap_or(d.conv_tol),
            step: self.step.unwrap_or(d.step),
            k_max_single: self.k_max_single.unwrap_or(d.k_max_single),
            k_max_two_mode: self.k_max_two_mode.unwrap_or(d.k_max_two_mode),
            leakage_bound: self.leakage_bound.unwrap_or(d.leakage_bound),
        }
    }
}
