//! Run configuration read from `--config`; command-line flags override it.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use vpk_core::extraction::ExtractionConfig;
use vpk_core::verify::correctness::DEFAULT_NODE_BUDGET;
use vpk_core::verify::stability::CertifyOptions;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub t_max: Option<usize>,
    pub budget: usize,
    /// Cart-pole angle bound for bounded correctness.
    pub y0: f64,
    pub certify: CertifyOptions,
    /// Degree of the cart-pole Taylor model used for stability.
    pub taylor_degree: u32,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            t_max: None,
            budget: DEFAULT_NODE_BUDGET,
            y0: 0.2094,
            certify: CertifyOptions::default(),
            taylor_degree: 5,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: Option<String>,
    pub env_params: Option<Value>,
    /// `lqr`, `ilqr`, `scripted` or a path to an oracle file.
    pub oracle: Option<String>,
    pub extraction: ExtractionConfig,
    pub verification: VerifyConfig,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}
