//! Flat TOML config files merged with command-line flags.

use std::path::Path;

use bdy_core::{validate_params, Cap, ModelParams, RawParams};
use serde::Deserialize;

use crate::CliError;

/// Every key accepted in a config file. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub a: Option<i64>,
    pub mu: Option<i64>,
    pub b: Option<Cap>,
    pub n_agents: Option<i64>,
    pub n_max: Option<i64>,
    pub seed: Option<u64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub samples: Option<Vec<f64>>,
    // convergence
    pub fit_from: Option<f64>,
    pub fit_to: Option<f64>,
    pub fit_lo: Option<f64>,
    pub fit_hi: Option<f64>,
    // propagation of chaos
    pub n_list: Option<Vec<usize>>,
    pub t: Option<f64>,
    pub replicas: Option<usize>,
    // Gini sweep
    pub a_list: Option<Vec<u64>>,
    pub b_list: Option<Vec<Cap>>,
    pub n_max_infinite: Option<usize>,
    // generator oracle
    pub max_total_wealth: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            let msg = e
                .to_string()
                .lines()
                .rfind(|l| !l.trim().is_empty())
                .unwrap_or("")
                .trim()
                .to_string();
            CliError::Validation(format!("config `{}`: {msg}", path.display()))
        })
    }
}

/// Model flags after merging, before validation.
#[derive(Debug, Clone, Default)]
pub struct ModelFlags {
    pub a: Option<i64>,
    pub mu: Option<i64>,
    pub b: Option<String>,
    pub n_agents: Option<i64>,
    pub n_max: Option<i64>,
}

/// Flags win over the file; anything still missing takes the defaults
/// `a = 5, mu = 7, b = 10`.
pub fn resolve_params(
    flags: &ModelFlags,
    file: &FileConfig,
    defaults: (i64, i64, u64),
) -> Result<ModelParams, CliError> {
    let b = match (&flags.b, file.b) {
        (Some(s), _) => s.parse()?,
        (None, Some(b)) => b,
        (None, None) => Cap::Finite(defaults.2),
    };
    let raw = RawParams {
        a: flags.a.or(file.a).or(Some(defaults.0)),
        mu: flags.mu.or(file.mu).or(Some(defaults.1)),
        b: Some(b),
        n_agents: flags.n_agents.or(file.n_agents),
        n_max: flags.n_max.or(file.n_max),
    };
    Ok(validate_params(&raw)?)
}
