use serde::Serialize;
use std::path::Path;

use super::config::{RunConfig, MANIFEST_FORMAT};
use super::CliError;
use crate::dynamics::Discretization;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMeta {
    pub nodes: usize,
    pub dx: f64,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub gamma_hat: f64,
    pub beta_node: usize,
    pub memory_nodes: usize,
}

impl GridMeta {
    pub fn new(disc: &Discretization) -> Self {
        let g = &disc.grid;
        Self {
            nodes: g.nodes,
            dx: g.dx,
            alpha_hat: g.alpha_hat,
            beta_hat: g.beta_hat,
            gamma_hat: g.gamma_hat,
            beta_node: g.beta_node,
            memory_nodes: disc.memory_nodes(),
        }
    }
}

/// Everything needed to reproduce a run. Passing the file back as `--config`
/// reruns it with the echoed configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub format: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridMeta>,
    pub summary: toml::Table,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, seed: u64, workers: usize) -> Self {
        Self {
            format: MANIFEST_FORMAT,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            workers,
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
            grid: None,
            summary: toml::Table::new(),
            config: config.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Runtime(format!("manifest serialization: {e}")))?;
        std::fs::write(dir.join("manifest.toml"), text)
            .map_err(|e| CliError::Runtime(format!("cannot write manifest: {e}")))
    }
}
