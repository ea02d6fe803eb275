use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use randsum::data_io::write_panel;
use randsum::simulator::{simulate_replicate, SimulationDesign};
use randsum::SimulationConfig;
use serde::{Deserialize, Serialize};

use crate::{create, manifest_path, open, seed_override, write_json, EXIT_OK};

/// Addresses of the random substreams, as `root(seed)` child paths.
const STREAM_MAP: [(&str, &str); 6] = [
    ("design/K/0/site", "omega draw for each site"),
    ("design/K/1/site", "Poisson size mean for each site"),
    ("replicate/r/site/step/0", "covariates (site = 2^64-1 when shared)"),
    ("replicate/r/site/step/1", "sample size"),
    ("replicate/r/site/step/2", "unit draws"),
    ("tags", "design = 0, replicate = 1; step counts from the start of burn-in"),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationManifest {
    pub config: SimulationConfig,
    pub design: SimulationDesign,
    pub parameter_names: Vec<String>,
    pub true_theta: Vec<f64>,
    pub replicate: u64,
    pub stream_map: Vec<(String, String)>,
}

pub(crate) fn load_config(path: &Path) -> Result<SimulationConfig> {
    let value: serde_json::Value =
        serde_json::from_reader(open(path)?).with_context(|| format!("invalid JSON in {}", path.display()))?;
    parse_config(value)
}

pub(crate) fn parse_config(value: serde_json::Value) -> Result<SimulationConfig> {
    let mut config: SimulationConfig = serde_json::from_value(value).context("invalid simulation config")?;
    if let Some(seed) = seed_override()? {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

pub(crate) fn stream_map() -> Vec<(String, String)> {
    STREAM_MAP.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

pub fn cmd_simulate(config_path: &Path, out: &Path) -> Result<i32> {
    let config = load_config(config_path)?;
    let design = config.resolve()?;
    let panel = simulate_replicate(&config, &design, 0)?;
    let mut w = create(out)?;
    write_panel(&panel, &mut w)?;
    w.flush()?;
    let theta = config.true_theta(&design);
    let manifest = SimulationManifest {
        parameter_names: theta.layout().names(&panel.site_ids(), panel.covariate_names()),
        true_theta: theta.to_vec(),
        config,
        design,
        replicate: 0,
        stream_map: stream_map(),
    };
    write_json(&manifest_path(out), &manifest)?;
    Ok(EXIT_OK)
}
