use std::path::Path;

use anyhow::{bail, Context, Result};
use randsum::data_io::{check_moisture, read_panel_table, PanelTable};
use randsum::{FitOptions, PanelSeries};
use serde::{Deserialize, Serialize};

use crate::open;

fn default_p() -> usize {
    1
}

/// A model specification for `fit` and `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Defaults to the spec file stem.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Column expressions; all panel columns when absent.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    /// Extra `a:b` product columns appended after `covariates`.
    #[serde(default)]
    pub interactions: Vec<String>,
    /// Fit window `[start, end]`; by default every year after the first `p`.
    #[serde(default)]
    pub window: Option<(i32, i32)>,
    #[serde(default)]
    pub delta_floor: Option<f64>,
    #[serde(default)]
    pub grad_tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

impl ModelSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let mut spec: ModelSpec =
            serde_json::from_reader(open(path)?).with_context(|| format!("invalid model spec {}", path.display()))?;
        if spec.name.is_none() {
            spec.name = Some(path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        }
        Ok(spec)
    }

    pub fn options(&self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions {
            delta_floor: self.delta_floor.unwrap_or(d.delta_floor),
            grad_tol: self.grad_tol.unwrap_or(d.grad_tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
        }
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("model")
    }

    /// Column expressions after defaulting, in design order.
    pub fn columns(&self, table: &PanelTable) -> Vec<String> {
        let mut cols = self.covariates.clone().unwrap_or_else(|| table.columns.clone());
        cols.extend(self.interactions.iter().cloned());
        cols
    }

    pub fn validate(&self) -> Result<()> {
        let factors = self.covariates.iter().flatten().chain(&self.interactions).flat_map(|c| c.split(':'));
        check_moisture(factors)?;
        if let Some((a, b)) = self.window {
            if a > b {
                bail!("window: start {a} is after end {b}");
            }
        }
        Ok(())
    }

    /// Builds the design for this spec from a parsed panel table.
    pub fn panel(&self, table: &PanelTable) -> Result<PanelSeries> {
        self.validate()?;
        let cols = self.columns(table);
        table.to_panel(self.p, self.window, Some(&cols)).with_context(|| format!("model {}", self.name()))
    }
}

pub fn load_panel(path: &Path) -> Result<PanelTable> {
    read_panel_table(open(path)?).with_context(|| format!("invalid panel {}", path.display()))
}
