use std::io::Write;
use std::path::Path;

use anyhow::Result;
use randsum::estimator::{fit_default, FitReport};
use randsum::FitResult;
use serde::{Deserialize, Serialize};

use crate::spec::{load_panel, ModelSpec};
use crate::{create, fmt_opt, write_json, EXIT_NONCONVERGED, EXIT_OK};

const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutput {
    pub model: String,
    pub window: (i32, i32),
    pub presample_years: Vec<i32>,
    pub covariates: Vec<String>,
    #[serde(flatten)]
    pub report: FitReport,
}

/// A row of the coefficient table; `None` where no standard error exists.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectRow {
    pub parameter: String,
    pub estimate: f64,
    pub tse: Option<f64>,
    pub z: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

pub fn effects_rows(report: &FitReport) -> Vec<EffectRow> {
    report
        .parameters
        .iter()
        .map(|p| EffectRow {
            parameter: p.name.clone(),
            estimate: p.estimate,
            tse: p.tse,
            z: p.tse.map(|s| p.estimate / s),
            ci_lo: p.tse.map(|s| p.estimate - Z_95 * s),
            ci_hi: p.tse.map(|s| p.estimate + Z_95 * s),
        })
        .collect()
}

pub(crate) fn write_effects(path: &Path, report: &FitReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["parameter", "estimate", "tse", "z", "ci_lo", "ci_hi"])?;
    for r in effects_rows(report) {
        w.write_record([
            r.parameter,
            r.estimate.to_string(),
            fmt_opt(r.tse),
            fmt_opt(r.z),
            fmt_opt(r.ci_lo),
            fmt_opt(r.ci_hi),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error())?.flush()?;
    Ok(())
}

/// Fits one spec; the result also carries the window actually used.
pub(crate) fn fit_spec(table: &randsum::data_io::PanelTable, spec: &ModelSpec) -> Result<(FitResult, FitOutput)> {
    let panel = spec.panel(table)?;
    let result = fit_default(&panel, spec.p, &spec.options())?;
    let years = panel.years();
    let output = FitOutput {
        model: spec.name().to_string(),
        window: (years[0], years[years.len() - 1]),
        presample_years: panel.presample_years().to_vec(),
        covariates: panel.covariate_names().to_vec(),
        report: result.report(),
    };
    Ok((result, output))
}

pub fn cmd_fit(panel_path: &Path, spec_path: &Path, out: &Path, effects: Option<&Path>) -> Result<i32> {
    let table = load_panel(panel_path)?;
    let spec = ModelSpec::load(spec_path)?;
    let (result, output) = fit_spec(&table, &spec)?;
    write_json(out, &output)?;
    if let Some(path) = effects {
        write_effects(path, &output.report)?;
    }
    if result.converged {
        Ok(EXIT_OK)
    } else {
        log::warn!("model {} did not converge: {}", spec.name(), result.message);
        Ok(EXIT_NONCONVERGED)
    }
}
