use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use rayon::prelude::*;

use crate::fit::fit_spec;
use crate::spec::{load_panel, ModelSpec};
use crate::{create, EXIT_NONCONVERGED, EXIT_OK};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedModel {
    pub rank: usize,
    pub model: String,
    pub qaic: f64,
    /// Difference to the best converged model.
    pub delta_qaic: f64,
    pub loss: f64,
    pub dim: usize,
    pub t: usize,
    pub converged: bool,
}

/// Orders by QAIC with name as tie-break; non-converged models go last.
pub fn rank_fits(mut models: Vec<RankedModel>) -> Vec<RankedModel> {
    models.sort_by(|a, b| {
        b.converged.cmp(&a.converged).then(a.qaic.total_cmp(&b.qaic)).then_with(|| a.model.cmp(&b.model))
    });
    let best = models.iter().find(|m| m.converged).or(models.first()).map(|m| m.qaic);
    for (i, m) in models.iter_mut().enumerate() {
        m.rank = i + 1;
        m.delta_qaic = m.qaic - best.unwrap_or(m.qaic);
    }
    models
}

pub(crate) fn compare_specs(panel: &Path, specs: &[PathBuf]) -> Result<Vec<RankedModel>> {
    if specs.len() < 2 {
        bail!("specs: need at least two model specs to compare");
    }
    let table = load_panel(panel)?;
    let specs = specs.iter().map(|p| ModelSpec::load(p)).collect::<Result<Vec<_>>>()?;
    let fits = specs.par_iter().map(|s| fit_spec(&table, s)).collect::<Result<Vec<_>>>()?;
    let window = fits[0].1.window;
    if let Some((_, other)) = fits.iter().find(|(_, o)| o.window != window) {
        bail!(
            "specs are not comparable: model {} uses window {:?} but model {} uses {:?}",
            fits[0].1.model,
            window,
            other.model,
            other.window
        );
    }
    let models = fits
        .into_iter()
        .map(|(r, o)| RankedModel {
            rank: 0,
            model: o.model,
            qaic: r.qaic,
            delta_qaic: 0.0,
            loss: r.loss_value,
            dim: r.dim(),
            t: r.t_len,
            converged: r.converged,
        })
        .collect();
    Ok(rank_fits(models))
}

pub fn cmd_compare(panel: &Path, specs: &[PathBuf], out: &Path) -> Result<i32> {
    let ranked = compare_specs(panel, specs)?;
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["rank", "model", "qaic", "delta_qaic", "loss", "dim", "t", "converged"])?;
    for m in &ranked {
        w.write_record([
            m.rank.to_string(),
            m.model.clone(),
            m.qaic.to_string(),
            m.delta_qaic.to_string(),
            m.loss.to_string(),
            m.dim.to_string(),
            m.t.to_string(),
            m.converged.to_string(),
        ])?;
    }
    w.flush()?;
    if ranked.iter().any(|m| !m.converged) {
        return Ok(EXIT_NONCONVERGED);
    }
    Ok(EXIT_OK)
}
