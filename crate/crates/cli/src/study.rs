use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use anyhow::{bail, Context, Result};
use randsum::estimator::fit_default;
use randsum::simulator::simulate_replicate;
use randsum::{FitOptions, FitResult, Layout, SimulationConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::simulate::parse_config;
use crate::{create, fmt_opt, open, EXIT_OK, EXIT_STUDY_FAILURE};

const Z_95: f64 = 1.96;
const MAX_FAILURE_RATE: f64 = 0.2;

/// Study configuration. A bare simulation config is accepted as well.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub simulation: SimulationConfig,
    /// Site counts to run; `[simulation.k]` when absent.
    #[serde(default)]
    pub k_grid: Option<Vec<usize>>,
    /// Nested window lengths; `[simulation.t]` when absent.
    #[serde(default)]
    pub t_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub fit: FitOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyOptions {
    #[serde(default)]
    k_grid: Option<Vec<usize>>,
    #[serde(default)]
    t_grid: Option<Vec<usize>>,
    #[serde(default)]
    fit: FitOptions,
}

impl McConfig {
    pub fn from_simulation(simulation: SimulationConfig) -> Self {
        Self { simulation, k_grid: None, t_grid: None, fit: FitOptions::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_reader(open(path)?).with_context(|| format!("invalid JSON in {}", path.display()))?;
        Self::from_json(value)
    }

    pub fn from_json(mut value: serde_json::Value) -> Result<Self> {
        let sim = value.as_object_mut().and_then(|o| o.remove("simulation"));
        let mut config = match sim {
            Some(sim) => {
                let rest: StudyOptions = serde_json::from_value(value).context("invalid study config")?;
                Self { simulation: parse_config(sim)?, k_grid: rest.k_grid, t_grid: rest.t_grid, fit: rest.fit }
            }
            None => Self::from_simulation(parse_config(value)?),
        };
        config.k_grid.get_or_insert_with(|| vec![config.simulation.k]);
        config.t_grid.get_or_insert_with(|| vec![config.simulation.t]);
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        for (name, grid) in [("k_grid", &self.k_grid), ("t_grid", &self.t_grid)] {
            if let Some(g) = grid {
                if g.is_empty() || g.contains(&0) {
                    bail!("{name}: values must be >= 1 and the grid non-empty");
                }
            }
        }
        Ok(())
    }

    fn k_values(&self) -> Vec<usize> {
        self.k_grid.clone().unwrap_or_else(|| vec![self.simulation.k])
    }

    fn t_values(&self) -> Vec<usize> {
        self.t_grid.clone().unwrap_or_else(|| vec![self.simulation.t])
    }
}

/// One replicate fitted at one window length.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    /// `Err` holds the crash message.
    pub fit: std::result::Result<FitResult, String>,
}

impl ReplicateOutcome {
    pub fn converged(&self) -> Option<&FitResult> {
        self.fit.as_ref().ok().filter(|f| f.converged)
    }
}

/// All replicates for one `(K, T)` pair.
#[derive(Debug, Clone)]
pub struct StudyCell {
    pub k: usize,
    pub t: usize,
    pub scenario: String,
    /// Parameters reported in the table (every block except `ω`).
    pub names: Vec<String>,
    pub indices: Vec<usize>,
    pub truth: Vec<f64>,
    pub outcomes: Vec<ReplicateOutcome>,
}

impl StudyCell {
    pub fn converged(&self) -> impl Iterator<Item = &FitResult> {
        self.outcomes.iter().filter_map(ReplicateOutcome::converged)
    }

    pub fn n_converged(&self) -> usize {
        self.converged().count()
    }

    pub fn n_crashed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.fit.is_err()).count()
    }

    pub fn n_failed(&self) -> usize {
        self.outcomes.len() - self.n_converged()
    }

    fn estimates(&self, i: usize) -> Vec<f64> {
        self.converged().map(|f| f.theta_hat.to_vec()[i]).collect()
    }

    /// Mean estimate over converged replicates.
    pub fn eqml(&self) -> Vec<Option<f64>> {
        self.indices.iter().map(|&i| mean(&self.estimates(i))).collect()
    }

    /// Mean standard error over converged replicates that have one.
    pub fn tse_mean(&self) -> Vec<Option<f64>> {
        self.indices
            .iter()
            .map(|&i| mean(&self.converged().filter_map(|f| f.tse().map(|t| t[i])).collect::<Vec<_>>()))
            .collect()
    }

    pub fn empirical_sd(&self) -> Vec<Option<f64>> {
        self.indices
            .iter()
            .map(|&i| {
                let est = self.estimates(i);
                let m = mean(&est)?;
                (est.len() >= 2)
                    .then(|| (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt())
            })
            .collect()
    }

    /// Share of 95% Wald intervals covering the truth.
    pub fn coverage(&self) -> Vec<Option<f64>> {
        self.indices
            .iter()
            .zip(&self.truth)
            .map(|(&i, truth)| {
                let hits: Vec<f64> = self
                    .converged()
                    .filter_map(|f| {
                        let se = f.tse()?[i];
                        let est = f.theta_hat.to_vec()[i];
                        Some(if (est - truth).abs() <= Z_95 * se { 1.0 } else { 0.0 })
                    })
                    .collect();
                mean(&hits)
            })
            .collect()
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone)]
pub struct McSummary {
    pub replicates: usize,
    pub cells: Vec<StudyCell>,
}

impl McSummary {
    pub fn failure_exceeded(&self) -> bool {
        self.cells.iter().any(|c| c.n_failed() as f64 > MAX_FAILURE_RATE * c.outcomes.len() as f64)
    }

    /// Wide table: one row per `(K, T, scenario, statistic)`, one column per
    /// parameter.
    pub fn write_table<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let names = self.cells.first().map(|c| c.names.clone()).unwrap_or_default();
        let mut header: Vec<String> =
            ["k", "t", "scenario", "statistic", "replicates", "converged", "nonconverged", "crashed"]
                .map(String::from)
                .to_vec();
        header.extend(names);
        w.write_record(&header)?;
        for cell in &self.cells {
            let stats: [(&str, Vec<Option<f64>>); 5] = [
                ("true", cell.truth.iter().copied().map(Some).collect()),
                ("eqml", cell.eqml()),
                ("tse", cell.tse_mean()),
                ("emp_sd", cell.empirical_sd()),
                ("coverage", cell.coverage()),
            ];
            for (label, values) in stats {
                let mut row = vec![
                    cell.k.to_string(),
                    cell.t.to_string(),
                    cell.scenario.clone(),
                    label.to_string(),
                    cell.outcomes.len().to_string(),
                    cell.n_converged().to_string(),
                    (cell.n_failed() - cell.n_crashed()).to_string(),
                    cell.n_crashed().to_string(),
                ];
                row.extend(values.into_iter().map(fmt_opt));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn reported_indices(layout: Layout) -> Vec<usize> {
    std::iter::once(Layout::DELTA)
        .chain((0..layout.order).map(|j| layout.alpha(j)))
        .chain((0..layout.covariates).map(|i| layout.beta(i)))
        .collect()
}

fn run_replicate(
    config: &SimulationConfig,
    design: &randsum::simulator::SimulationDesign,
    replicate: u64,
    t_values: &[usize],
    options: &FitOptions,
) -> Vec<ReplicateOutcome> {
    let attempt = catch_unwind(AssertUnwindSafe(|| simulate_replicate(config, design, replicate)));
    let panel = match attempt {
        Ok(Ok(p)) => p,
        Ok(Err(e)) => return crash_all(replicate, t_values, e.to_string()),
        Err(_) => return crash_all(replicate, t_values, "simulation panicked".into()),
    };
    t_values
        .iter()
        .map(|&t| {
            let fit = catch_unwind(AssertUnwindSafe(|| {
                let prefix = panel.prefix(t)?;
                fit_default(&prefix, config.order(), options)
            }));
            let fit = match fit {
                Ok(Ok(f)) => Ok(f),
                Ok(Err(e)) => Err(e.to_string()),
                Err(_) => Err("fit panicked".to_string()),
            };
            if let Err(e) = &fit {
                log::warn!("replicate {replicate} at T={t} failed: {e}");
            }
            ReplicateOutcome { replicate, fit }
        })
        .collect()
}

fn crash_all(replicate: u64, t_values: &[usize], message: String) -> Vec<ReplicateOutcome> {
    log::warn!("replicate {replicate} failed: {message}");
    t_values.iter().map(|_| ReplicateOutcome { replicate, fit: Err(message.clone()) }).collect()
}

/// Runs `reps` simulate-and-fit replicates per `K`, each fitted at every
/// window length of the nested `t_grid`.
pub fn run_study(config: &McConfig, reps: usize, jobs: Option<usize>) -> Result<McSummary> {
    if reps == 0 {
        bail!("reps: need at least one replicate");
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            bail!("jobs: need at least one worker");
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build()?;
    let t_values = config.t_values();
    let t_max = *t_values.iter().max().unwrap_or(&config.simulation.t);
    let mut cells = Vec::new();
    for k in config.k_values() {
        let mut sim = config.simulation.clone();
        sim.k = k;
        sim.t = t_max;
        let design = sim.resolve().with_context(|| format!("design for K={k}"))?;
        let truth_full = sim.true_theta(&design);
        let layout = truth_full.layout();
        let indices = reported_indices(layout);
        let names_full = layout.names(&(1..=k).map(|s| s.to_string()).collect::<Vec<_>>(), &sim.covariate_names());
        let truth_vec = truth_full.to_vec();
        let per_rep: Vec<Vec<ReplicateOutcome>> = pool.install(|| {
            (0..reps as u64).into_par_iter().map(|b| run_replicate(&sim, &design, b, &t_values, &config.fit)).collect()
        });
        for (ti, &t) in t_values.iter().enumerate() {
            cells.push(StudyCell {
                k,
                t,
                scenario: sim.scenario.label().to_string(),
                names: indices.iter().map(|&i| names_full[i].clone()).collect(),
                indices: indices.clone(),
                truth: indices.iter().map(|&i| truth_vec[i]).collect(),
                outcomes: per_rep.iter().map(|r| r[ti].clone()).collect(),
            });
        }
    }
    Ok(McSummary { replicates: reps, cells })
}

pub fn cmd_mc_study(config_path: &Path, reps: usize, out: &Path, jobs: Option<usize>) -> Result<i32> {
    let config = McConfig::load(config_path)?;
    let summary = run_study(&config, reps, jobs)?;
    let mut w = create(out)?;
    summary.write_table(&mut w)?;
    std::io::Write::flush(&mut w)?;
    if summary.failure_exceeded() {
        for c in &summary.cells {
            log::error!("K={} T={}: {} of {} replicates failed", c.k, c.t, c.n_failed(), c.outcomes.len());
        }
        return Ok(EXIT_STUDY_FAILURE);
    }
    Ok(EXIT_OK)
}
