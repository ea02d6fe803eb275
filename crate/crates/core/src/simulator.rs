//! Simulation of random-sum panels.
//!
//! Each `Y[k,t]` is the sum of `n[k,t]` unit draws with conditional mean
//! `λ[k,t]`, where `λ` follows the autoregressive softplus recursion on the
//! previously simulated ratios `Y/n`. Every random draw comes from a stream
//! addressed by `(replicate, site, step, purpose)`, so a panel of length `T`
//! is an exact prefix of the panel of length `T' > T` with the same seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::softplus_raw;
use crate::model::{check_stability, PanelSeries, ParameterVector, SiteSeries};
use crate::rng::StreamKey;

pub const DEFAULT_BURN_IN: usize = 500;

/// Coefficients shared by the benchmark scenarios.
pub const SCENARIO_BETA: [f64; 10] = [0.0, 1.0, -1.0, 0.5, -0.5, -1.5, 1.5, -2.0, 2.0, 0.0];
pub const SCENARIO_ALPHA: f64 = 0.6;
pub const SCENARIO_DELTA: f64 = 0.5;

const TAG_DESIGN: u64 = 0;
const TAG_REPLICATE: u64 = 1;
const TAG_SHARED_SITE: u64 = u64::MAX;
const PURPOSE_COVARIATES: u64 = 0;
const PURPOSE_SIZE: u64 = 1;
const PURPOSE_UNITS: u64 = 2;

/// Distribution of one unit variable given its mean `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum UnitDistribution {
    /// Rate `1/λ`.
    #[default]
    Exponential,
    /// Shape `shape·λ`, rate `shape`.
    Gamma { shape: f64 },
    /// `log ζ ~ N(log λ - σ²/2, σ²)`.
    LogNormal { sigma: f64 },
}

impl UnitDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            UnitDistribution::Exponential => Ok(()),
            UnitDistribution::Gamma { shape } if shape.is_finite() && shape > 0.0 => Ok(()),
            UnitDistribution::Gamma { shape } => Err(Error::domain(format!("gamma shape must be > 0, got {shape}"))),
            UnitDistribution::LogNormal { sigma } if sigma.is_finite() && sigma >= 0.0 => Ok(()),
            UnitDistribution::LogNormal { sigma } => {
                Err(Error::domain(format!("lognormal sigma must be >= 0, got {sigma}")))
            }
        }
    }

    /// One unit draw with mean `lam`.
    pub fn sample<R: Rng + ?Sized>(&self, lam: f64, rng: &mut R) -> f64 {
        match *self {
            UnitDistribution::Exponential => lam * Exp::new(1.0).expect("unit rate").sample(rng),
            UnitDistribution::Gamma { shape } => {
                Gamma::new(shape * lam, 1.0 / shape).expect("validated gamma parameters").sample(rng)
            }
            UnitDistribution::LogNormal { sigma } => LogNormal::new(lam.ln() - 0.5 * sigma * sigma, sigma)
                .expect("validated lognormal parameters")
                .sample(rng),
        }
    }

    /// Sum of `n` independent unit draws.
    pub fn sample_sum<R: Rng + ?Sized>(&self, lam: f64, n: u32, rng: &mut R) -> f64 {
        (0..n).map(|_| self.sample(lam, rng)).sum()
    }
}

/// Conditional mean and variance of `Y` given `λ` and `n`.
///
/// The mean is `nλ` for every family. Variances: exponential `nλ²`, gamma
/// `nλ/shape`, lognormal `nλ²(e^{σ²} - 1)`.
pub fn conditional_moments(unit: UnitDistribution, lam: f64, n: u32) -> Result<(f64, f64)> {
    unit.validate()?;
    if !(lam.is_finite() && lam > 0.0) {
        return Err(Error::domain(format!("lambda must be > 0, got {lam}")));
    }
    if n == 0 {
        return Err(Error::domain("n must be >= 1"));
    }
    let n = n as f64;
    let var = match unit {
        UnitDistribution::Exponential => n * lam * lam,
        UnitDistribution::Gamma { shape } => n * lam / shape,
        UnitDistribution::LogNormal { sigma } => n * lam * lam * (sigma * sigma).exp_m1(),
    };
    Ok((n * lam, var))
}

/// Covariate-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// One i.i.d. exponential covariate path shared by all sites.
    Scenario1,
    /// Site `k` draws exponentials with means `0.4·k·μ_i`.
    Scenario2,
    /// Independent exponentials with means `μ_i` at every site.
    Custom,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Scenario1 => "1",
            Scenario::Scenario2 => "2",
            Scenario::Custom => "custom",
        }
    }
}

/// Process generating the sample sizes `n[k,t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeProcess {
    /// `n ≡ value`.
    Constant { value: u32 },
    /// Zero-truncated Poisson with the given per-site means.
    Poisson { means: Vec<f64> },
    /// Per-site Poisson means drawn once from an exponential with the given
    /// mean (`K` when absent), then zero-truncated Poisson sizes.
    DrawnPoisson {
        #[serde(default)]
        mean: Option<f64>,
    },
}

impl Default for SizeProcess {
    fn default() -> Self {
        SizeProcess::DrawnPoisson { mean: None }
    }
}

/// True parameters; `omega` is drawn `U(-K/2, K/2)` when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParameters {
    pub delta: f64,
    #[serde(default)]
    pub omega: Option<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    /// Number of sites `K`.
    pub k: usize,
    /// Window length `T`.
    pub t: usize,
    pub theta: TrueParameters,
    #[serde(default)]
    pub unit_dist: UnitDistribution,
    /// Covariate means `μ_1..μ_m`; all ones when absent.
    #[serde(default)]
    pub covariate_means: Option<Vec<f64>>,
    #[serde(default)]
    pub covariate_names: Option<Vec<String>>,
    #[serde(default)]
    pub size: SizeProcess,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub seed: u64,
}

impl SimulationConfig {
    /// Benchmark design: `m = 10`, `δ = 0.5`, `α_1 = 0.6`,
    /// `β = (0, 1, -1, 0.5, -0.5, -1.5, 1.5, -2, 2, 0)`, `ω_k ~ U(-K/2, K/2)`,
    /// `τ_k ~ Exp(mean K)`, unit covariate means and exponential units.
    pub fn benchmark(scenario: Scenario, k: usize, t: usize, seed: u64) -> Self {
        Self {
            scenario,
            k,
            t,
            theta: TrueParameters {
                delta: SCENARIO_DELTA,
                omega: None,
                alpha: vec![SCENARIO_ALPHA],
                beta: SCENARIO_BETA.to_vec(),
            },
            unit_dist: UnitDistribution::Exponential,
            covariate_means: None,
            covariate_names: None,
            size: SizeProcess::DrawnPoisson { mean: None },
            burn_in: DEFAULT_BURN_IN,
            seed,
        }
    }

    pub fn order(&self) -> usize {
        self.theta.alpha.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.theta.beta.len()
    }

    pub fn covariate_means(&self) -> Vec<f64> {
        self.covariate_means.clone().unwrap_or_else(|| vec![1.0; self.n_covariates()])
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariate_names.clone().unwrap_or_else(|| (1..=self.n_covariates()).map(|i| format!("x{i}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k: need at least one site"));
        }
        if self.t == 0 {
            return Err(Error::config("t: window length must be >= 1"));
        }
        let th = &self.theta;
        if !(th.delta.is_finite() && th.delta >= 0.0) {
            return Err(Error::config(format!("theta.delta: must be finite and >= 0, got {}", th.delta)));
        }
        if let Some(omega) = &th.omega {
            if omega.len() != self.k {
                return Err(Error::config(format!("theta.omega: has {} entries, k = {}", omega.len(), self.k)));
            }
        }
        let all = th.alpha.iter().chain(&th.beta).chain(th.omega.iter().flatten());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::config("theta: contains non-finite values"));
        }
        let stability = check_stability(&ParameterVector::new(th.delta, vec![], th.alpha.clone(), vec![]));
        if !stability.stable {
            return Err(Error::config(format!(
                "theta.alpha: sum of |alpha| is {} >= 1, the process has no stationary solution",
                stability.alpha_l1
            )));
        }
        let means = self.covariate_means();
        if means.len() != self.n_covariates() {
            return Err(Error::config(format!(
                "covariate_means: has {} entries, theta.beta has {}",
                means.len(),
                self.n_covariates()
            )));
        }
        if means.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::config("covariate_means: must all be > 0"));
        }
        if self.covariate_names().len() != self.n_covariates() {
            return Err(Error::config("covariate_names: length must match theta.beta"));
        }
        self.unit_dist.validate().map_err(|e| Error::config(format!("unit_dist: {e}")))?;
        match &self.size {
            SizeProcess::Constant { value } if *value == 0 => {
                return Err(Error::config("size.value: must be >= 1"));
            }
            SizeProcess::Poisson { means } => {
                if means.len() != self.k {
                    return Err(Error::config(format!("size.means: has {} entries, k = {}", means.len(), self.k)));
                }
                if means.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                    return Err(Error::config("size.means: must all be > 0"));
                }
            }
            SizeProcess::DrawnPoisson { mean: Some(m) } if !(m.is_finite() && *m > 0.0) => {
                return Err(Error::config("size.mean: must be > 0"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Draws the experiment-level quantities (`ω`, `τ`) once.
    pub fn resolve(&self) -> Result<SimulationDesign> {
        self.validate()?;
        let root = StreamKey::root(self.seed).child(TAG_DESIGN).child(self.k as u64);
        let k = self.k as f64;
        let omega = match &self.theta.omega {
            Some(o) => o.clone(),
            None => (0..self.k).map(|s| root.path(&[0, s as u64]).rng().random_range(-0.5 * k..0.5 * k)).collect(),
        };
        let tau = match &self.size {
            SizeProcess::Constant { .. } => None,
            SizeProcess::Poisson { means } => Some(means.clone()),
            SizeProcess::DrawnPoisson { mean } => {
                let exp = Exp::new(1.0 / mean.unwrap_or(k)).map_err(|e| Error::config(format!("size.mean: {e}")))?;
                Some(
                    (0..self.k)
                        .map(|s| loop {
                            // A zero draw has probability zero but is not excluded by the sampler.
                            let tau = exp.sample(&mut root.path(&[1, s as u64]).rng());
                            if tau > 0.0 {
                                break tau;
                            }
                        })
                        .collect(),
                )
            }
        };
        let base = self.covariate_means();
        let covariate_means = (0..self.k)
            .map(|s| match self.scenario {
                Scenario::Scenario2 => base.iter().map(|m| 0.4 * (s + 1) as f64 * m).collect(),
                _ => base.clone(),
            })
            .collect();
        let zero_size_probability =
            tau.as_ref().map(|t| t.iter().map(|tau| (-tau).exp()).collect()).unwrap_or_else(|| vec![0.0; self.k]);
        Ok(SimulationDesign {
            omega,
            tau,
            covariate_means,
            shared_covariates: self.scenario == Scenario::Scenario1,
            zero_size_probability,
        })
    }

    pub fn true_theta(&self, design: &SimulationDesign) -> ParameterVector {
        ParameterVector::new(self.theta.delta, design.omega.clone(), self.theta.alpha.clone(), self.theta.beta.clone())
    }
}

/// Experiment-level draws shared by every replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub omega: Vec<f64>,
    /// Per-site Poisson means; `None` for constant sizes.
    pub tau: Option<Vec<f64>>,
    /// Per-site covariate means (`0.4·k·μ` under scenario 2).
    pub covariate_means: Vec<Vec<f64>>,
    pub shared_covariates: bool,
    /// Poisson mass at zero, i.e. the rate at which sizes are truncated.
    pub zero_size_probability: Vec<f64>,
}

/// Zero-truncated Poisson draw.
fn truncated_poisson<R: Rng + ?Sized>(tau: f64, rng: &mut R) -> u32 {
    if tau >= 1.0 {
        let poisson = Poisson::new(tau).expect("positive poisson mean");
        loop {
            let n = poisson.sample(rng);
            if n >= 1.0 {
                return n as u32;
            }
        }
    }
    // Inversion on the truncated law; avoids long rejection loops for small τ.
    let target = rng.random::<f64>() * -(-tau).exp_m1();
    let mut pk = (-tau).exp();
    let mut cum = 0.0;
    for k in 1..1000u32 {
        pk *= tau / k as f64;
        cum += pk;
        if cum >= target {
            return k;
        }
    }
    1
}

fn step_rng(site_key: StreamKey, step: usize, purpose: u64) -> ChaCha8Rng {
    site_key.path(&[step as u64, purpose]).rng()
}

/// Simulates replicate `replicate` of the experiment described by
/// `(config, design)`.
pub fn simulate_replicate(config: &SimulationConfig, design: &SimulationDesign, replicate: u64) -> Result<PanelSeries> {
    config.validate()?;
    let p = config.order();
    let m = config.n_covariates();
    let th = &config.theta;
    let total = config.burn_in + p + config.t;
    let rep_key = StreamKey::root(config.seed).child(TAG_REPLICATE).child(replicate);
    let exps: Vec<Vec<Exp<f64>>> = design
        .covariate_means
        .iter()
        .map(|means| means.iter().map(|mu| Exp::new(1.0 / mu).expect("positive mean")).collect())
        .collect();

    let shared_x: Option<Vec<f64>> = design.shared_covariates.then(|| {
        let key = rep_key.child(TAG_SHARED_SITE);
        let mut x = Vec::with_capacity(total * m);
        for step in 0..total {
            let mut rng = step_rng(key, step, PURPOSE_COVARIATES);
            x.extend(exps[0].iter().map(|e| e.sample(&mut rng)));
        }
        x
    });

    let mut sites = Vec::with_capacity(config.k);
    for k in 0..config.k {
        let key = rep_key.child(k as u64);
        let omega = design.omega[k];
        let initial_ratio = softplus_raw(th.delta, omega);
        let mut ratios: Vec<f64> = Vec::with_capacity(total);
        let mut ys = Vec::with_capacity(p + config.t);
        let mut ns = Vec::with_capacity(p + config.t);
        let mut xs = Vec::with_capacity(config.t * m);
        let mut row = vec![0.0; m];
        for step in 0..total {
            match &shared_x {
                Some(x) => row.copy_from_slice(&x[step * m..(step + 1) * m]),
                None => {
                    let mut rng = step_rng(key, step, PURPOSE_COVARIATES);
                    for (v, e) in row.iter_mut().zip(&exps[k]) {
                        *v = e.sample(&mut rng);
                    }
                }
            }
            let n = match (&config.size, &design.tau) {
                (SizeProcess::Constant { value }, _) => *value,
                (_, Some(tau)) => truncated_poisson(tau[k], &mut step_rng(key, step, PURPOSE_SIZE)),
                (_, None) => return Err(Error::config("size: poisson sizes need per-site means")),
            };
            let mut eta = omega;
            for (j, a) in th.alpha.iter().enumerate() {
                let lag = if step > j { ratios[step - j - 1] } else { initial_ratio };
                eta += a * lag;
            }
            eta += th.beta.iter().zip(&row).map(|(b, x)| b * x).sum::<f64>();
            let lam = softplus_raw(th.delta, eta);
            let y = config.unit_dist.sample_sum(lam, n, &mut step_rng(key, step, PURPOSE_UNITS));
            ratios.push(y / n as f64);
            if step >= config.burn_in {
                ys.push(y);
                ns.push(n);
                if step >= config.burn_in + p {
                    xs.extend_from_slice(&row);
                }
            }
        }
        let y = ys.split_off(p);
        let n = ns.split_off(p);
        sites.push(SiteSeries { id: (k + 1).to_string(), y, n, x: xs, presample_y: ys, presample_n: ns });
    }
    PanelSeries::new(sites, (1..=config.t as i32).collect(), (1 - p as i32..=0).collect(), config.covariate_names())
}

/// Simulates replicate 0 of `config`.
pub fn simulate_panel(config: &SimulationConfig) -> Result<PanelSeries> {
    let design = config.resolve()?;
    simulate_replicate(config, &design, 0)
}
