//! Parameter layout, observed panels and the conditional-mean recursion.
//!
//! For site `k` and time `t` the linear predictor is
//! `η = ω_k + Σ_j α_j Y[k,t-j]/n[k,t-j] + βᵀX[k,t]` and the mean is
//! `λ = softplus_δ(η)`. Lags are always the observed ratios, so `∂λ/∂θ` at time
//! `t` only involves time-`t` regressors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{softplus_deriv_raw, softplus_raw};

/// Dimensions of a model: `K` sites, autoregressive order `p`, `m` covariates.
///
/// Parameters are flattened as `(δ, ω_1..ω_K, α_1..α_p, β_1..β_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub sites: usize,
    pub order: usize,
    pub covariates: usize,
}

impl Layout {
    pub fn new(sites: usize, order: usize, covariates: usize) -> Self {
        Self { sites, order, covariates }
    }

    pub fn dim(&self) -> usize {
        1 + self.sites + self.order + self.covariates
    }

    pub const DELTA: usize = 0;

    pub fn omega(&self, k: usize) -> usize {
        1 + k
    }

    pub fn alpha(&self, j: usize) -> usize {
        1 + self.sites + j
    }

    pub fn beta(&self, i: usize) -> usize {
        1 + self.sites + self.order + i
    }

    /// Parameter names in flattening order.
    pub fn names(&self, site_ids: &[String], covariate_names: &[String]) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        names.push("delta".to_string());
        for k in 0..self.sites {
            match site_ids.get(k) {
                Some(id) => names.push(format!("omega[{id}]")),
                None => names.push(format!("omega[{}]", k + 1)),
            }
        }
        for j in 0..self.order {
            names.push(format!("alpha[{}]", j + 1));
        }
        for i in 0..self.covariates {
            match covariate_names.get(i) {
                Some(c) => names.push(format!("beta[{c}]")),
                None => names.push(format!("beta[{}]", i + 1)),
            }
        }
        names
    }
}

/// `θ = (δ, ω, α, β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub delta: f64,
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ParameterVector {
    pub fn new(delta: f64, omega: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>) -> Self {
        Self { delta, omega, alpha, beta }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.omega.len(), self.alpha.len(), self.beta.len())
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.delta);
        v.extend_from_slice(&self.omega);
        v.extend_from_slice(&self.alpha);
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn from_slice(layout: Layout, values: &[f64]) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::dim(format!(
                "parameter slice has length {}, layout needs {}",
                values.len(),
                layout.dim()
            )));
        }
        let a = 1 + layout.sites;
        let b = a + layout.order;
        Ok(Self {
            delta: values[0],
            omega: values[1..a].to_vec(),
            alpha: values[a..b].to_vec(),
            beta: values[b..].to_vec(),
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::domain(format!("delta must be finite and >= 0, got {}", self.delta)));
        }
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("parameter vector contains non-finite values"));
        }
        Ok(())
    }
}

/// Result of the stationarity check `Σ|α_j| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub stable: bool,
    pub alpha_l1: f64,
}

pub fn check_stability(theta: &ParameterVector) -> Stability {
    let alpha_l1: f64 = theta.alpha.iter().map(|a| a.abs()).sum();
    Stability { stable: alpha_l1 < 1.0, alpha_l1 }
}

/// One site's observed series.
///
/// `x` is row-major `T × m`. The presample holds the `p` observations preceding
/// the window, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSeries {
    pub id: String,
    pub y: Vec<f64>,
    pub n: Vec<u32>,
    pub x: Vec<f64>,
    pub presample_y: Vec<f64>,
    pub presample_n: Vec<u32>,
}

impl SiteSeries {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Covariate row at window index `t`.
    pub fn x_row(&self, t: usize, m: usize) -> &[f64] {
        &self.x[t * m..(t + 1) * m]
    }

    /// `Y/n` at window index `t - j` (`j ≥ 1`), reaching into the presample.
    #[inline]
    pub fn lag_ratio(&self, t: usize, j: usize) -> f64 {
        if t >= j {
            self.y[t - j] / self.n[t - j] as f64
        } else {
            let i = self.presample_y.len() + t - j;
            self.presample_y[i] / self.presample_n[i] as f64
        }
    }
}

/// `K` site series on a common time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSeries {
    sites: Vec<SiteSeries>,
    years: Vec<i32>,
    presample_years: Vec<i32>,
    covariate_names: Vec<String>,
}

impl PanelSeries {
    pub fn new(
        sites: Vec<SiteSeries>,
        years: Vec<i32>,
        presample_years: Vec<i32>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::dim("panel has no sites"));
        }
        let t_len = years.len();
        let p = presample_years.len();
        let m = covariate_names.len();
        if t_len == 0 {
            return Err(Error::dim("panel has an empty time window"));
        }
        for s in &sites {
            if s.y.len() != t_len || s.n.len() != t_len {
                return Err(Error::dim(format!(
                    "site {} has {} observations, expected {t_len}",
                    s.id,
                    s.y.len().max(s.n.len())
                )));
            }
            if s.x.len() != t_len * m {
                return Err(Error::dim(format!(
                    "site {} covariate matrix has {} cells, expected {}",
                    s.id,
                    s.x.len(),
                    t_len * m
                )));
            }
            if s.presample_y.len() != p || s.presample_n.len() != p {
                return Err(Error::dim(format!(
                    "site {} presample has {} points, expected {p}",
                    s.id,
                    s.presample_y.len()
                )));
            }
            let ys = s.presample_y.iter().chain(&s.y);
            let ns = s.presample_n.iter().chain(&s.n);
            for (i, (y, n)) in ys.zip(ns).enumerate() {
                let year = if i < p { presample_years[i] } else { years[i - p] };
                if !(y.is_finite() && *y > 0.0) {
                    return Err(Error::data(format!("site {} year {year}: y must be > 0, got {y}", s.id)));
                }
                if *n == 0 {
                    return Err(Error::data(format!("site {} year {year}: n must be >= 1", s.id)));
                }
            }
            if let Some(i) = s.x.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "site {} year {}: covariate {} is not finite",
                    s.id,
                    years[i / m],
                    covariate_names[i % m]
                )));
            }
        }
        Ok(Self { sites, years, presample_years, covariate_names })
    }

    pub fn sites(&self) -> &[SiteSeries] {
        &self.sites
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Window length `T`.
    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    /// Presample length, i.e. the autoregressive order the panel supports.
    pub fn order(&self) -> usize {
        self.presample_years.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn presample_years(&self) -> &[i32] {
        &self.presample_years
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn site_ids(&self) -> Vec<String> {
        self.sites.iter().map(|s| s.id.clone()).collect()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.n_sites(), self.order(), self.n_covariates())
    }

    /// Panel holding the first `t` window years.
    pub fn prefix(&self, t: usize) -> Result<Self> {
        if t == 0 || t > self.len() {
            return Err(Error::dim(format!("prefix length {t} outside 1..={}", self.len())));
        }
        let m = self.n_covariates();
        let sites = self
            .sites
            .iter()
            .map(|s| SiteSeries {
                id: s.id.clone(),
                y: s.y[..t].to_vec(),
                n: s.n[..t].to_vec(),
                x: s.x[..t * m].to_vec(),
                presample_y: s.presample_y.clone(),
                presample_n: s.presample_n.clone(),
            })
            .collect();
        Self::new(sites, self.years[..t].to_vec(), self.presample_years.clone(), self.covariate_names.clone())
    }

    /// Panel restricted to the given sites, in the given order.
    pub fn subset_sites(&self, indices: &[usize]) -> Result<Self> {
        let mut sites = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = self.sites.get(i).ok_or_else(|| Error::dim(format!("site index {i} out of range")))?;
            sites.push(s.clone());
        }
        Self::new(sites, self.years.clone(), self.presample_years.clone(), self.covariate_names.clone())
    }

    /// Panel whose covariates are replaced by `columns(site, t)`, named `names`.
    pub fn with_covariates<F>(&self, names: Vec<String>, mut columns: F) -> Result<Self>
    where
        F: FnMut(&SiteSeries, usize) -> Vec<f64>,
    {
        let m = names.len();
        let mut sites = self.sites.clone();
        for (site, orig) in sites.iter_mut().zip(&self.sites) {
            let mut x = Vec::with_capacity(self.len() * m);
            for t in 0..self.len() {
                let row = columns(orig, t);
                if row.len() != m {
                    return Err(Error::dim(format!("covariate row has {} values, expected {m}", row.len())));
                }
                x.extend(row);
            }
            site.x = x;
        }
        Self::new(sites, self.years.clone(), self.presample_years.clone(), names)
    }

    pub(crate) fn check_theta(&self, theta: &ParameterVector) -> Result<()> {
        let want = self.layout();
        let got = theta.layout();
        if want.sites != got.sites || want.covariates != got.covariates {
            return Err(Error::dim(format!(
                "panel has K={}, m={} but theta has K={}, m={}",
                want.sites, want.covariates, got.sites, got.covariates
            )));
        }
        if got.order > want.order {
            return Err(Error::dim(format!(
                "theta has order p={} but the panel presample only supports p={}",
                got.order, want.order
            )));
        }
        theta.validate()
    }
}

/// Per-observation quantities handed to [`visit_observations`].
pub(crate) struct Observation<'a> {
    pub site: usize,
    pub y: f64,
    pub n: f64,
    pub eta: f64,
    pub lam: f64,
    pub d_eta: f64,
    pub d_delta: f64,
    pub lags: &'a [f64],
    pub x: &'a [f64],
}

impl Observation<'_> {
    /// Dense `∂λ/∂θ` written into `out` (length `layout.dim()`).
    pub fn gradient_into(&self, layout: &Layout, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[Layout::DELTA] = self.d_delta;
        out[layout.omega(self.site)] = self.d_eta;
        for (j, l) in self.lags.iter().enumerate() {
            out[layout.alpha(j)] = self.d_eta * l;
        }
        for (i, x) in self.x.iter().enumerate() {
            out[layout.beta(i)] = self.d_eta * x;
        }
    }
}

/// Walks every `(k, t)` of the window in site-major order.
pub(crate) fn visit_observations<F>(panel: &PanelSeries, theta: &ParameterVector, mut f: F)
where
    F: FnMut(&Observation<'_>),
{
    let p = theta.alpha.len();
    let m = panel.n_covariates();
    let delta = theta.delta;
    let mut lags = vec![0.0; p];
    for (k, site) in panel.sites.iter().enumerate() {
        for t in 0..site.len() {
            let x = site.x_row(t, m);
            let mut eta = theta.omega[k];
            for (j, (lag, a)) in lags.iter_mut().zip(&theta.alpha).enumerate() {
                *lag = site.lag_ratio(t, j + 1);
                eta += a * *lag;
            }
            for (b, v) in theta.beta.iter().zip(x) {
                eta += b * v;
            }
            let lam = softplus_raw(delta, eta);
            let (d_eta, d_delta) = softplus_deriv_raw(delta, eta);
            f(&Observation { site: k, y: site.y[t], n: site.n[t] as f64, eta, lam, d_eta, d_delta, lags: &lags, x });
        }
    }
}

/// `η`, `λ` and `∂λ/∂θ` over the whole window.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPath {
    layout: Layout,
    t_len: usize,
    eta: Vec<f64>,
    lam: Vec<f64>,
    dlam: Vec<f64>,
}

impl MeanPath {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.t_len
    }

    pub fn is_empty(&self) -> bool {
        self.t_len == 0
    }

    pub fn eta(&self, k: usize, t: usize) -> f64 {
        self.eta[k * self.t_len + t]
    }

    pub fn lam(&self, k: usize, t: usize) -> f64 {
        self.lam[k * self.t_len + t]
    }

    /// Gradient `∂λ[k,t]/∂θ` in flattening order.
    pub fn dlam(&self, k: usize, t: usize) -> &[f64] {
        let d = self.layout.dim();
        let i = (k * self.t_len + t) * d;
        &self.dlam[i..i + d]
    }
}

pub fn compute_mean_path(panel: &PanelSeries, theta: &ParameterVector) -> Result<MeanPath> {
    panel.check_theta(theta)?;
    let layout = theta.layout();
    let d = layout.dim();
    let cells = panel.n_sites() * panel.len();
    let mut eta = Vec::with_capacity(cells);
    let mut lam = Vec::with_capacity(cells);
    let mut dlam = vec![0.0; cells * d];
    let mut i = 0;
    visit_observations(panel, theta, |obs| {
        eta.push(obs.eta);
        lam.push(obs.lam);
        obs.gradient_into(&layout, &mut dlam[i * d..(i + 1) * d]);
        i += 1;
    });
    Ok(MeanPath { layout, t_len: panel.len(), eta, lam, dlam })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random valid panel and parameter vector for property tests.
    pub fn random_instance(seed: u64, k: usize, t: usize, p: usize, m: usize) -> (PanelSeries, ParameterVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sites = (0..k)
            .map(|s| SiteSeries {
                id: format!("s{}", s + 1),
                y: (0..t).map(|_| rng.random_range(0.2..6.0)).collect(),
                n: (0..t).map(|_| rng.random_range(1..6)).collect(),
                x: (0..t * m).map(|_| rng.random_range(-1.5..1.5)).collect(),
                presample_y: (0..p).map(|_| rng.random_range(0.2..6.0)).collect(),
                presample_n: (0..p).map(|_| rng.random_range(1..6)).collect(),
            })
            .collect();
        let panel = PanelSeries::new(
            sites,
            (1..=t as i32).collect(),
            (1 - p as i32..=0).collect(),
            (0..m).map(|i| format!("x{}", i + 1)).collect(),
        )
        .unwrap();
        let theta = ParameterVector::new(
            rng.random_range(0.05..2.0),
            (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..p).map(|_| rng.random_range(-0.4..0.4)).collect(),
            (0..m).map(|_| rng.random_range(-0.5..0.5)).collect(),
        );
        (panel, theta)
    }
}
