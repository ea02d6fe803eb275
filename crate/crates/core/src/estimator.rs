//! Exponential quasi-maximum-likelihood estimation.
//!
//! The loss is `r_T(θ) = Σ_k T⁻¹ Σ_t (Y[k,t]/λ[k,t] + n[k,t] log λ[k,t])`,
//! minimized by BFGS with `δ = δ_floor + eᵘ` so that the shift stays strictly
//! above its floor. Standard errors come from the sandwich `Ĵ⁻¹V̂Ĵ⁻¹` with
//! `Ĵ = Σ_k T⁻¹ Σ_t n λ⁻² λ̇λ̇ᵀ` and `V̂ = Σ_k T⁻¹ Σ_t λ⁻²(n − Y/λ)² λ̇λ̇ᵀ`.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{softplus_inverse_raw, DEFAULT_DELTA_FLOOR};
use crate::model::{check_stability, visit_observations, Layout, PanelSeries, ParameterVector, Stability};
use crate::optimize::{minimize, BfgsOptions};
use crate::sum::Compensated;

/// `Ĵ` is treated as singular above this condition number.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub delta_floor: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { delta_floor: DEFAULT_DELTA_FLOOR, grad_tol: 1e-6, max_iter: 500 }
    }
}

/// `r_T(θ)`.
pub fn loss(panel: &PanelSeries, theta: &ParameterVector) -> Result<f64> {
    panel.check_theta(theta)?;
    Ok(loss_raw(panel, theta))
}

fn loss_raw(panel: &PanelSeries, theta: &ParameterVector) -> f64 {
    let inv_t = 1.0 / panel.len() as f64;
    let mut acc = Compensated::default();
    visit_observations(panel, theta, |obs| {
        acc.add(inv_t * (obs.y / obs.lam + obs.n * obs.lam.ln()));
    });
    acc.value()
}

/// `∇r_T(θ) = Σ_k T⁻¹ Σ_t λ⁻¹(n − Y/λ) ∂λ/∂θ`.
pub fn loss_gradient(panel: &PanelSeries, theta: &ParameterVector) -> Result<Vec<f64>> {
    panel.check_theta(theta)?;
    Ok(loss_and_gradient(panel, theta).1)
}

fn loss_and_gradient(panel: &PanelSeries, theta: &ParameterVector) -> (f64, Vec<f64>) {
    let layout = theta.layout();
    let inv_t = 1.0 / panel.len() as f64;
    let mut value = Compensated::default();
    let mut grad = vec![Compensated::default(); layout.dim()];
    visit_observations(panel, theta, |obs| {
        value.add(inv_t * (obs.y / obs.lam + obs.n * obs.lam.ln()));
        let w = inv_t * (obs.n - obs.y / obs.lam) / obs.lam;
        grad[Layout::DELTA].add(w * obs.d_delta);
        let we = w * obs.d_eta;
        grad[layout.omega(obs.site)].add(we);
        for (j, l) in obs.lags.iter().enumerate() {
            grad[layout.alpha(j)].add(we * l);
        }
        for (i, x) in obs.x.iter().enumerate() {
            grad[layout.beta(i)].add(we * x);
        }
    });
    (value.value(), grad.iter().map(Compensated::value).collect())
}

/// Data-driven starting point: `δ = (δ_floor + 1)/2`, `α_j = 0.1`, `β = 0`,
/// and `ω_k = (1 − Σα)·softplus_δ⁻¹(mean_t Y/n)`.
pub fn default_init(panel: &PanelSeries, order: usize, delta_floor: f64) -> Result<ParameterVector> {
    if order > panel.order() {
        return Err(Error::dim(format!("order {order} exceeds the panel presample length {}", panel.order())));
    }
    let delta = 0.5 * (delta_floor + 1.0);
    let alpha = vec![0.1; order];
    let scale = 1.0 - alpha.iter().sum::<f64>();
    let floor = delta.ln_1p();
    let omega = panel
        .sites()
        .iter()
        .map(|s| {
            let mean = s.y.iter().zip(&s.n).map(|(y, n)| y / *n as f64).sum::<f64>() / s.len() as f64;
            scale * softplus_inverse_raw(delta, mean.max(floor + 1e-6))
        })
        .collect();
    Ok(ParameterVector::new(delta, omega, alpha, vec![0.0; panel.n_covariates()]))
}

/// Empirical `Ĵ`, `V̂` and the sandwich covariance of `√T(θ̂ − θ₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sandwich {
    pub j_hat: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    /// `None` when `Ĵ` is numerically singular.
    pub covariance: Option<DMatrix<f64>>,
    /// `√(diag(covariance)/T)`.
    pub tse: Option<Vec<f64>>,
    pub j_condition: f64,
}

pub fn sandwich(panel: &PanelSeries, theta_hat: &ParameterVector) -> Result<Sandwich> {
    panel.check_theta(theta_hat)?;
    let layout = theta_hat.layout();
    let d = layout.dim();
    let t_len = panel.len() as f64;
    let inv_t = 1.0 / t_len;
    let mut j_hat = DMatrix::<f64>::zeros(d, d);
    let mut v_hat = DMatrix::<f64>::zeros(d, d);
    let mut g = DVector::<f64>::zeros(d);
    visit_observations(panel, theta_hat, |obs| {
        obs.gradient_into(&layout, g.as_mut_slice());
        let lam2 = obs.lam * obs.lam;
        let resid = obs.n - obs.y / obs.lam;
        j_hat.ger(inv_t * obs.n / lam2, &g, &g, 1.0);
        v_hat.ger(inv_t * resid * resid / lam2, &g, &g, 1.0);
    });
    symmetrize(&mut j_hat);
    symmetrize(&mut v_hat);

    let eig = SymmetricEigen::new(j_hat.clone()).eigenvalues;
    let (min_ev, max_ev) = eig.iter().fold((f64::INFINITY, 0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    let j_condition = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
    let covariance = if j_condition <= MAX_CONDITION {
        j_hat.clone().cholesky().map(|c| {
            let j_inv = c.inverse();
            let mut cov = &j_inv * &v_hat * &j_inv;
            symmetrize(&mut cov);
            cov
        })
    } else {
        None
    };
    let tse = covariance.as_ref().map(|c| c.diagonal().iter().map(|v| (v.max(0.0) / t_len).sqrt()).collect());
    Ok(Sandwich { j_hat, v_hat, covariance, tse, j_condition })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Outcome of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: ParameterVector,
    pub parameter_names: Vec<String>,
    /// `r_T(θ̂)`.
    pub loss_value: f64,
    /// Window length `T` of the fitted panel.
    pub t_len: usize,
    pub sandwich: Sandwich,
    pub qaic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub message: String,
    pub stability: Stability,
}

impl FitResult {
    pub fn dim(&self) -> usize {
        self.theta_hat.dim()
    }

    pub fn tse(&self) -> Option<&[f64]> {
        self.sandwich.tse.as_deref()
    }

    pub fn covariance_available(&self) -> bool {
        self.sandwich.covariance.is_some()
    }

    pub fn report(&self) -> FitReport {
        let est = self.theta_hat.to_vec();
        let tse = self.tse();
        let parameters = self
            .parameter_names
            .iter()
            .zip(&est)
            .enumerate()
            .map(|(i, (name, e))| ParameterEstimate { name: name.clone(), estimate: *e, tse: tse.map(|t| t[i]) })
            .collect();
        let layout = self.theta_hat.layout();
        FitReport {
            parameters,
            k: layout.sites,
            p: layout.order,
            m: layout.covariates,
            t: self.t_len,
            dim: layout.dim(),
            loss: self.loss_value,
            qaic: self.qaic,
            qaic_definition: QAIC_DEFINITION.to_string(),
            covariance_available: self.covariance_available(),
            covariance: self.sandwich.covariance.as_ref().map(row_major),
            j_hat: row_major(&self.sandwich.j_hat),
            v_hat: row_major(&self.sandwich.v_hat),
            j_condition_number: self.sandwich.j_condition.is_finite().then_some(self.sandwich.j_condition),
            convergence: Convergence {
                converged: self.converged,
                iterations: self.iterations,
                gradient_norm: self.gradient_norm,
                message: self.message.clone(),
            },
            stability: self.stability,
        }
    }
}

pub const QAIC_DEFINITION: &str = "2*T*loss + 2*dim(theta)";

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub estimate: f64,
    pub tse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub message: String,
}

/// JSON shape of a [`FitResult`]. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub parameters: Vec<ParameterEstimate>,
    pub k: usize,
    pub p: usize,
    pub m: usize,
    pub t: usize,
    pub dim: usize,
    pub loss: f64,
    pub qaic: f64,
    pub qaic_definition: String,
    pub covariance_available: bool,
    pub covariance: Option<Vec<f64>>,
    pub j_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub j_condition_number: Option<f64>,
    pub convergence: Convergence,
    pub stability: Stability,
}

/// Quasi-likelihood AIC, `2·T·r_T(θ̂) + 2·dim θ`. Lower is better; only
/// comparable between fits on the same panel window.
pub fn qaic(fit: &FitResult) -> f64 {
    qaic_value(fit.loss_value, fit.t_len, fit.dim())
}

fn qaic_value(loss: f64, t_len: usize, dim: usize) -> f64 {
    2.0 * t_len as f64 * loss + 2.0 * dim as f64
}

/// Minimizes `r_T` from `init`.
///
/// Non-convergence is reported through [`FitResult::converged`], not as an
/// error; a singular `Ĵ` leaves the covariance unavailable.
pub fn fit(panel: &PanelSeries, init: &ParameterVector, options: &FitOptions) -> Result<FitResult> {
    panel.check_theta(init)?;
    let floor = options.delta_floor;
    if !(floor.is_finite() && floor > 0.0) {
        return Err(Error::config(format!("delta_floor must be > 0, got {floor}")));
    }
    if init.delta <= floor {
        return Err(Error::domain(format!("initial delta {} must exceed the floor {floor}", init.delta)));
    }
    let layout = init.layout();
    let to_theta = |z: &[f64]| {
        let mut v = z.to_vec();
        v[0] = floor + z[0].exp();
        ParameterVector::from_slice(layout, &v).expect("layout-sized vector")
    };
    let mut z0 = init.to_vec();
    z0[0] = (init.delta - floor).ln();

    let objective = |z: &[f64]| {
        let theta = to_theta(z);
        if !theta.delta.is_finite() {
            return (f64::INFINITY, vec![0.0; z.len()]);
        }
        let (v, mut g) = loss_and_gradient(panel, &theta);
        g[0] *= z[0].exp();
        (v, g)
    };
    let min = minimize(objective, &z0, &BfgsOptions { grad_tol: options.grad_tol, max_iter: options.max_iter });
    let theta_hat = to_theta(&min.x);
    let stability = check_stability(&theta_hat);
    if !stability.stable {
        warn!("fitted sum of |alpha| is {:.4} >= 1", stability.alpha_l1);
    }
    let sandwich = sandwich(panel, &theta_hat)?;
    let loss_value = loss_raw(panel, &theta_hat);
    Ok(FitResult {
        parameter_names: layout.names(&panel.site_ids(), panel.covariate_names()),
        qaic: qaic_value(loss_value, panel.len(), layout.dim()),
        theta_hat,
        loss_value,
        t_len: panel.len(),
        sandwich,
        converged: min.converged,
        iterations: min.iterations,
        gradient_norm: min.gradient_norm,
        message: min.message.to_string(),
        stability,
    })
}

/// [`fit`] from [`default_init`].
pub fn fit_default(panel: &PanelSeries, order: usize, options: &FitOptions) -> Result<FitResult> {
    let init = default_init(panel, order, options.delta_floor)?;
    fit(panel, &init, options)
}
