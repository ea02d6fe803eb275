//! Semi-parametric autoregressive models for panel time series of random sums
//! of positive variables.
//!
//! An observation `Y[k,t]` is the sum of `n[k,t]` positive unit variables whose
//! conditional mean `λ[k,t]` follows
//!
//! ```text
//! λ[k,t] = softplus_δ(ω_k + Σ_j α_j · Y[k,t-j] / n[k,t-j] + βᵀ X[k,t])
//! softplus_δ(x) = log(1 + δ + eˣ)
//! ```
//!
//! The crate provides the link function ([`link`]), the mean recursion and its
//! analytic gradient ([`model`]), a reproducible simulator ([`simulator`]), the
//! exponential quasi-maximum-likelihood estimator with sandwich standard errors
//! ([`estimator`]) and tree-ring panel ingestion ([`data_io`]).

pub mod data_io;
pub mod error;
pub mod estimator;
pub mod link;
pub mod model;
pub mod optimize;
pub mod rng;
pub mod simulator;
mod sum;

pub use error::{Error, Result};
pub use estimator::{fit, loss, loss_gradient, qaic, sandwich, FitOptions, FitResult, Sandwich};
pub use link::LinkSpec;
pub use model::{
    check_stability, compute_mean_path, Layout, MeanPath, PanelSeries, ParameterVector, SiteSeries, Stability,
};
pub use simulator::{conditional_moments, simulate_panel, Scenario, SimulationConfig, UnitDistribution};
