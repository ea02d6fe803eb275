//! The shifted softplus link `softplus_δ(x) = log(1 + δ + eˣ)`.
//!
//! The mean process is `λ = softplus_δ(η)`; the model's link is its inverse.
//! `softplus_δ` is 1-Lipschitz, strictly increasing in both `x` and `δ`, and
//! bounded below by `log(1 + δ)`.

use crate::error::{Error, Result};

/// Above this point the `x + log1p((1+δ)e^{-x})` form is used.
pub const OVERFLOW_THRESHOLD: f64 = 30.0;

/// Default lower bound on δ during estimation.
pub const DEFAULT_DELTA_FLOOR: f64 = 1e-4;

/// Shift parameter of the link together with the floor it must respect when
/// it is being estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    pub delta: f64,
    pub delta_floor: f64,
}

impl LinkSpec {
    pub fn new(delta: f64, delta_floor: f64) -> Result<Self> {
        if !(delta_floor.is_finite() && delta_floor > 0.0) {
            return Err(Error::domain(format!("delta_floor must be > 0, got {delta_floor}")));
        }
        check_delta(delta)?;
        if delta < delta_floor {
            return Err(Error::domain(format!("delta {delta} is below the floor {delta_floor}")));
        }
        Ok(Self { delta, delta_floor })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        softplus(self.delta, x)
    }

    pub fn inverse(&self, lam: f64) -> Result<f64> {
        softplus_inverse(self.delta, lam)
    }

    /// Smallest attainable mean, `log(1 + δ)`.
    pub fn lower_bound(&self) -> f64 {
        self.delta.ln_1p()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("delta must be finite and >= 0, got {delta}")))
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("softplus argument must be finite, got {x}")))
    }
}

/// `log(1 + δ + eˣ)`, overflow-safe.
pub fn softplus(delta: f64, x: f64) -> Result<f64> {
    check_delta(delta)?;
    check_x(x)?;
    Ok(softplus_raw(delta, x))
}

#[inline]
pub(crate) fn softplus_raw(delta: f64, x: f64) -> f64 {
    let c = 1.0 + delta;
    if x > OVERFLOW_THRESHOLD {
        x + (c * (-x).exp()).ln_1p()
    } else {
        // log(c) + log1p(eˣ/c) keeps full relative precision as x → -∞ when δ = 0.
        delta.ln_1p() + (x.exp() / c).ln_1p()
    }
}

/// `log(e^λ - 1 - δ)`, the link function itself.
///
/// Only defined for `λ > log(1 + δ)`.
pub fn softplus_inverse(delta: f64, lam: f64) -> Result<f64> {
    check_delta(delta)?;
    let floor = delta.ln_1p();
    if !lam.is_finite() || lam <= floor {
        return Err(Error::domain(format!("softplus_inverse needs lam > log(1+delta) = {floor}, got {lam}")));
    }
    Ok(softplus_inverse_raw(delta, lam))
}

#[inline]
pub(crate) fn softplus_inverse_raw(delta: f64, lam: f64) -> f64 {
    let c = 1.0 + delta;
    let log_c = delta.ln_1p();
    if lam - log_c > OVERFLOW_THRESHOLD {
        lam + (-c * (-lam).exp()).ln_1p()
    } else {
        log_c + (lam - log_c).exp_m1().ln()
    }
}

/// Partial derivatives of `softplus_δ(x)`: `(∂/∂x, ∂/∂δ)`.
///
/// `∂/∂x = eˣ/(1+δ+eˣ)` and `∂/∂δ = 1/(1+δ+eˣ)`, so that
/// `∂/∂x + (1+δ)·∂/∂δ = 1`.
pub fn softplus_deriv(delta: f64, x: f64) -> Result<(f64, f64)> {
    check_delta(delta)?;
    check_x(x)?;
    Ok(softplus_deriv_raw(delta, x))
}

#[inline]
pub(crate) fn softplus_deriv_raw(delta: f64, x: f64) -> (f64, f64) {
    let c = 1.0 + delta;
    if x > 0.0 {
        let r = (-x).exp();
        let denom = 1.0 + c * r;
        (1.0 / denom, r / denom)
    } else {
        let e = x.exp();
        let s = c + e;
        (e / s, 1.0 / s)
    }
}

/// Asymptotic multiplicative effect `e^{βa}` on the mean of raising a
/// covariate with coefficient `beta_j` by `alpha` units.
pub fn relative_growth_limit(beta_j: f64, alpha: f64) -> f64 {
    (beta_j * alpha).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softplus_closed_forms() {
        assert!((softplus(0.0, 0.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(0.5, -50.0).unwrap() - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softplus_large_argument_matches_extended_precision() {
        // log(1.5 + e^30) = 30 + log1p(1.5 e^-30); 1.5e^-30 ≈ 1.4036e-13 so the
        // series log1p(u) = u - u²/2 is exact to far below double precision.
        let u = 1.5 * (-30f64).exp();
        let oracle = 30.0 + (u - u * u / 2.0);
        let got = softplus(0.5, 30.0).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        // The stable branch takes over above the threshold and stays continuous.
        let below = softplus(0.5, OVERFLOW_THRESHOLD).unwrap();
        let above = softplus(0.5, OVERFLOW_THRESHOLD + 1e-9).unwrap();
        assert!((above - below - 1e-9).abs() < 1e-12);
        assert_eq!(softplus(0.0, 800.0).unwrap(), 800.0);
    }

    #[test]
    fn softplus_rejects_non_finite() {
        assert!(matches!(softplus(0.0, f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(softplus(0.0, f64::INFINITY), Err(Error::Domain(_))));
        assert!(softplus(-0.1, 0.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert!(softplus_inverse(0.0, 2f64.ln()).unwrap().abs() < 1e-15);
        let lam = softplus(0.5, 1.3).unwrap();
        assert!((softplus_inverse(0.5, lam).unwrap() - 1.3).abs() < 1e-12);
        assert!(matches!(softplus_inverse(0.5, 0.3), Err(Error::Domain(_))));
        assert!(softplus_inverse(0.5, 1.5f64.ln()).is_err());
        let big = softplus(0.2, 45.0).unwrap();
        assert!((softplus_inverse(0.2, big).unwrap() - 45.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_examples() {
        let (de, dd) = softplus_deriv(0.0, 0.0).unwrap();
        assert_eq!((de, dd), (0.5, 0.5));
        let (de, dd) = softplus_deriv(0.5, 0.0).unwrap();
        assert!((de - 0.4).abs() < 1e-15 && (dd - 0.4).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_difference_at_two() {
        let h = 1e-5;
        let fd_x = (softplus_raw(0.5, 2.0 + h) - softplus_raw(0.5, 2.0 - h)) / (2.0 * h);
        let fd_d = (softplus_raw(0.5 + h, 2.0) - softplus_raw(0.5 - h, 2.0)) / (2.0 * h);
        let (de, dd) = softplus_deriv(0.5, 2.0).unwrap();
        assert!((de - fd_x).abs() < 1e-8);
        assert!((dd - fd_d).abs() < 1e-8);
    }

    #[test]
    fn relative_growth_examples() {
        assert_eq!(relative_growth_limit(0.0, 10.0), 1.0);
        assert!((relative_growth_limit(-0.1, 10.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((relative_growth_limit(-0.1, 10.0) - 0.3679).abs() < 1e-4);
        assert!((relative_growth_limit(0.05, 10.0) - 0.5f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn relative_growth_is_the_numerical_limit_for_negative_coefficients() {
        // softplus_0(β(x+a)) / softplus_0(βx) and the derivative ratio at x = 1e4.
        let (beta, a, x) = (-0.05, 10.0, 1e4);
        let ratio = softplus_raw(0.0, beta * (x + a)) / softplus_raw(0.0, beta * x);
        assert!((ratio / relative_growth_limit(beta, a) - 1.0).abs() < 1e-12);
        let dratio = softplus_deriv_raw(0.0, beta * (x + a)).0 / softplus_deriv_raw(0.0, beta * x).0;
        assert!((dratio / relative_growth_limit(beta, a) - 1.0).abs() < 1e-12);
        // With β > 0 the mean grows linearly, so the level ratio tends to 1.
        let up = softplus_raw(0.0, 0.05 * (x + a)) / softplus_raw(0.0, 0.05 * x);
        assert!((up - 1.0).abs() < 2e-3);
    }

    #[test]
    fn spec_constructor_validates_floor() {
        assert!(LinkSpec::new(0.5, DEFAULT_DELTA_FLOOR).is_ok());
        assert!(LinkSpec::new(0.5, 0.0).is_err());
        assert!(LinkSpec::new(1e-6, 1e-4).is_err());
        let spec = LinkSpec::new(0.5, 1e-4).unwrap();
        assert!((spec.lower_bound() - 1.5f64.ln()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn lower_bound_and_lipschitz(delta in 0.0f64..5.0, x in -30.0f64..30.0, y in -30.0f64..30.0) {
            let fx = softplus_raw(delta, x);
            let fy = softplus_raw(delta, y);
            prop_assert!(fx > delta.ln_1p());
            prop_assert!((fx - fy).abs() <= (x - y).abs() + 1e-15);
        }

        #[test]
        fn monotone_in_both_arguments(delta in 0.0f64..5.0, x in -20.0f64..30.0, dx in 1e-3f64..1.0) {
            prop_assert!(softplus_raw(delta, x + dx) > softplus_raw(delta, x));
            prop_assert!(softplus_raw(delta + dx, x) > softplus_raw(delta, x));
        }

        // For δ > 0 the information about very negative x lives below the
        // resolution of λ ≈ log(1+δ); the 1e-10 roundtrip holds while eˣ/(1+δ)
        // stays above about 1e-5.
        #[test]
        fn roundtrip_in_well_conditioned_region(delta in 0.0f64..5.0, x in -10.0f64..30.0) {
            let lam = softplus_raw(delta, x);
            prop_assert!((softplus_inverse(delta, lam).unwrap() - x).abs() < 1e-10);
        }

        #[test]
        fn roundtrip_delta_zero_full_range(x in -30.0f64..30.0) {
            let lam = softplus_raw(0.0, x);
            prop_assert!((softplus_inverse(0.0, lam).unwrap() - x).abs() < 1e-10);
        }

        #[test]
        fn derivative_identity(delta in 0.0f64..5.0, x in -40.0f64..40.0) {
            let (de, dd) = softplus_deriv_raw(delta, x);
            prop_assert!((de + (1.0 + delta) * dd - 1.0).abs() < 1e-12);
            prop_assert!(de > 0.0 && de < 1.0 || x > 36.0);
            prop_assert!(dd > 0.0 && dd < 1.0);
        }

        #[test]
        fn partials_match_central_differences(delta in 0.01f64..3.0, x in -8.0f64..8.0) {
            let h = 1e-4;
            let fd_x = (softplus_raw(delta, x + h) - softplus_raw(delta, x - h)) / (2.0 * h);
            let fd_d = (softplus_raw(delta + h, x) - softplus_raw(delta - h, x)) / (2.0 * h);
            let (de, dd) = softplus_deriv_raw(delta, x);
            prop_assert!((de - fd_x).abs() / de < 1e-6);
            prop_assert!((dd - fd_d).abs() / dd < 1e-6);
        }
    }
}
