//! The analytic Gaussian mechanism, used as the baseline for every
//! improvement figure.
//!
//! The minimal noise scale solves
//! `delta = Phi(D/(2s) - e s/D) - exp(e) Phi(-D/(2s) - e s/D)`, whose
//! right-hand side is strictly decreasing in `s`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::numerics::{bisect_feasible, std_normal_cdf, Tolerance};
use crate::params::PrivacyParams;

/// A zero-mean Gaussian noise mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMechanism {
    pub params: PrivacyParams,
    pub sigma: f64,
}

/// Right-hand side of the calibration equation at noise scale `sigma`.
pub fn calibration_rhs(params: &PrivacyParams, sigma: f64) -> f64 {
    let r = sigma / params.sensitivity;
    let eps = params.epsilon;
    let a = 0.5 / r;
    let b = eps * r;
    let second = std_normal_cdf(-a - b);
    let second = if second == 0.0 { 0.0 } else { eps.exp() * second };
    std_normal_cdf(a - b) - second
}

/// `delta - rhs(sigma)`; nonnegative exactly when `sigma` is feasible.
pub fn calibration_residual(params: &PrivacyParams, sigma: f64) -> f64 {
    params.delta - calibration_rhs(params, sigma)
}

/// Solves the calibration equation for the smallest feasible `sigma`.
///
/// Works at unit sensitivity and rescales. The returned value is the feasible
/// end of the final bisection bracket.
pub fn calibrate_analytic_gaussian(params: &PrivacyParams) -> Result<GaussianMechanism> {
    params.validate()?;
    let unit = params.normalized();
    let lo = 1e-10;
    let mut hi = (2.0 * (1.25 / unit.delta).ln()).sqrt() / unit.epsilon;
    let mut grown = 0;
    while calibration_rhs(&unit, hi) > unit.delta {
        hi *= 2.0;
        grown += 1;
        if grown > 200 || !hi.is_finite() {
            return Err(DpError::Bracket(format!(
                "no feasible upper bracket for the analytic Gaussian at {params:?}"
            )));
        }
    }
    if calibration_rhs(&unit, lo) <= unit.delta {
        return Err(DpError::Bracket(format!(
            "lower bracket already feasible for {params:?}; delta is too close to 1"
        )));
    }
    let tol = Tolerance::bisection(hi);
    let r = bisect_feasible(|s| Ok(calibration_rhs(&unit, s) <= unit.delta), lo, hi, &tol)?;
    Ok(GaussianMechanism { params: *params, sigma: r * params.sensitivity })
}

impl GaussianMechanism {
    /// Wraps an explicit noise scale.
    pub fn new(params: PrivacyParams, sigma: f64) -> Result<Self> {
        params.validate()?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(DpError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { params, sigma })
    }

    /// Expected absolute noise, `sigma * sqrt(2/pi)`.
    pub fn l1_loss(&self) -> f64 {
        self.sigma * std::f64::consts::FRAC_2_PI.sqrt()
    }

    /// Noise variance.
    pub fn l2_loss(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn pdf(&self, x: f64) -> f64 {
        crate::numerics::std_normal_pdf(x / self.sigma) / self.sigma
    }

    pub fn cdf(&self, x: f64) -> f64 {
        std_normal_cdf(x / self.sigma)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.sigma * z
    }

    /// zCDP parameter `D^2 / (2 sigma^2)`.
    pub fn zcdp_rho(&self) -> f64 {
        let r = self.params.sensitivity / self.sigma;
        0.5 * r * r
    }
}

/// Free-function form of [`GaussianMechanism::l1_loss`].
pub fn gaussian_l1_loss(mech: &GaussianMechanism) -> f64 {
    mech.l1_loss()
}

/// Free-function form of [`GaussianMechanism::l2_loss`].
pub fn gaussian_l2_loss(mech: &GaussianMechanism) -> f64 {
    mech.l2_loss()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_is_tiny_and_feasible() {
        let p = PrivacyParams::new(1.0, 0.1, 1.0).unwrap();
        let m = calibrate_analytic_gaussian(&p).unwrap();
        let r = calibration_residual(&p, m.sigma);
        assert!((0.0..1e-9).contains(&r), "residual {r}");
    }

    #[test]
    fn losses() {
        let p = PrivacyParams::new(1.0, 0.1, 1.0).unwrap();
        let m = GaussianMechanism::new(p, 2.0).unwrap();
        assert!((m.l1_loss() - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(m.l2_loss(), 4.0);
    }
}
