//! The quasi-Gaussian mixture mechanism.
//!
//! The density mixes a centred Gaussian (weight proportional to `e^eps`) with
//! the folded shape `exp(-(|x| - D)^2 / (2 sigma^2))`. Calibration needs no
//! hyperparameters: `sigma = max(sigma_1, sigma_2)` where `sigma_1` is the
//! root of a closed-form tail condition and `sigma_2` makes the ratio of the
//! density's maximum to its minimum on `[0, D]` equal to `e^eps`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DpError, Result};
use crate::numerics::{
    bisect_feasible, golden_section_opt, std_normal_cdf, std_normal_cdf_inv, Tolerance, SQRT_2PI,
};
use crate::params::{LossKind, PrivacyParams};

/// A quasi-Gaussian mixture noise distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiGaussianDist {
    pub params: PrivacyParams,
    pub sigma: f64,
    /// `sqrt(2 pi) sigma (e^eps + 2 Phi(D / sigma))`.
    pub norm_const: f64,
}

impl QuasiGaussianDist {
    pub fn new(params: PrivacyParams, sigma: f64) -> Result<Self> {
        params.validate()?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(DpError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        let norm_const =
            SQRT_2PI * sigma * (params.epsilon.exp() + 2.0 * std_normal_cdf(params.sensitivity / sigma));
        Ok(Self { params, sigma, norm_const })
    }

    /// Probability of the central Gaussian branch, `e^eps / (e^eps + 2 Phi(D/sigma))`.
    pub fn central_weight(&self) -> f64 {
        let p = std_normal_cdf(self.params.sensitivity / self.sigma);
        1.0 / (1.0 + 2.0 * p * (-self.params.epsilon).exp())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let s2 = 2.0 * self.sigma * self.sigma;
        let d = self.params.sensitivity;
        let fold = x.abs() - d;
        (self.params.epsilon.exp() * (-x * x / s2).exp() + (-fold * fold / s2).exp()) / self.norm_const
    }

    /// Log-density, stable for arguments far in the tails.
    pub fn log_pdf(&self, x: f64) -> f64 {
        let s2 = 2.0 * self.sigma * self.sigma;
        let fold = x.abs() - self.params.sensitivity;
        log_add(self.params.epsilon - x * x / s2, -fold * fold / s2) - self.norm_const.ln()
    }

    /// Piecewise closed-form CDF, split at zero.
    pub fn cdf(&self, x: f64) -> f64 {
        let e = self.params.epsilon.exp();
        let d = self.params.sensitivity;
        let s = self.sigma;
        let pd = std_normal_cdf(d / s);
        let den = e + 2.0 * pd;
        if x < 0.0 {
            (e * std_normal_cdf(x / s) + std_normal_cdf((x + d) / s)) / den
        } else {
            (e * std_normal_cdf(x / s) + std_normal_cdf((x - d) / s) + pd - std_normal_cdf(-d / s)) / den
        }
    }

    /// Two-branch sampler: the central Gaussian, or a Gaussian around `D`
    /// truncated to the positive half-line drawn by inversion, with a random
    /// sign.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if u < self.central_weight() {
            let z: f64 = StandardNormal.sample(rng);
            return self.sigma * z;
        }
        let d = self.params.sensitivity;
        let r = d / self.sigma;
        let p: f64 = rng.random();
        let q = std_normal_cdf(-r) + p * std_normal_cdf(r);
        let x = if q < 0.5 {
            d + self.sigma * std_normal_cdf_inv(q).unwrap_or(-r)
        } else {
            // Same quantile measured from the upper tail.
            let upper = (1.0 - p) * std_normal_cdf(r);
            if upper <= 0.0 {
                d + self.sigma * 40.0
            } else {
                d - self.sigma * std_normal_cdf_inv(upper).unwrap_or(0.0)
            }
        };
        let flip: bool = rng.random();
        if flip {
            -x
        } else {
            x
        }
    }

    /// Expected absolute noise.
    pub fn l1_loss(&self) -> f64 {
        let e = self.params.epsilon.exp();
        let d = self.params.sensitivity;
        let s = self.sigma;
        let pd = std_normal_cdf(d / s);
        ((2.0 / std::f64::consts::PI).sqrt() * s * (e + (-d * d / (2.0 * s * s)).exp()) + 2.0 * d * pd)
            / (e + 2.0 * pd)
    }

    /// Expected squared noise.
    pub fn l2_loss(&self) -> f64 {
        let e = self.params.epsilon.exp();
        let d = self.params.sensitivity;
        let s = self.sigma;
        let pd = std_normal_cdf(d / s);
        (e * s * s + 2.0 * (pd * (s * s + d * d) + s * d / SQRT_2PI * (-d * d / (2.0 * s * s)).exp()))
            / (e + 2.0 * pd)
    }

    pub fn loss(&self, kind: LossKind) -> f64 {
        match kind {
            LossKind::L1 => self.l1_loss(),
            LossKind::L2 => self.l2_loss(),
        }
    }

    /// Radius outside which the density carries negligible mass.
    pub fn support_radius(&self) -> f64 {
        self.params.sensitivity + 12.0 * self.sigma
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Tail condition `h1 + h2` whose root is `sigma_1`.
pub fn qg_psi1(params: &PrivacyParams, sigma: f64) -> f64 {
    let eps = params.epsilon;
    let r = sigma / params.sensitivity;
    let a = eps * r;
    let b = 1.0 / r;
    let t1 = std_normal_cdf(-a - b);
    let t1 = if t1 == 0.0 { 0.0 } else { (2.0 * eps).exp() * t1 };
    t1 - std_normal_cdf(-a + b) + (eps.exp() + 2.0 * std_normal_cdf(b)) * params.delta
}

/// Right end of the region where `qg_psi1` is increasing.
pub fn psi1_region_end(params: &PrivacyParams) -> f64 {
    (2.0 * (params.epsilon - params.delta.ln())).sqrt() * params.sensitivity / params.epsilon
}

/// Smallest scale meeting the tail condition; zero when it holds for every scale.
pub fn qg_sigma1(params: &PrivacyParams) -> Result<f64> {
    params.validate()?;
    let unit = params.normalized();
    if unit.epsilon.exp() + 2.0 >= 1.0 / unit.delta {
        return Ok(0.0);
    }
    let lo = 1e-10;
    let hi = psi1_region_end(&unit);
    // The lower-end sign comes from the limit (e^eps + 2) delta - 1 < 0.
    if qg_psi1(&unit, hi) < 0.0 {
        return Err(DpError::Internal(format!(
            "tail condition negative at the end of its monotone region for {params:?}"
        )));
    }
    let tol = Tolerance::bisection(hi);
    let s = bisect_feasible(|s| Ok(qg_psi1(&unit, s) >= 0.0), lo, hi, &tol)?;
    Ok(s * params.sensitivity)
}

/// Which branch of the unimodality case analysis produced a [`MaxMinResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxMinCase {
    /// `D^2 <= 4 sigma^2`: the density decreases past its peak on `[0, D]`.
    WideScale,
    /// `D^2 > 4 sigma^2` and the candidate interior minimum is not a
    /// minimum (`t <= 0`).
    NarrowNoInteriorMin,
    /// `D^2 > 4 sigma^2` with an interior local minimum (`t > 0`).
    NarrowInteriorMin,
}

/// Extremes of the density on `[0, D]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxMinResult {
    pub x_max: f64,
    pub f_max: f64,
    pub x_min: f64,
    pub f_min: f64,
    pub case_tag: MaxMinCase,
    /// `log(f_max / f_min)`, kept separately because the ratio overflows
    /// for very small scales.
    pub log_ratio: f64,
}

/// Locates the maximum and minimum of the density on `[0, D]`.
pub fn qg_max_min(params: &PrivacyParams, sigma: f64) -> Result<MaxMinResult> {
    params.validate()?;
    if !(sigma > 0.0) {
        return Err(DpError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let d = params.sensitivity;
    let dist = QuasiGaussianDist::new(*params, sigma)?;
    let unit = max_min_unit(params.epsilon, sigma / d)?;
    let x_max = unit.x_max * d;
    let x_min = unit.x_min * d;
    Ok(MaxMinResult {
        x_max,
        f_max: dist.pdf(x_max),
        x_min,
        f_min: dist.pdf(x_min),
        case_tag: unit.case_tag,
        log_ratio: unit.log_ratio,
    })
}

struct UnitMaxMin {
    x_max: f64,
    x_min: f64,
    case_tag: MaxMinCase,
    log_ratio: f64,
}

fn max_min_unit(eps: f64, sigma: f64) -> Result<UnitMaxMin> {
    let s2 = 2.0 * sigma * sigma;
    // Unnormalized log-density on x >= 0.
    let lf = |x: f64| log_add(eps - x * x / s2, -(x - 1.0) * (x - 1.0) / s2);
    let tol = Tolerance::golden();
    let inset = 1e-12;
    let disc = 1.0 - 4.0 * sigma * sigma;
    let (case_tag, x_max, x_min) = if disc <= 0.0 {
        let (xm, _) = golden_section_opt(lf, inset, 0.5 - inset, true, &tol)?;
        (MaxMinCase::WideScale, xm, 1.0)
    } else {
        let root = disc.sqrt();
        let x1 = 0.5 * (1.0 - root);
        let x2 = 0.5 * (1.0 + root);
        let (xm, _) = golden_section_opt(lf, inset, (x1 - inset).max(2.0 * inset), true, &tol)?;
        if t_positive(eps, sigma, x2) {
            let (xn, vn) = golden_section_opt(lf, 0.5 + inset, (x2 - inset).max(0.5 + 2.0 * inset), false, &tol)?;
            let x_min = if vn < lf(1.0) { xn } else { 1.0 };
            (MaxMinCase::NarrowInteriorMin, xm, x_min)
        } else {
            (MaxMinCase::NarrowNoInteriorMin, xm, 1.0)
        }
    };
    Ok(UnitMaxMin { x_max, x_min, case_tag, log_ratio: lf(x_max) - lf(x_min) })
}

/// Sign of `t = -e^eps + ((D - x2) / x2) exp((2 x2 D - D^2) / (2 sigma^2))`
/// (unit sensitivity), compared in logs to avoid overflow.
fn t_positive(eps: f64, sigma: f64, x2: f64) -> bool {
    let gap = 1.0 - x2;
    if gap <= 0.0 {
        return false;
    }
    (gap / x2).ln() + (2.0 * x2 - 1.0) / (2.0 * sigma * sigma) > eps
}

/// The ratio value `t` itself (may be infinite); exposed for diagnostics.
pub fn max_min_t(params: &PrivacyParams, sigma: f64) -> f64 {
    let d = params.sensitivity;
    let disc = (d * d - 4.0 * sigma * sigma).max(0.0);
    let x2 = 0.5 * (d + disc.sqrt());
    -params.epsilon.exp() + ((d - x2) / x2) * ((2.0 * x2 * d - d * d) / (2.0 * sigma * sigma)).exp()
}

/// `f_max / f_min - e^eps`; nonpositive exactly when the ratio condition holds.
pub fn qg_psi2(params: &PrivacyParams, sigma: f64) -> Result<f64> {
    let unit = max_min_unit(params.epsilon, sigma / params.sensitivity)?;
    Ok(unit.log_ratio.exp() - params.epsilon.exp())
}

/// Smallest scale meeting the ratio condition.
///
/// The ratio is not monotone in the scale for small `eps`: below about
/// `eps = 0.25` it can dip under `e^eps`, rise above it and fall again. The
/// first crossing is located by a uniform scan of `(0, D / sqrt(2 eps)]`
/// followed by bisection inside the first feasible scan cell.
pub fn qg_sigma2(params: &PrivacyParams) -> Result<f64> {
    params.validate()?;
    let eps = params.epsilon;
    let hi = ratio_bound_end(eps)?;
    Ok(first_ratio_feasible(eps, 0.0, hi)? * params.sensitivity)
}

/// Number of scan cells used to locate the first feasible scale.
const RATIO_SCAN_CELLS: usize = 256;

/// `D / sqrt(2 eps)` in unit sensitivity; the ratio condition holds there
/// and at every larger scale.
fn ratio_bound_end(eps: f64) -> Result<f64> {
    let hi = (1.0 / (2.0 * eps)).sqrt();
    let end = max_min_unit(eps, hi)?;
    if end.log_ratio > eps + 1e-9 {
        return Err(DpError::Internal(format!("ratio condition fails at sigma = D / sqrt(2 eps) for eps = {eps}")));
    }
    Ok(hi)
}

/// Smallest unit scale in `[lo, hi]` meeting the ratio condition, where `hi`
/// is known to meet it. Feasible stretches narrower than a scan cell can be
/// skipped, which only moves the answer to a larger feasible scale.
fn first_ratio_feasible(eps: f64, lo: f64, hi: f64) -> Result<f64> {
    let feasible = |s: f64| -> Result<bool> { Ok(max_min_unit(eps, s)?.log_ratio <= eps) };
    if lo >= hi {
        return Ok(lo);
    }
    if lo > 0.0 && feasible(lo)? {
        return Ok(lo);
    }
    let tol = Tolerance::bisection(hi);
    let mut prev = lo;
    for i in 1..=RATIO_SCAN_CELLS {
        let s = if i == RATIO_SCAN_CELLS { hi } else { lo + (hi - lo) * i as f64 / RATIO_SCAN_CELLS as f64 };
        if feasible(s)? {
            return bisect_feasible(feasible, prev, s, &tol);
        }
        prev = s;
    }
    Err(DpError::Internal(format!("ratio condition fails at the end of the scan for eps = {eps}")))
}

/// Calibrated quasi-Gaussian mechanism together with its two scale bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiCalibration {
    pub dist: QuasiGaussianDist,
    pub sigma1: f64,
    pub sigma2: f64,
}

/// Full calibration: `sigma = max(sigma_1, sigma_2)`, raised to the next
/// scale meeting the ratio condition when that maximum does not.
pub fn qg_calibrate(params: &PrivacyParams) -> Result<QuasiGaussianDist> {
    Ok(qg_calibrate_detailed(params)?.dist)
}

/// [`qg_calibrate`] that also reports both scale bounds.
pub fn qg_calibrate_detailed(params: &PrivacyParams) -> Result<QuasiCalibration> {
    let sigma1 = qg_sigma1(params)?;
    let sigma2 = qg_sigma2(params)?;
    let d = params.sensitivity;
    // Where the ratio is not monotone, max(sigma_1, sigma_2) can land in a
    // stretch that violates the ratio condition; move up to the next scale
    // that meets it.
    let base = sigma1.max(sigma2) / d;
    let hi = ratio_bound_end(params.epsilon)?;
    let next = if base >= hi { base } else { first_ratio_feasible(params.epsilon, base, hi)? };
    let sigma = if next == base { sigma1.max(sigma2) } else { next * d };
    let dist = QuasiGaussianDist::new(*params, sigma)?;
    Ok(QuasiCalibration { dist, sigma1, sigma2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_branches_meet_at_zero() {
        let p = PrivacyParams::new(1.0, 0.1, 1.0).unwrap();
        let d = QuasiGaussianDist::new(p, 0.25).unwrap();
        assert!((d.cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((d.cdf(-1e-300) - 0.5).abs() < 1e-12);
    }

    // Crossings of the ratio condition at eps = 0.155 from a 4e5-point grid
    // scan of the log-density with bisection in the scale: 0.421505,
    // 0.488173 and 0.784803.
    #[test]
    fn sigma2_is_first_crossing_of_a_non_monotone_ratio() {
        let p = PrivacyParams::new(0.155, 1e-5, 1.0).unwrap();
        assert!((qg_sigma2(&p).unwrap() - 0.421505).abs() < 1e-5);
        let wide = PrivacyParams::new(0.155, 1e-5, 3.0).unwrap();
        assert!((qg_sigma2(&wide).unwrap() - 3.0 * 0.421505).abs() < 3e-5);
    }

    #[test]
    fn calibration_skips_the_infeasible_stretch() {
        let p = PrivacyParams::new(0.155, 0.3, 1.0).unwrap();
        let cal = qg_calibrate_detailed(&p).unwrap();
        assert!(cal.sigma1 > 0.488173 && cal.sigma1 < 0.784803);
        assert!((cal.dist.sigma - 0.784803).abs() < 1e-5);
        assert!(qg_max_min(&p, cal.dist.sigma).unwrap().log_ratio <= p.epsilon);
    }

    #[test]
    fn sigma1_zero_branch() {
        let p = PrivacyParams::new(1.0, 0.25, 1.0).unwrap();
        assert_eq!(qg_sigma1(&p).unwrap(), 0.0);
    }

    #[test]
    fn wide_case_minimum_at_sensitivity() {
        let p = PrivacyParams::new(1.0, 0.1, 1.0).unwrap();
        let r = qg_max_min(&p, 0.6).unwrap();
        assert_eq!(r.case_tag, MaxMinCase::WideScale);
        assert_eq!(r.x_min, 1.0);
    }
}
