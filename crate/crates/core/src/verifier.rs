//! Numerical (epsilon, delta)-DP check for symmetric additive-noise densities.
//!
//! For a symmetric density `f` the mechanism is private exactly when
//! `int min(e^eps f(x) - f(x + phi), 0) dx + delta >= 0` for every shift
//! `phi` in `[0, D]`. The verifier evaluates that integral by adaptive
//! Gauss-Kronrod quadrature of the kinked integrand, using nothing but
//! point evaluations of the density, and minimizes it over a uniform shift
//! grid. The outcome is a grid certificate: it certifies the condition on
//! the grid points, not on the continuum between them.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::analytic_gaussian::GaussianMechanism;
use crate::error::{DpError, Result};
use crate::multi_gaussian::{shift_grid, MultiGaussianDist, DEFAULT_ETA};
use crate::numerics::{adaptive_quad_points, QuadResult, Tolerance};
use crate::par::Execution;
use crate::params::{Mechanism, PrivacyParams};
use crate::quasi_gaussian::QuasiGaussianDist;
use crate::result::CalibrationResult;
use crate::search::{grid_min, island_shifts, log_density_extrema, Extrema, ShortfallOptions};

/// Grid and accuracy policy of the verifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    /// Number of shift points on `[0, D]`, both ends included.
    pub phi_grid_size: u64,
    /// Relative quadrature tolerance.
    pub quad_tol: f64,
    /// Absolute quadrature tolerance floor.
    pub quad_abs_tol: f64,
    /// Smallest acceptable slack after subtracting the error bound.
    pub slack_margin: f64,
    /// Width of the initial quadrature panels; `None` uses 1/256 of the window.
    pub x_resolution: Option<f64>,
    /// Grids with at most this many intervals are enumerated exhaustively.
    pub exhaustive_limit: u64,
    #[serde(skip, default)]
    pub execution: Execution,
}

impl VerifierConfig {
    /// Config with `phi_grid_size` points and default tolerances.
    pub fn with_grid(phi_grid_size: u64) -> Self {
        Self {
            phi_grid_size,
            quad_tol: 1e-10,
            quad_abs_tol: 1e-13,
            slack_margin: -1e-9,
            x_resolution: None,
            exhaustive_limit: 256,
            execution: Execution::default(),
        }
    }

    /// Default grid for scale `sigma`: spacing at most `sqrt(2 pi) (eta/2) sigma delta`.
    pub fn default_for(params: &PrivacyParams, sigma: f64, eta: f64) -> Self {
        let (_, m) = shift_grid(params.sensitivity, sigma, params.delta, 0.5 * eta);
        let mut cfg = Self::with_grid(m.saturating_add(1));
        cfg.x_resolution = Some(0.5 * sigma);
        cfg
    }

    fn validate(&self) -> Result<()> {
        if self.phi_grid_size < 2 {
            return Err(DpError::InvalidArgument("phi_grid_size must be at least 2".into()));
        }
        if !(self.quad_tol > 0.0) {
            return Err(DpError::InvalidArgument("quad_tol must be positive".into()));
        }
        Ok(())
    }
}

/// How the minimum over the shift grid was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMethod {
    /// Every grid point was evaluated.
    Exhaustive,
    /// Coarse scan plus refinement of local minima.
    ScanRefine,
}

/// Outcome of a verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Shift with the smallest slack, in query units.
    pub worst_phi: f64,
    /// `min_phi [int min(e^eps f(x) - f(x + phi), 0) dx + delta]`.
    pub worst_slack: f64,
    /// `worst_slack - quad_err_bound >= slack_margin`.
    pub passed: bool,
    /// Largest quadrature error estimate among the evaluated shifts.
    pub quad_err_bound: f64,
    pub phi_grid_size: u64,
    pub method: GridMethod,
    /// Always "grid certificate": the check covers grid points only.
    pub certificate: String,
}

/// Shortfall integral at one shift by adaptive quadrature over
/// `[-R - |phi|, R + |phi|]`.
pub fn shortfall_at(
    pdf: &(dyn Fn(f64) -> f64 + Sync),
    support_radius: f64,
    epsilon: f64,
    phi: f64,
    cfg: &VerifierConfig,
) -> Result<QuadResult> {
    shortfall_with_breaks(pdf, support_radius, epsilon, phi, cfg, &Extrema::default())
}

/// [`shortfall_at`] with extra panel boundaries at the density valleys and at
/// the modes shifted by `-phi`, where narrow negative pieces of the
/// integrand sit.
fn shortfall_with_breaks(
    pdf: &(dyn Fn(f64) -> f64 + Sync),
    support_radius: f64,
    epsilon: f64,
    phi: f64,
    cfg: &VerifierConfig,
    ext: &Extrema,
) -> Result<QuadResult> {
    if phi == 0.0 {
        return Ok(QuadResult { value: 0.0, err: 0.0, panels: 0 });
    }
    let e = epsilon.exp();
    let a = -support_radius - phi.abs();
    let b = support_radius + phi.abs();
    let width = cfg.x_resolution.unwrap_or((b - a) / 256.0).max((b - a) / 200_000.0);
    let n = ((b - a) / width).ceil().max(1.0) as usize;
    let mut points: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let breaks = ext.valleys.iter().map(|v| v.0).chain(ext.modes.iter().map(|m| m.0 - phi));
    points.extend(breaks.filter(|&x| x > a && x < b));
    points.sort_by(f64::total_cmp);
    points.dedup();
    let tol = Tolerance { abs_x: f64::EPSILON, rel_f: cfg.quad_tol, abs_f: cfg.quad_abs_tol, max_iter: 8 * points.len() + 20_000 };
    adaptive_quad_points(|x| (e * pdf(x) - pdf(x + phi)).min(0.0), &points, &tol)
        .map_err(|err| DpError::Shortfall { phi, source: Box::new(err) })
}

/// Checks the DP condition of a symmetric density on a uniform shift grid.
pub fn verify_dp(
    pdf: &(dyn Fn(f64) -> f64 + Sync),
    support_radius: f64,
    params: &PrivacyParams,
    cfg: &VerifierConfig,
) -> Result<VerificationReport> {
    params.validate()?;
    cfg.validate()?;
    if !(support_radius > 0.0) {
        return Err(DpError::InvalidArgument("support_radius must be positive".into()));
    }
    let d = params.sensitivity;
    let intervals = cfg.phi_grid_size - 1;
    let resolution = cfg.x_resolution.unwrap_or(d / 8.0) / d;
    let method =
        if intervals <= cfg.exhaustive_limit { GridMethod::Exhaustive } else { GridMethod::ScanRefine };
    let h = cfg.x_resolution.unwrap_or(d / 8.0) / 16.0;
    let ext = log_density_extrema(|x| pdf(x).ln(), -support_radius, support_radius, h, 1e-10 * h);
    let islands =
        if method == GridMethod::ScanRefine { island_shifts(&ext, params.epsilon, d, 1e-2 * h / d) } else { Vec::new() };
    let max_err = Mutex::new(0.0f64);
    let eval = |u: f64| -> Result<f64> {
        let r = shortfall_with_breaks(pdf, support_radius, params.epsilon, u * d, cfg, &ext)?;
        let mut m = max_err.lock().expect("error accumulator");
        *m = m.max(r.err);
        Ok(r.value)
    };
    let opts = ShortfallOptions {
        execution: cfg.execution,
        exhaustive_limit: cfg.exhaustive_limit,
        grid_cap: u64::MAX,
    };
    let (phi, v) = grid_min(eval, intervals, resolution, &opts, &islands)?;
    let quad_err_bound = *max_err.lock().expect("error accumulator");
    let worst_slack = v + params.delta;
    Ok(VerificationReport {
        worst_phi: phi * d,
        worst_slack,
        passed: worst_slack - quad_err_bound >= cfg.slack_margin,
        quad_err_bound,
        phi_grid_size: cfg.phi_grid_size,
        method,
        certificate: "grid certificate".into(),
    })
}

/// Re-verifies a calibration on a grid `refine_factor` times finer than the
/// calibration grid.
///
/// Mechanisms calibrated without a shift grid use the default
/// discretization parameter to define their reference grid.
pub fn verify_calibrated(result: &CalibrationResult, refine_factor: f64) -> Result<VerificationReport> {
    verify_calibrated_with(result, refine_factor, Execution::default())
}

/// [`verify_calibrated`] with an explicit execution policy.
pub fn verify_calibrated_with(
    result: &CalibrationResult,
    refine_factor: f64,
    execution: Execution,
) -> Result<VerificationReport> {
    if !(refine_factor >= 1.0) {
        return Err(DpError::InvalidArgument(format!("refine_factor must be >= 1, got {refine_factor}")));
    }
    let p = result.params;
    let sigma = result.sigma;
    let eta = result.eta.unwrap_or(DEFAULT_ETA);
    let (_, m) = shift_grid(p.sensitivity, sigma, p.delta, eta);
    let intervals = (m as f64 * refine_factor).ceil();
    let intervals = if intervals >= 1.8e19 { u64::MAX - 1 } else { intervals as u64 };
    let mut cfg = VerifierConfig::with_grid(intervals + 1);
    cfg.x_resolution = Some(0.5 * sigma);
    cfg.execution = execution;
    match result.mechanism {
        Mechanism::AnalyticGaussian => {
            let g = GaussianMechanism::new(p, sigma)?;
            verify_dp(&|x| g.pdf(x), p.sensitivity + 12.0 * sigma, &p, &cfg)
        }
        Mechanism::MultiGaussian => {
            let k = result.chosen_k.ok_or_else(|| {
                DpError::InvalidArgument("multi-Gaussian result without a modality".into())
            })?;
            let dist = MultiGaussianDist::new(p, sigma, k)?;
            verify_dp(&|x| dist.pdf(x), dist.support_radius(), &p, &cfg)
        }
        Mechanism::QuasiGaussian => {
            let dist = QuasiGaussianDist::new(p, sigma)?;
            verify_dp(&|x| dist.pdf(x), dist.support_radius(), &p, &cfg)
        }
    }
}
