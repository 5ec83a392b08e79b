//! The multi-Gaussian mixture mechanism.
//!
//! The noise density is a mixture of `2K+1` Gaussians with common scale
//! `sigma`, centred at `k * D` for `k = -K..=K` with weights proportional to
//! `exp(-|k| eps)`. Calibration searches for the smallest `sigma` whose
//! privacy shortfall over a discretized shift grid stays nonnegative.
//!
//! # Shortfall evaluation
//!
//! For a shift `phi` the shortfall integral is
//! `S(phi) = int min(e^eps f(x) - f(x + phi), 0) dx`. Rather than integrating
//! the kinked integrand numerically, [`Mixture::shortfall`] locates the set
//! where `f(x + phi) > e^eps f(x)` (sign changes of the log-likelihood ratio)
//! and sums exact mixture CDF differences over it. Mis-locating a boundary by
//! `h` changes the result only at order `h^2`, because the integrand vanishes
//! there.
//!
//! The minimum over the shift grid `{0, b, 2b, ..., D}` is found by a coarse
//! scan at a resolution tied to `sigma`, followed by Brent
//! refinement of each local minimum and an exact evaluation of the grid
//! points bracketing the refined minimizer. The grid itself can be far too
//! large to enumerate at small `delta`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analytic_gaussian::calibrate_analytic_gaussian;
use crate::error::{DpError, Result};
use crate::numerics::{
    brent_root_nonneg, golden_section_opt, illinois, std_normal_cdf, std_normal_mass, Tolerance,
    SQRT_2PI,
};
use crate::par;
pub use crate::search::ShortfallOptions;
use crate::search::{grid_min, island_shifts, log_density_extrema};
use crate::params::{LossKind, PrivacyParams};

/// Slack the shortfall must exceed for a scale to count as feasible.
pub const FEASIBILITY_MARGIN: f64 = 1e-10;
/// Default discretization parameter.
pub const DEFAULT_ETA: f64 = 0.01;

/// Standardized distance beyond which a Gaussian component is ignored.
const COMPONENT_CUTOFF: f64 = 38.5;
/// Half-width, in units of sigma, of the scan window around each centre.
const SCAN_HALF_WIDTH: f64 = 12.0;
/// Components with `|k| eps` above this carry weight below 1e-35.
const WEIGHT_LOG_CUTOFF: f64 = 80.6;

/// A multi-Gaussian mixture noise distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiGaussianDist {
    pub params: PrivacyParams,
    pub sigma: f64,
    pub modality: u32,
    /// `sqrt(2 pi) sigma sum_k exp(-|k| eps)`.
    pub norm_const: f64,
}

impl MultiGaussianDist {
    pub fn new(params: PrivacyParams, sigma: f64, modality: u32) -> Result<Self> {
        params.validate()?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(DpError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        let norm_const = SQRT_2PI * sigma * weight_sum(params.epsilon, modality);
        Ok(Self { params, sigma, modality, norm_const })
    }

    /// Normalized mixture weights for `k = -K..=K`.
    pub fn weights(&self) -> Vec<f64> {
        let s = weight_sum(self.params.epsilon, self.modality);
        let k = self.modality as i64;
        (-k..=k).map(|j| (-(j.abs() as f64) * self.params.epsilon).exp() / s).collect()
    }

    fn component_range(&self, x: f64, cutoff: f64) -> (i64, i64) {
        let d = self.params.sensitivity;
        let k = self.modality as i64;
        let lo = ((x - cutoff * self.sigma) / d).ceil();
        let hi = ((x + cutoff * self.sigma) / d).floor();
        let lo = if lo < -(k as f64) { -k } else { lo.min(k as f64 + 1.0) as i64 };
        let hi = if hi > k as f64 { k } else { hi.max(-(k as f64) - 1.0) as i64 };
        (lo, hi)
    }

    /// Density at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.component_range(x, COMPONENT_CUTOFF);
        let eps = self.params.epsilon;
        let d = self.params.sensitivity;
        let inv = 0.5 / (self.sigma * self.sigma);
        let mut s = 0.0;
        for j in lo..=hi {
            let z = x - j as f64 * d;
            s += (-(j.abs() as f64) * eps - z * z * inv).exp();
        }
        s / self.norm_const
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        if x > 0.0 {
            return 1.0 - self.sf(x);
        }
        let w = self.weights();
        let k = self.modality as i64;
        let d = self.params.sensitivity;
        (-k..=k).zip(w.iter()).map(|(j, w)| w * std_normal_cdf((x - j as f64 * d) / self.sigma)).sum()
    }

    /// Survival function `1 - F(x)`.
    pub fn sf(&self, x: f64) -> f64 {
        self.cdf_unchecked(-x)
    }

    fn cdf_unchecked(&self, x: f64) -> f64 {
        let w = self.weights();
        let k = self.modality as i64;
        let d = self.params.sensitivity;
        (-k..=k).zip(w.iter()).map(|(j, w)| w * std_normal_cdf((x - j as f64 * d) / self.sigma)).sum()
    }

    /// Draws a component with probability proportional to its weight, then a
    /// Gaussian around its centre.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let w = self.weights();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let k = self.modality as i64;
        let mut comp = k;
        for (i, wi) in w.iter().enumerate() {
            acc += wi;
            if u < acc {
                comp = i as i64 - k;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        comp as f64 * self.params.sensitivity + self.sigma * z
    }

    /// Expected absolute noise.
    pub fn l1_loss(&self) -> f64 {
        let eps = self.params.epsilon;
        let d = self.params.sensitivity;
        let s = self.sigma;
        let k = self.modality as i64;
        let mut acc = 0.0;
        for j in -k..=k {
            let m = j as f64 * d;
            let w = (-(j.abs() as f64) * eps).exp();
            acc += w
                * (2.0 * s * s * (-m * m / (2.0 * s * s)).exp()
                    + m * SQRT_2PI * s * (1.0 - 2.0 * std_normal_cdf(-m / s)));
        }
        acc / self.norm_const
    }

    /// Expected squared noise.
    pub fn l2_loss(&self) -> f64 {
        let eps = self.params.epsilon;
        let d = self.params.sensitivity;
        let k = self.modality as i64;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in -k..=k {
            let w = (-(j.abs() as f64) * eps).exp();
            let m = j as f64 * d;
            num += w * (self.sigma * self.sigma + m * m);
            den += w;
        }
        num / den
    }

    pub fn loss(&self, kind: LossKind) -> f64 {
        match kind {
            LossKind::L1 => self.l1_loss(),
            LossKind::L2 => self.l2_loss(),
        }
    }

    /// zCDP parameter `D^2 / (2 sigma^2)`.
    pub fn zcdp_rho(&self) -> f64 {
        let r = self.params.sensitivity / self.sigma;
        0.5 * r * r
    }

    /// Radius outside which the density carries negligible mass.
    pub fn support_radius(&self) -> f64 {
        self.modality as f64 * self.params.sensitivity + 12.0 * self.sigma + self.params.sensitivity
    }

    /// Step of the calibration shift grid for discretization parameter `eta`.
    pub fn shift_step(&self, eta: f64) -> (f64, u64) {
        shift_grid(self.params.sensitivity, self.sigma, self.params.delta, eta)
    }
}

/// Free-function form of [`MultiGaussianDist::zcdp_rho`].
pub fn mg_zcdp_rho(dist: &MultiGaussianDist) -> f64 {
    dist.zcdp_rho()
}

fn weight_sum(eps: f64, k: u32) -> f64 {
    let mut s = 1.0;
    for j in 1..=k {
        s += 2.0 * (-(j as f64) * eps).exp();
    }
    s
}

/// Shift grid `(step, intervals)` with `step = D / ceil(D / (sqrt(2 pi) eta sigma delta))`.
pub fn shift_grid(sensitivity: f64, sigma: f64, delta: f64, eta: f64) -> (f64, u64) {
    let raw = sensitivity / (SQRT_2PI * eta * sigma * delta);
    let m = if raw.is_finite() { raw.ceil().max(1.0) } else { u64::MAX as f64 };
    let m = if m >= u64::MAX as f64 { u64::MAX } else { m as u64 };
    (sensitivity / m as f64, m)
}

/// Mixture in unit-sensitivity coordinates, with the bookkeeping needed to
/// evaluate shortfall integrals quickly.
#[derive(Debug, Clone)]
pub(crate) struct Mixture {
    eps: f64,
    e_eps: f64,
    sigma: f64,
    k: i64,
    /// Largest `|k|` whose weight is not negligible.
    k_sig: i64,
    inv2s2: f64,
    /// `exp(-1 / sigma^2)`, the ratio of consecutive term ratios.
    step_decay: f64,
    /// `exp(-2 eps)`, applied when a term walk crosses the central component.
    cross_decay: f64,
    weights: Vec<f64>,
}

impl Mixture {
    pub(crate) fn new(eps: f64, sigma: f64, k: u32) -> Self {
        let k = k as i64;
        let s = weight_sum(eps, k as u32);
        let weights = (-k..=k).map(|j| (-(j.abs() as f64) * eps).exp() / s).collect();
        let k_sig = k.min((WEIGHT_LOG_CUTOFF / eps).floor() as i64);
        Self {
            eps,
            e_eps: eps.exp(),
            sigma,
            k,
            k_sig,
            inv2s2: 0.5 / (sigma * sigma),
            step_decay: (-1.0 / (sigma * sigma)).exp(),
            cross_decay: (-2.0 * eps).exp(),
            weights,
        }
    }

    #[inline]
    fn log_term(&self, y: f64, j: i64) -> f64 {
        let z = y - j as f64;
        -(j.abs() as f64) * self.eps - z * z * self.inv2s2
    }

    /// `log sum_k exp(-|k| eps - (y - k)^2 / (2 sigma^2))`.
    ///
    /// Terms are summed outward from the dominant component. The log-terms
    /// are concave in `k`, so consecutive ratios shrink by a fixed factor and
    /// the walk stops once a term falls below 1e-18 of the running sum.
    pub(crate) fn log_unnormalized(&self, y: f64) -> f64 {
        let es2 = self.eps / (2.0 * self.inv2s2);
        let kc = if y - es2 > 0.0 {
            y - es2
        } else if y + es2 < 0.0 {
            y + es2
        } else {
            0.0
        };
        let kf = kc.floor().clamp(-(self.k as f64), self.k as f64) as i64;
        let kg = (kf + 1).min(self.k);
        let (k0, t0) = {
            let tf = self.log_term(y, kf);
            let tg = self.log_term(y, kg);
            if tg > tf {
                (kg, tg)
            } else {
                (kf, tf)
            }
        };
        let mut sum = 1.0;
        if k0 < self.k {
            let mut r = (self.log_term(y, k0 + 1) - t0).exp();
            let mut term = 1.0;
            let mut j = k0;
            while j < self.k {
                term *= r;
                if term < 1e-18 {
                    break;
                }
                sum += term;
                r *= self.step_decay;
                if j == -1 {
                    r *= self.cross_decay;
                }
                j += 1;
            }
        }
        if k0 > -self.k {
            let mut r = (self.log_term(y, k0 - 1) - t0).exp();
            let mut term = 1.0;
            let mut j = k0;
            while j > -self.k {
                term *= r;
                if term < 1e-18 {
                    break;
                }
                sum += term;
                r *= self.step_decay;
                if j == 1 {
                    r *= self.cross_decay;
                }
                j -= 1;
            }
        }
        t0 + sum.ln()
    }

    /// Log-likelihood ratio minus `eps`; positive where the shortfall
    /// integrand is negative.
    #[inline]
    fn excess(&self, x: f64, phi: f64) -> f64 {
        self.log_unnormalized(x + phi) - self.log_unnormalized(x) - self.eps
    }

    /// Probability mass of `[a, b]`; `a` may be `-inf`.
    fn mass(&self, a: f64, b: f64) -> f64 {
        let mut m = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            let c = (i as i64 - self.k) as f64;
            let zb = (b - c) / self.sigma;
            if zb < -COMPONENT_CUTOFF {
                continue;
            }
            if a == f64::NEG_INFINITY {
                m += w * std_normal_cdf(zb);
            } else {
                let za = (a - c) / self.sigma;
                if za > COMPONENT_CUTOFF {
                    continue;
                }
                m += w * std_normal_mass(za, zb);
            }
        }
        m
    }

    /// Scan windows for shift `phi`: neighbourhoods of the points where
    /// `x + phi` sits on a component centre, merged where they overlap.
    fn windows(&self, phi: f64) -> Vec<(f64, f64)> {
        let half = SCAN_HALF_WIDTH * self.sigma;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for j in -self.k_sig..=self.k_sig {
            let c = j as f64 - phi;
            let (a, b) = (c - half, c + half);
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = b,
                _ => out.push((a, b)),
            }
        }
        out
    }

    /// Intervals on which `f(x + phi) > e^eps f(x)`. The first interval may
    /// start at `-inf`.
    fn negative_set(&self, phi: f64) -> Vec<(f64, f64)> {
        let h = 0.25 * self.sigma;
        let xtol = 1e-9 * self.sigma;
        let mut intervals = Vec::new();
        let windows = self.windows(phi);
        let mut xs: Vec<f64> = Vec::new();
        let mut vs: Vec<f64> = Vec::new();
        for (w, &(a, b)) in windows.iter().enumerate() {
            let n = ((b - a) / h).ceil() as usize;
            xs.clear();
            vs.clear();
            for i in 0..=n {
                let x = a + (b - a) * i as f64 / n as f64;
                xs.push(x);
                vs.push(self.excess(x, phi));
            }
            let mut open: Option<f64> = if vs[0] > 0.0 {
                Some(if w == 0 { f64::NEG_INFINITY } else { a })
            } else {
                None
            };
            for i in 1..=n {
                let (v0, v1) = (vs[i - 1], vs[i]);
                if (v0 > 0.0) != (v1 > 0.0) {
                    let r = illinois(|x| self.excess(x, phi), xs[i - 1], xs[i], v0, v1, xtol);
                    if v1 > 0.0 {
                        open = Some(r);
                    } else if let Some(start) = open.take() {
                        intervals.push((start, r));
                    }
                } else if v1 <= 0.0 && i < n && v1 >= v0 && v1 >= vs[i + 1] {
                    // Interior local maximum below zero: the ratio is close to
                    // piecewise linear, so the true peak can exceed the sampled
                    // value by about one cell's rise.
                    let rise = (v1 - v0).abs().max((vs[i + 1] - v1).abs());
                    if v1 + 2.0 * rise + 1.0 > 0.0 {
                        if let Some((lo, hi)) = self.refine_bump(phi, xs[i - 1], xs[i + 1], xtol) {
                            intervals.push((lo, hi));
                        }
                    }
                }
            }
            if let Some(start) = open {
                intervals.push((start, b));
            }
        }
        intervals
    }

    /// Checks whether a local maximum of the excess between `a` and `b`
    /// crosses zero and, if so, returns the crossing points.
    fn refine_bump(&self, phi: f64, a: f64, b: f64, xtol: f64) -> Option<(f64, f64)> {
        let tol = Tolerance::golden().with_abs_x(xtol.max(1e-12 * (b - a)));
        let (xm, vm) = golden_section_opt(|x| self.excess(x, phi), a, b, true, &tol).ok()?;
        if vm <= 0.0 {
            return None;
        }
        let va = self.excess(a, phi);
        let vb = self.excess(b, phi);
        let lo = if va > 0.0 { a } else { illinois(|x| self.excess(x, phi), a, xm, va, vm, xtol) };
        let hi = if vb > 0.0 { b } else { illinois(|x| self.excess(x, phi), xm, b, vm, vb, xtol) };
        Some((lo, hi))
    }

    /// Shifts in `(0, 1]` where a narrow shortfall dip can open: differences
    /// between a mode and a valley of the mixture density.
    pub(crate) fn island_candidates(&self) -> Vec<f64> {
        let reach = self.k_sig as f64 + 6.0 * self.sigma;
        let ext = log_density_extrema(
            |y| self.log_unnormalized(y),
            -reach,
            reach,
            self.sigma / 32.0,
            1e-10 * self.sigma,
        );
        island_shifts(&ext, self.eps, 1.0, 1e-3 * self.sigma)
    }

    /// `int min(e^eps f(x) - f(x + phi), 0) dx` for unit sensitivity.
    pub(crate) fn shortfall(&self, phi: f64) -> f64 {
        if phi <= 0.0 {
            return 0.0;
        }
        let mut s = 0.0;
        for (a, b) in self.negative_set(phi) {
            let shifted_a = if a == f64::NEG_INFINITY { a } else { a + phi };
            let part = self.e_eps * self.mass(a, b) - self.mass(shifted_a, b + phi);
            // Each piece is nonpositive by construction; clip rounding noise.
            s += part.min(0.0);
        }
        s
    }
}

/// Where and how deep the worst shift sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortfallReport {
    /// `min_phi S(phi) + (1 - eta) delta`.
    pub psi: f64,
    /// Minimizing grid shift, in query units.
    pub worst_phi: f64,
    /// `min_phi S(phi)`.
    pub min_integral: f64,
    /// Number of intervals of the shift grid.
    pub grid_intervals: u64,
}

/// Evaluates the discretized privacy shortfall `psi(sigma; eta)`.
pub fn mg_shortfall(dist: &MultiGaussianDist, eta: f64) -> Result<ShortfallReport> {
    mg_shortfall_with(dist, eta, &ShortfallOptions::default())
}

/// [`mg_shortfall`] with explicit search options.
pub fn mg_shortfall_with(
    dist: &MultiGaussianDist,
    eta: f64,
    opts: &ShortfallOptions,
) -> Result<ShortfallReport> {
    check_eta(eta)?;
    let p = dist.params;
    let sigma = dist.sigma / p.sensitivity;
    let mix = Mixture::new(p.epsilon, sigma, dist.modality);
    let (_, m) = shift_grid(1.0, sigma, p.delta, eta);
    let islands = mix.island_candidates();
    let (phi, v) = grid_min(|phi| Ok(mix.shortfall(phi)), m, sigma, opts, &islands)?;
    Ok(ShortfallReport {
        psi: v + (1.0 - eta) * p.delta,
        worst_phi: phi * p.sensitivity,
        min_integral: v,
        grid_intervals: m,
    })
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(DpError::InvalidArgument(format!("eta must lie in (0,1), got {eta}")));
    }
    Ok(())
}

/// Discretized shortfall of unit-sensitivity scales for one `(eps, delta, K)`.
struct FeasibilityProbe {
    eps: f64,
    delta: f64,
    eta: f64,
    k: u32,
    opts: ShortfallOptions,
}

impl FeasibilityProbe {
    /// `psi(sigma) - FEASIBILITY_MARGIN`; the scale is feasible when this is
    /// nonnegative.
    fn excess(&self, sigma: f64) -> Result<f64> {
        let mix = Mixture::new(self.eps, sigma, self.k);
        let (_, m) = shift_grid(1.0, sigma, self.delta, self.eta);
        let islands = mix.island_candidates();
        let (_, v) = grid_min(|phi| Ok(mix.shortfall(phi)), m, sigma, &self.opts, &islands)?;
        Ok(v + (1.0 - self.eta) * self.delta - FEASIBILITY_MARGIN)
    }

    /// Smallest feasible unit scale in `(0, hi]`, where `hi` is feasible in
    /// exact arithmetic. `guess` seeds the bracket search.
    fn calibrate(&self, hi: f64, guess: Option<f64>) -> Result<f64> {
        let mut hi = hi;
        let mut f_hi = self.excess(hi)?;
        if f_hi < 0.0 {
            // The bracket end can miss the safety margin by rounding only.
            // Anything worse is a bug.
            if f_hi + FEASIBILITY_MARGIN < -1e-9 {
                return Err(DpError::Internal(format!(
                    "analytic Gaussian scale {hi} is infeasible for K = {} (psi = {})",
                    self.k,
                    f_hi + FEASIBILITY_MARGIN
                )));
            }
            let mut grown = 0;
            while f_hi < 0.0 {
                hi *= 1.0 + 1e-9 * 4f64.powi(grown);
                f_hi = self.excess(hi)?;
                grown += 1;
                if grown > 12 {
                    return Err(DpError::Internal(format!(
                        "could not reach the feasibility margin near {hi} for K = {}",
                        self.k
                    )));
                }
            }
        }
        let (lo, f_lo, hi, f_hi) = self.bracket(hi, f_hi, guess)?;
        brent_root_nonneg(|s| self.excess(s), lo, hi, f_lo, f_hi, &Tolerance::bisection(hi))
    }

    /// Finds `lo < hi` with `excess(lo) < 0 <= excess(hi)`, starting near
    /// `guess` (or at half of `hi`) and widening geometrically.
    fn bracket(&self, hi: f64, f_hi: f64, guess: Option<f64>) -> Result<(f64, f64, f64, f64)> {
        let (mut b, mut fb) = (hi, f_hi);
        let start = guess.filter(|&g| g > 0.0 && g < hi).unwrap_or(0.5 * hi);
        let f_start = self.excess(start)?;
        if f_start < 0.0 {
            // Widen upwards from an infeasible guess.
            let (mut a, mut fa) = (start, f_start);
            let mut step = 1e-3;
            loop {
                let s = a * (1.0 + step);
                if s >= b {
                    return Ok((a, fa, b, fb));
                }
                let fs = self.excess(s)?;
                if fs >= 0.0 {
                    return Ok((a, fa, s, fs));
                }
                (a, fa) = (s, fs);
                step *= 8.0;
            }
        }
        (b, fb) = (start, f_start);
        let mut step = if guess.is_some() { 1e-3 } else { 0.5 };
        for _ in 0..200 {
            let s = b * (1.0 - step);
            let fs = self.excess(s)?;
            if fs < 0.0 {
                return Ok((s, fs, b, fb));
            }
            (b, fb) = (s, fs);
            step = (step * 8.0).min(0.5);
        }
        Err(DpError::Internal(format!("no infeasible scale below {hi} for K = {}", self.k)))
    }
}

/// Calibrates `sigma` for a fixed modality `k`.
///
/// Searches `(0, sigma_g]`, where `sigma_g` is the analytic Gaussian scale
/// for `(eps, (1 - eta) delta)`, for the smallest scale with
/// `psi >= FEASIBILITY_MARGIN`.
pub fn mg_calibrate(params: &PrivacyParams, k: u32, eta: f64) -> Result<MultiGaussianDist> {
    mg_calibrate_with(params, k, eta, &ShortfallOptions::default())
}

/// [`mg_calibrate`] with explicit search options.
pub fn mg_calibrate_with(
    params: &PrivacyParams,
    k: u32,
    eta: f64,
    opts: &ShortfallOptions,
) -> Result<MultiGaussianDist> {
    calibrate_seeded(params, k, eta, opts, None)
}

fn calibrate_seeded(
    params: &PrivacyParams,
    k: u32,
    eta: f64,
    opts: &ShortfallOptions,
    guess: Option<f64>,
) -> Result<MultiGaussianDist> {
    params.validate()?;
    check_eta(eta)?;
    let unit = params.normalized();
    let sigma_g = calibrate_analytic_gaussian(&unit.with_delta((1.0 - eta) * unit.delta))?.sigma;
    let probe = FeasibilityProbe { eps: unit.epsilon, delta: unit.delta, eta, k, opts: *opts };
    let sigma = probe.calibrate(sigma_g, guess)?;
    MultiGaussianDist::new(*params, sigma * params.sensitivity, k)
}

/// Discretization and model-selection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationHyper {
    pub eta: f64,
    pub k_grid: Vec<u32>,
    pub loss: LossKind,
}

impl Default for CalibrationHyper {
    fn default() -> Self {
        Self { eta: DEFAULT_ETA, k_grid: (1..=20).collect(), loss: LossKind::L1 }
    }
}

impl CalibrationHyper {
    pub fn validate(&self) -> Result<()> {
        check_eta(self.eta)?;
        if self.k_grid.is_empty() {
            return Err(DpError::InvalidArgument("k_grid must not be empty".into()));
        }
        Ok(())
    }
}

/// Outcome of a best-K search.
#[derive(Debug, Clone)]
pub struct BestK {
    pub dist: MultiGaussianDist,
    pub k: u32,
    pub loss: f64,
    /// Every calibrated candidate, in `k_grid` order.
    pub candidates: Vec<MultiGaussianDist>,
}

/// Calibrates every `K` in the grid and keeps the one with the smallest loss.
///
/// Ties go to the smaller `K`. A `K` whose calibration fails is logged and
/// skipped.
pub fn mg_calibrate_best_k(params: &PrivacyParams, hyper: &CalibrationHyper) -> Result<BestK> {
    mg_calibrate_best_k_with(params, hyper, &ShortfallOptions::default())
}

/// [`mg_calibrate_best_k`] with explicit search options.
pub fn mg_calibrate_best_k_with(
    params: &PrivacyParams,
    hyper: &CalibrationHyper,
    opts: &ShortfallOptions,
) -> Result<BestK> {
    params.validate()?;
    hyper.validate()?;
    // The first K seeds the bracket search of the others.
    let (&k0, rest) = hyper.k_grid.split_first().expect("validated non-empty");
    let first = calibrate_seeded(params, k0, hyper.eta, opts, None);
    let guess = first.as_ref().ok().map(|d| d.sigma / params.sensitivity);
    let mut runs = vec![(k0, first)];
    runs.extend(par::map(rest, opts.execution, |&k| {
        (k, calibrate_seeded(params, k, hyper.eta, opts, guess))
    }));
    let mut candidates = Vec::new();
    let mut last_err = None;
    for (k, r) in runs {
        match r {
            Ok(d) => candidates.push(d),
            Err(e) => {
                log::warn!("multi-Gaussian calibration failed for K = {k}: {e}");
                last_err = Some(e);
            }
        }
    }
    select_best(candidates, hyper.loss).ok_or_else(|| {
        last_err.unwrap_or_else(|| DpError::Internal("no K produced a calibration".into()))
    })
}

/// Losses closer than this relative gap count as a tie.
pub const LOSS_TIE_REL: f64 = 1e-9;

/// Picks the smallest-loss candidate, preferring smaller `K` on ties.
///
/// Components beyond the significant weight range change the loss only at
/// rounding level, so losses within [`LOSS_TIE_REL`] of each other tie.
pub fn select_best(candidates: Vec<MultiGaussianDist>, loss: LossKind) -> Option<BestK> {
    let mut best: Option<(usize, f64)> = None;
    for (i, d) in candidates.iter().enumerate() {
        let l = d.loss(loss);
        best = match best {
            None => Some((i, l)),
            Some((j, lj)) => {
                let tie = (l - lj).abs() <= LOSS_TIE_REL * lj.abs();
                let smaller_k = d.modality < candidates[j].modality;
                if (!tie && l < lj) || (tie && smaller_k) {
                    Some((i, l))
                } else {
                    Some((j, lj))
                }
            }
        };
    }
    let (i, l) = best?;
    Some(BestK { dist: candidates[i].clone(), k: candidates[i].modality, loss: l, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_density_matches_direct_sum() {
        for &(eps, sigma, k) in &[(1.0, 0.25, 3u32), (0.1, 5.0, 20), (10.0, 0.03, 9), (0.5, 0.7, 0)] {
            let mix = Mixture::new(eps, sigma, k);
            for i in 0..60 {
                let y = -25.0 + i as f64 * 0.83;
                let direct: f64 = (-(k as i64)..=k as i64)
                    .map(|j| {
                        let z = y - j as f64;
                        (-(j.abs() as f64) * eps - z * z / (2.0 * sigma * sigma)).exp()
                    })
                    .sum();
                if direct > 1e-250 {
                    let got = mix.log_unnormalized(y);
                    assert!((got - direct.ln()).abs() < 1e-12 * direct.ln().abs().max(1.0), "{eps} {sigma} {k} {y}");
                }
            }
        }
    }

    #[test]
    fn gaussian_shortfall_matches_closed_form() {
        let eps: f64 = 1.0;
        let sigma = 0.8;
        let mix = Mixture::new(eps, sigma, 0);
        for &phi in &[0.1, 0.5, 1.0] {
            let x0 = -phi / 2.0 - eps * sigma * sigma / phi;
            let exact = eps.exp() * std_normal_cdf(x0 / sigma) - std_normal_cdf((x0 + phi) / sigma);
            let got = mix.shortfall(phi);
            assert!((got - exact).abs() < 1e-15, "{phi}: {got} vs {exact}");
        }
    }
}
