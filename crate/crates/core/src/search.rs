//! Minimization of a shortfall function over a uniform shift grid.
//!
//! Small grids are enumerated. Larger ones are scanned at a resolution tied
//! to the noise scale, every local minimum of the scan is refined by Brent's
//! method, and the grid points bracketing each refined minimizer are
//! evaluated exactly. The reported minimum is always the value at an actual
//! grid point.
//!
//! A coarse scan cannot see dips narrower than its spacing. For a smooth
//! log-density `L` the set where `L(x + phi) - L(x) > eps` is a union of
//! regions in the `(x, phi)` plane, and a region that does not reach the
//! boundary of the plane contains a local maximum of `L(x + phi) - L(x)`.
//! Both partial derivatives vanish there, so `x` is a local minimum of `L`
//! and `x + phi` a local maximum. The shifts `mode - valley` are therefore
//! passed in as candidates and each is refined from its own position.

use crate::error::{DpError, Result};
use crate::numerics::{brent_min, golden_section_opt, Tolerance};
use crate::par::{self, Execution};

/// Largest shift grid that will be enumerated point by point.
pub const DEFAULT_GRID_CAP: u64 = 10_000_000;

/// Options for the shift-grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortfallOptions {
    pub execution: Execution,
    /// Grids with at most this many intervals are enumerated exhaustively.
    pub exhaustive_limit: u64,
    /// Exhaustive enumeration refuses grids above this size.
    pub grid_cap: u64,
}

impl Default for ShortfallOptions {
    fn default() -> Self {
        Self { execution: Execution::default(), exhaustive_limit: 64, grid_cap: DEFAULT_GRID_CAP }
    }
}

impl ShortfallOptions {
    /// Options that enumerate every grid point up to the cap.
    pub fn exhaustive() -> Self {
        Self { exhaustive_limit: DEFAULT_GRID_CAP, ..Self::default() }
    }
}

/// Local maxima and minima of a sampled log-density, as `(x, log f(x))`.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Extrema {
    pub modes: Vec<(f64, f64)>,
    pub valleys: Vec<(f64, f64)>,
}

/// Finds the interior extrema of `logf` on `[lo, hi]` by sampling at spacing
/// at most `h` and refining each sampled extremum by golden-section search.
/// Non-finite samples are skipped.
pub(crate) fn log_density_extrema<F>(logf: F, lo: f64, hi: f64, h: f64, xtol: f64) -> Extrema
where
    F: Fn(f64) -> f64,
{
    let n = ((hi - lo) / h).ceil().max(2.0) as usize;
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| logf(x)).collect();
    let tol = Tolerance::golden().with_abs_x(xtol);
    let mut out = Extrema::default();
    for i in 1..n {
        let (a, v, b) = (vs[i - 1], vs[i], vs[i + 1]);
        if !(a.is_finite() && v.is_finite() && b.is_finite()) {
            continue;
        }
        let is_max = v >= a && v > b;
        let is_min = v <= a && v < b;
        if !(is_max || is_min) {
            continue;
        }
        if let Ok(found) = golden_section_opt(&logf, xs[i - 1], xs[i + 1], is_max, &tol) {
            if found.1.is_finite() {
                if is_max {
                    out.modes.push(found);
                } else {
                    out.valleys.push(found);
                }
            }
        }
    }
    out
}

/// Unit shifts `(mode - valley) / sensitivity` in `(0, 1]` at which the
/// log-ratio has a local maximum above `eps`, merged when closer than
/// `merge_tol`. The shift with the larger excess represents a cluster.
pub(crate) fn island_shifts(ext: &Extrema, eps: f64, sensitivity: f64, merge_tol: f64) -> Vec<f64> {
    let mut found: Vec<(f64, f64)> = Vec::new();
    for &(m, lm) in &ext.modes {
        for &(v, lv) in &ext.valleys {
            let phi = (m - v) / sensitivity;
            let excess = lm - lv - eps;
            if phi > 0.0 && phi <= 1.0 + 1e-12 && excess > -1e-9 {
                found.push((phi.min(1.0), excess));
            }
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (phi, excess) in found {
        match out.last_mut() {
            Some(last) if phi - last.0 <= merge_tol => {
                if excess > last.1 {
                    *last = (phi, excess);
                }
            }
            _ => out.push((phi, excess)),
        }
    }
    out.into_iter().map(|(phi, _)| phi).collect()
}

/// Searches the shift grid `{0, step, ..., 1}` (unit sensitivity) for the
/// smallest value of `eval`.
///
/// `candidates` are unit shifts where narrow dips may sit; each one is
/// refined locally in addition to the scan.
pub(crate) fn grid_min<F>(
    eval: F,
    intervals: u64,
    resolution: f64,
    opts: &ShortfallOptions,
    candidates: &[f64],
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64> + Sync + Send,
{
    let m = intervals;
    let step = 1.0 / m as f64;
    let at = |j: u64| -> f64 {
        if j >= m {
            1.0
        } else {
            j as f64 * step
        }
    };
    let mut best = (0.0, 0.0);
    let consider = |best: &mut (f64, f64), phi: f64, v: f64| {
        if v < best.1 || (v == best.1 && phi < best.0) {
            *best = (phi, v);
        }
    };
    if m <= opts.exhaustive_limit {
        if m > opts.grid_cap {
            return Err(DpError::GridTooLarge { points: m + 1, cap: opts.grid_cap });
        }
        let idx: Vec<u64> = (1..=m).collect();
        let vals = par::map(&idx, opts.execution, |&j| eval(at(j)));
        for (&j, v) in idx.iter().zip(vals) {
            consider(&mut best, at(j), v?);
        }
        return Ok(best);
    }

    let coarse_step = (0.25 * resolution).min(1.0 / 16.0);
    let n = ((1.0 / coarse_step).ceil() as u64).clamp(16, m);
    let mut coarse: Vec<u64> = (0..=n).map(|i| ((i as f64 / n as f64) * m as f64).round() as u64).collect();
    coarse.dedup();
    let phis: Vec<f64> = coarse.iter().map(|&j| at(j)).collect();
    let mut vals = vec![0.0];
    for v in par::map(&phis[1..], opts.execution, |&p| eval(p)) {
        vals.push(v?);
    }
    for (p, v) in phis.iter().zip(&vals) {
        consider(&mut best, *p, *v);
    }

    let last = phis.len() - 1;
    let mut basins = Vec::new();
    for i in 1..=last {
        let left_ok = vals[i] <= vals[i - 1];
        let right_ok = i == last || vals[i] <= vals[i + 1];
        // Flat stretches carry no minimum of their own; narrow dips inside
        // them are covered by the candidates.
        let strict = vals[i] < vals[i - 1] || (i < last && vals[i] < vals[i + 1]);
        if left_ok && right_ok && strict {
            basins.push(i);
        }
    }
    let tol_phi = (0.5 * step).max(1e-7 * resolution).max(1e-13);
    let tol = Tolerance::golden().with_abs_x(tol_phi);
    let mut brackets = Vec::new();
    for i in basins {
        let lo = phis[i - 1];
        let hi = if i == last { phis[i] } else { phis[i + 1] };
        if i == last {
            // Endpoint minimum: accept it when the function still descends
            // into the endpoint.
            let probe = (1.0 - tol_phi).max(lo);
            if eval(probe)? >= vals[i] {
                continue;
            }
        }
        brackets.push((lo, hi));
    }
    for &c in candidates {
        brackets.push(descend_bracket(&eval, c.clamp(0.0, 1.0), step.max(1e-5 * resolution), coarse_step)?);
    }
    let refined = par::map(&brackets, opts.execution, |&(lo, hi)| -> Result<Vec<(f64, f64)>> {
        let mut err = None;
        let (phi_star, _) = brent_min(
            |p| match eval(p) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::INFINITY
                }
            },
            lo,
            hi,
            &tol,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        let center = (phi_star / step).floor() as u64;
        (center.saturating_sub(1)..=(center + 2).min(m))
            .filter(|&j| j > 0)
            .map(|j| Ok((at(j), eval(at(j))?)))
            .collect()
    });
    for points in refined {
        for (phi, v) in points? {
            consider(&mut best, phi, v);
        }
    }
    Ok(best)
}

/// Brackets a local minimum near `c` inside `[0, 1]`: steps downhill from
/// `c` with doubling steps, starting at `h0` and never exceeding `h_max`
/// per step, until the function rises again.
fn descend_bracket<F>(eval: &F, c: f64, h0: f64, h_max: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let f0 = eval(c)?;
    let right = (c + h0).min(1.0);
    let left = (c - h0).max(0.0);
    let fr = if right > c { eval(right)? } else { f64::INFINITY };
    let fl = if left < c { eval(left)? } else { f64::INFINITY };
    if fr >= f0 && fl >= f0 {
        return Ok((left, right));
    }
    let dir = if fr < fl { 1.0 } else { -1.0 };
    let (mut prev, mut cur, mut fcur) = (c, if dir > 0.0 { right } else { left }, fr.min(fl));
    let mut h = h0;
    loop {
        h = (2.0 * h).min(h_max);
        let next = (cur + dir * h).clamp(0.0, 1.0);
        if next == cur {
            return Ok(if dir > 0.0 { (prev, cur) } else { (cur, prev) });
        }
        let fnext = eval(next)?;
        if fnext >= fcur {
            return Ok(if dir > 0.0 { (prev, next) } else { (next, prev) });
        }
        (prev, cur, fcur) = (cur, next, fnext);
    }
}
