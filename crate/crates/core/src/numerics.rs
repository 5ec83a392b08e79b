//! Scalar numerical primitives shared by every mechanism.
//!
//! The standard normal CDF is built on the complementary error function from
//! `libm` (a port of the FreeBSD math library, accurate to under one ulp),
//! evaluated on the side of the distribution that avoids cancellation. The root finders and the golden-section search operate on
//! plain closures; the adaptive quadrature is a global Gauss-Kronrod (7/15)
//! scheme with a priority queue over subintervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{DpError, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// 1/sqrt(2*pi)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934;
/// sqrt(2*pi)
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_502_415_765_284_811;

/// Stopping rule for the iterative routines in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// Absolute tolerance on the searched argument.
    pub abs_x: f64,
    /// Relative tolerance on function or integral values.
    pub rel_f: f64,
    /// Absolute floor on integral values (quadrature only).
    pub abs_f: f64,
    /// Iteration cap; for quadrature this is the subdivision budget.
    pub max_iter: usize,
}

impl Tolerance {
    /// Builds a tolerance, rejecting non-positive entries.
    pub fn new(abs_x: f64, rel_f: f64, max_iter: usize) -> Result<Self> {
        if !(abs_x > 0.0) || !(rel_f > 0.0) || max_iter == 0 {
            return Err(DpError::InvalidArgument(format!(
                "tolerance requires abs_x > 0, rel_f > 0, max_iter >= 1 (got {abs_x}, {rel_f}, {max_iter})"
            )));
        }
        Ok(Self { abs_x, rel_f, abs_f: 0.0, max_iter })
    }

    /// Bisection rule used by all calibrations: `1e-12 * max(1, |hi|)`, 200 iterations.
    pub fn bisection(hi: f64) -> Self {
        Self { abs_x: 1e-12 * hi.abs().max(1.0), rel_f: 1e-12, abs_f: 0.0, max_iter: 200 }
    }

    /// Golden-section rule: `1e-10` on the argument.
    pub fn golden() -> Self {
        Self { abs_x: 1e-10, rel_f: 1e-12, abs_f: 0.0, max_iter: 500 }
    }

    /// Quadrature rule with relative tolerance `rel` and absolute floor `abs`.
    pub fn quadrature(rel: f64, abs: f64) -> Self {
        Self { abs_x: f64::EPSILON, rel_f: rel, abs_f: abs, max_iter: 4000 }
    }

    /// Returns a copy with a different argument tolerance.
    pub fn with_abs_x(mut self, abs_x: f64) -> Self {
        self.abs_x = abs_x;
        self
    }
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, accurate to about one ulp of the smaller tail.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(x)` without cancellation.
#[inline]
pub fn std_normal_sf(x: f64) -> f64 {
    std_normal_cdf(-x)
}

/// `Phi(b) - Phi(a)` for `a <= b`, evaluated in whichever tail keeps precision.
#[inline]
pub fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        std_normal_sf(a) - std_normal_sf(b)
    } else if b <= 0.0 {
        std_normal_cdf(b) - std_normal_cdf(a)
    } else {
        1.0 - std_normal_cdf(a) - std_normal_sf(b)
    }
}

/// Inverse of the standard normal CDF.
///
/// The `statrs` inverse error function gives the starting point and two
/// Newton steps against [`std_normal_cdf`] bring `|Phi(x) - p|` to rounding
/// level.
pub fn std_normal_cdf_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DpError::Domain(format!("inverse normal CDF needs p in (0,1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Work in the lower tail so the residual is measured where Phi is small.
    let (q, sign) = if p < 0.5 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * q);
    for _ in 0..3 {
        let pdf = std_normal_pdf(x);
        if pdf <= 0.0 {
            break;
        }
        let r = std_normal_cdf(x) - q;
        // Halley step; the second-order term is x * r^2 / (2 pdf^2).
        let step = r / pdf;
        let dx = step / (1.0 + 0.5 * x * step);
        x -= dx;
        if dx.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    // For p above one half, refine against the exact requested p so that the
    // round trip holds for p itself (1 - p is not exact in floating point).
    let mut x = sign * x;
    if sign < 0.0 {
        let pdf = std_normal_pdf(x);
        if pdf > 0.0 {
            x -= (std_normal_cdf(x) - p) / pdf;
        }
    }
    Ok(x)
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(DpError::InvalidArgument(format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

/// Bisection for a monotone function with a sign change on `[lo, hi]`.
///
/// Returns the midpoint of the final bracket, which is narrower than `tol.abs_x`.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, tol: &Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    check_interval(lo, hi)?;
    let (mut a, mut b) = (lo, hi);
    let fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(DpError::Bracket(format!(
            "no sign change on [{lo}, {hi}]: f(lo) = {fa}, f(hi) = {fb}"
        )));
    }
    let neg_at_a = fa < 0.0;
    for _ in 0..tol.max_iter {
        if b - a <= tol.abs_x {
            return Ok(0.5 * (a + b));
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if (fm < 0.0) == neg_at_a {
            a = m;
        } else {
            b = m;
        }
    }
    if b - a <= tol.abs_x {
        return Ok(0.5 * (a + b));
    }
    Err(DpError::MaxIterations { routine: "bisect", iterations: tol.max_iter })
}

/// Bisection on a monotone feasibility predicate.
///
/// The caller guarantees that `lo` is infeasible and `hi` is feasible; neither
/// endpoint is evaluated. The returned value is the feasible end of the final
/// bracket, so it always satisfies the predicate (or equals `hi`).
pub fn bisect_feasible<F>(mut feasible: F, lo: f64, hi: f64, tol: &Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> Result<bool>,
{
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(DpError::InvalidArgument(format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..tol.max_iter {
        if b - a <= tol.abs_x {
            return Ok(b);
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return Ok(b);
        }
        if feasible(m)? {
            b = m;
        } else {
            a = m;
        }
    }
    if b - a <= tol.abs_x {
        return Ok(b);
    }
    Err(DpError::MaxIterations { routine: "bisect_feasible", iterations: tol.max_iter })
}

/// Brent's root finder on a bracket whose ends fall on opposite sides of
/// `f >= 0`, returning the end of the final bracket where `f >= 0`.
///
/// Interpolation steps fall back to bisection whenever they would not
/// shrink the bracket fast enough, so the bracket closes to `tol.abs_x`
/// even for functions with small jumps.
pub fn brent_root_nonneg<F>(mut f: F, lo: f64, hi: f64, f_lo: f64, f_hi: f64, tol: &Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let pos = |v: f64| v >= 0.0;
    if pos(f_lo) == pos(f_hi) {
        return Err(DpError::InvalidArgument(format!(
            "bracket [{lo}, {hi}] has no sign change ({f_lo}, {f_hi})"
        )));
    }
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, f_lo, f_hi);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
        if pos(fb) == pos(fc) {
            (c, fc) = (a, fa);
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            (a, fa) = (b, fb);
            (b, fb) = (c, fc);
            (c, fc) = (a, fa);
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.abs_x;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 {
            return Ok(if pos(fb) { b } else { c });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        (a, fa) = (b, fb);
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Err(DpError::MaxIterations { routine: "brent_root_nonneg", iterations: tol.max_iter })
}

/// Illinois (modified regula falsi) root polish on a bracket where exactly
/// one end is positive.
///
/// Used where the function is close to linear and only a handful of
/// evaluations are affordable. Stops once the bracket is below `xtol`.
pub fn illinois<F>(mut f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, xtol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    debug_assert!((fa > 0.0) != (fb > 0.0));
    let mut side = 0i8;
    for _ in 0..100 {
        if (b - a).abs() <= xtol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the optimum of a unimodal function.
///
/// Returns `(argopt, f(argopt))`.
pub fn golden_section_opt<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    maximize: bool,
    tol: &Tolerance,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    check_interval(lo, hi)?;
    let sgn = if maximize { -1.0 } else { 1.0 };
    let mut g = |x: f64| sgn * f(x);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut gc = g(c);
    let mut gd = g(d);
    let mut iter = 0;
    while b - a > tol.abs_x {
        if iter >= tol.max_iter {
            return Err(DpError::MaxIterations { routine: "golden_section_opt", iterations: iter });
        }
        iter += 1;
        if gc <= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - INV_PHI * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + INV_PHI * (b - a);
            gd = g(d);
        }
    }
    // Report the best point seen among the bracket ends and interior probes.
    let mut best = (c, gc);
    if gd < best.1 {
        best = (d, gd);
    }
    for x in [a, b] {
        let gx = g(x);
        if gx < best.1 {
            best = (x, gx);
        }
    }
    Ok((best.0, sgn * best.1))
}

/// Brent's minimizer: golden-section steps combined with parabolic
/// interpolation. The bracket closes to about `2 (sqrt(machine eps) |x| +
/// tol.abs_x)` around the minimizer `x`.
///
/// Returns `(argmin, f(argmin))`.
pub fn brent_min<F>(mut f: F, lo: f64, hi: f64, tol: &Tolerance) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    check_interval(lo, hi)?;
    const C: f64 = 1.0 - INV_PHI;
    let (mut a, mut b) = (lo, hi);
    let mut x = a + C * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..tol.max_iter {
        let m = 0.5 * (a + b);
        let t = f64::EPSILON.sqrt() * x.abs() + tol.abs_x;
        let t2 = 2.0 * t;
        if (x - m).abs() <= t2 - 0.5 * (b - a) {
            let (fa, fb) = (f(a), f(b));
            let mut best = (x, fx);
            for (p, fp) in [(a, fa), (b, fb)] {
                if fp < best.1 {
                    best = (p, fp);
                }
            }
            return Ok(best);
        }
        let mut golden = true;
        if e.abs() > t {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let r = e;
            e = d;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < t2 || b - u < t2 {
                    d = if x < m { t } else { -t };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = C * e;
        }
        let u = if d.abs() >= t { x + d } else if d > 0.0 { x + t } else { x - t };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Err(DpError::MaxIterations { routine: "brent_min", iterations: tol.max_iter })
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One Gauss-Kronrod 7/15 panel: `(kronrod, |kronrod - gauss|)`.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs_sum = WGK[7] * fc.abs();
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        k += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    let err = ((k - g) * h).abs().max(50.0 * f64::EPSILON * abs_sum * h.abs());
    (k * h, err)
}

/// Value and error estimate returned by [`adaptive_quad`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub err: f64,
    /// Number of panels in the final partition.
    pub panels: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss-Kronrod quadrature of `f` over `[a, b]`.
///
/// The panel with the largest error estimate is bisected until the summed
/// estimate drops below `max(tol.rel_f * |I|, tol.abs_f)`. The estimate per
/// panel is the raw Kronrod/Gauss difference, which is pessimistic for smooth
/// integrands and keeps kinked integrands honest.
pub fn adaptive_quad<F>(f: F, a: f64, b: f64, tol: &Tolerance) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    if a == b {
        return Ok(QuadResult { value: 0.0, err: 0.0, panels: 0 });
    }
    check_interval(a, b)?;
    adaptive_quad_points(f, &[a, b], tol)
}

/// [`adaptive_quad`] starting from the partition given by `points`.
///
/// Seeding the partition matters when the integrand is zero over most of
/// the range: a single initial panel could place every node where the
/// integrand vanishes and report zero with zero error.
pub fn adaptive_quad_points<F>(mut f: F, points: &[f64], tol: &Tolerance) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    if points.len() < 2 || points.windows(2).any(|w| !(w[0] < w[1])) || !points.iter().all(|p| p.is_finite()) {
        return Err(DpError::InvalidArgument("quadrature breakpoints must be finite and increasing".into()));
    }
    let (a, b) = (points[0], points[points.len() - 1]);
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in points.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        total += v;
        total_err += e;
        heap.push(Panel { a: w[0], b: w[1], value: v, err: e });
    }
    let budget = tol.max_iter.max(points.len() - 1);
    loop {
        let target = (tol.rel_f * total.abs()).max(tol.abs_f);
        if total_err <= target {
            break;
        }
        if heap.len() >= budget {
            return Err(DpError::Quadrature {
                a,
                b,
                err: total_err,
                target,
                reason: "subdivision budget exhausted".into(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            return Err(DpError::Quadrature {
                a,
                b,
                err: total_err,
                target,
                reason: "panel width reached machine precision".into(),
            });
        }
        let (v1, e1) = gk15(&mut f, worst.a, m);
        let (v2, e2) = gk15(&mut f, m, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel { a: worst.a, b: m, value: v1, err: e1 });
        heap.push(Panel { a: m, b: worst.b, value: v2, err: e2 });
    }
    // Re-sum to shed the drift of the running totals.
    let mut value = 0.0;
    let mut err = 0.0;
    let panels = heap.len();
    for p in heap {
        value += p.value;
        err += p.err;
    }
    Ok(QuadResult { value, err, panels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_basic_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!(std_normal_cdf(-40.0) < 1e-15);
        assert!((std_normal_cdf(1.959964) - 0.975).abs() < 1e-6);
    }

    #[test]
    fn inverse_basic_values() {
        assert_eq!(std_normal_cdf_inv(0.5).unwrap(), 0.0);
        assert!((std_normal_cdf_inv(std_normal_cdf(1.0)).unwrap() - 1.0).abs() < 1e-10);
        assert!((std_normal_cdf_inv(0.975).unwrap() - 1.959964).abs() < 1e-5);
        assert!(std_normal_cdf_inv(0.0).is_err());
        assert!(std_normal_cdf_inv(1.0).is_err());
    }

    #[test]
    fn bisect_linear_and_symmetric() {
        let tol = Tolerance::bisection(2.0);
        let r = bisect(|x| x - 1.0, 0.0, 2.0, &tol).unwrap();
        assert!((r - 1.0).abs() <= tol.abs_x);
        let r = bisect(|x| std_normal_cdf(x) - 0.5, -3.0, 3.0, &tol).unwrap();
        assert!(r.abs() <= tol.abs_x);
        assert!(matches!(bisect(|x| x + 5.0, 0.0, 1.0, &tol), Err(DpError::Bracket(_))));
    }

    #[test]
    fn bisect_feasible_returns_feasible_end() {
        let tol = Tolerance::bisection(1.0);
        let x = bisect_feasible(|x| Ok(x >= 0.3), 0.0, 1.0, &tol).unwrap();
        assert!(x >= 0.3 && x - 0.3 <= tol.abs_x);
    }

    #[test]
    fn brent_matches_golden_on_smooth_and_kinked() {
        let tol = Tolerance::golden();
        let mut calls = 0;
        let (x, v) = brent_min(
            |x| {
                calls += 1;
                (x - 0.3).powi(2) + 0.5
            },
            0.0,
            1.0,
            &tol,
        )
        .unwrap();
        assert!((x - 0.3).abs() <= 2e-8 && (v - 0.5).abs() <= 1e-15);
        assert!(calls < 12, "parabolic steps should converge fast, took {calls}");
        let (x, _) = brent_min(|x| (x - 0.71).abs(), 0.0, 1.0, &tol).unwrap();
        assert!((x - 0.71).abs() <= 4e-8);
        let (x, v) = brent_min(|x| -x, 0.0, 1.0, &tol).unwrap();
        assert!(x == 1.0 && v == -1.0);
    }

    #[test]
    fn brent_root_returns_nonneg_end() {
        let tol = Tolerance::bisection(1.0);
        let mut calls = 0;
        let x = brent_root_nonneg(
            |x| {
                calls += 1;
                Ok(x * x - 0.5)
            },
            0.0,
            1.0,
            -0.5,
            0.5,
            &tol,
        )
        .unwrap();
        assert!(x * x >= 0.5 && x - 0.5f64.sqrt() <= tol.abs_x);
        assert!(calls < 15, "took {calls} evaluations");
        // A step function still closes the bracket on the nonnegative side.
        let x = brent_root_nonneg(|x| Ok(if x >= 0.3 { 1.0 } else { -1.0 }), 0.0, 1.0, -1.0, 1.0, &tol).unwrap();
        assert!(x >= 0.3 && x - 0.3 <= tol.abs_x);
    }

    #[test]
    fn golden_quadratic_and_peak() {
        let tol = Tolerance::golden();
        let (x, v) = golden_section_opt(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, true, &tol).unwrap();
        assert!((x - 0.3).abs() <= 1e-9);
        assert!(v <= 0.0 && v > -1e-18);
        let (x, _) = golden_section_opt(
            |x| std_normal_cdf(x) * std_normal_cdf(-x),
            -2.0,
            2.0,
            true,
            &tol,
        )
        .unwrap();
        assert!(x.abs() <= 1e-7);
    }

    #[test]
    fn quad_examples() {
        let tol = Tolerance::quadrature(1e-12, 1e-14);
        let r = adaptive_quad(|_| 1.0, 0.0, 1.0, &tol).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        let r = adaptive_quad(std_normal_pdf, -8.0, 8.0, &tol).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        let r = adaptive_quad(|x: f64| x.min(0.0), -6.0, 6.0, &tol).unwrap();
        assert!((r.value + 18.0).abs() < 1e-10);
    }
}
