//! Scalar numerics shared by the rate calculus: adaptive Gauss–Kronrod
//! quadrature, bracketing root finding and compensated summation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Absolute error floor for the adaptive integrator.
pub const QUAD_ABS_FLOOR: f64 = 1e-14;
/// Relative error target for the adaptive integrator.
pub const QUAD_REL_TOL: f64 = 1e-10;
/// Iteration cap for bisection.
pub const BISECTION_MAX_ITER: usize = 200;

const MAX_SUBINTERVALS: usize = 4000;

// 15-point Kronrod extension of the 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Integrates `f` over `[a, b]` by globally adaptive bisection of the
/// interval with the largest Kronrod–Gauss error estimate.
///
/// Stops once the summed error estimate drops below
/// `max(abs_floor, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite integration bounds [{a}, {b}]"
        )));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (value, err) = gauss_kronrod_15(&f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Piece {
        a: lo,
        b: hi,
        value,
        err,
    });
    let mut total = value;
    let mut total_err = err;
    let mut pieces = 1;
    loop {
        if !total.is_finite() {
            return Err(Error::NonConvergence(format!(
                "integrand produced a non-finite value on [{lo}, {hi}]"
            )));
        }
        if total_err <= abs_floor.max(rel_tol * total.abs()) {
            return Ok(sign * total);
        }
        if pieces >= MAX_SUBINTERVALS {
            return Err(Error::NonConvergence(format!(
                "quadrature on [{lo}, {hi}] stalled at error {total_err:e} after {pieces} subintervals"
            )));
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at machine resolution; accept what we have
            return Ok(sign * total);
        }
        let (v1, e1) = gauss_kronrod_15(&f, worst.a, mid);
        let (v2, e2) = gauss_kronrod_15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
        });
        pieces += 1;
        if pieces % 64 == 0 {
            // refresh accumulated sums to shed cancellation drift
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.err).sum();
        }
    }
}

/// Integrates with the default tolerances.
pub fn integrate_default<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    integrate(f, a, b, QUAD_REL_TOL, QUAD_ABS_FLOOR)
}

/// Solves `f(x) = target` for an increasing `f` by bisection on `[lo, hi]`.
///
/// `tol(x_lo, x_hi, residual)` decides termination.
pub fn bisect_increasing<F, T>(f: F, target: f64, mut lo: f64, mut hi: f64, done: T) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
    T: Fn(f64, f64, f64) -> bool,
{
    let mut best = 0.5 * (lo + hi);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let r = f(mid)? - target;
        best = mid;
        if r == 0.0 || done(lo, hi, r) {
            return Ok(mid);
        }
        if mid <= lo || mid >= hi {
            // bracket at machine resolution
            return Ok(mid);
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence(format!(
        "bisection for target {target} stopped at {best} after {BISECTION_MAX_ITER} iterations"
    )))
}

/// Grows `hi` geometrically from `start` until `f(hi) >= target`.
pub fn bracket_above<F>(f: F, target: f64, start: f64, factor: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut lo = start;
    let mut hi = start * factor;
    for _ in 0..BISECTION_MAX_ITER {
        if !hi.is_finite() {
            break;
        }
        if f(hi)? >= target {
            return Ok((lo, hi));
        }
        lo = hi;
        hi *= factor;
    }
    Err(Error::NonConvergence(format!(
        "could not bracket target {target} above {start}"
    )))
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and 95% normal-approximation half-width.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}
