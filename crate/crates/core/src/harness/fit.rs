use super::curve::{ConvergenceCurve, FitResult};
use crate::error::{Error, Result};
use crate::rate_kernel::{log_phi_of_h_inverse, rate_bound, RateBoundParams, RateFunction};

/// Fewest usable points for a fit.
pub const MIN_FIT_POINTS: usize = 4;

const LOG_C2_GRID: (f64, f64, usize) = (-20.0, 10.0, 121);

/// Points above the sampling floor with a positive distance.
fn usable(curve: &ConvergenceCurve) -> Vec<(f64, f64)> {
    let floor = curve.sampling_floor.unwrap_or(0.0);
    curve
        .rows
        .iter()
        .filter(|r| r.distance > floor && r.distance > 0.0)
        .map(|r| (r.t, r.distance.ln()))
        .collect()
}

/// `ln C1` minimizing the squared log residual for a fixed `ln C2`, and that residual sum.
fn profile(phi: &RateFunction, eps: f64, pts: &[(f64, f64)], s: f64) -> Result<(f64, f64)> {
    let c2 = s.exp();
    let mut offs = Vec::with_capacity(pts.len());
    for &(t, y) in pts {
        offs.push(y + (1.0 - eps) * log_phi_of_h_inverse(phi, c2 * t)?);
    }
    let a = offs.iter().sum::<f64>() / offs.len() as f64;
    let rss = offs.iter().map(|o| (o - a) * (o - a)).sum();
    Ok((a, rss))
}

fn golden_section(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > 1e-10 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Least-squares fit of `ln distance` by `ln C1 - (1 - eps) ln phi(H^{-1}(C2 t))`.
///
/// `C1` absorbs the factor `1 + V(x)`. After the fit `C1` is raised just
/// enough that the bound covers every point used.
pub fn fit_rate_constants(
    curve: &ConvergenceCurve,
    phi: &RateFunction,
    epsilon: f64,
) -> Result<FitResult> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Parameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let pts = usable(curve);
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateFit(format!(
            "{} points above the sampling floor, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let (ymin, ymax) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.1), b.max(p.1))
        });
    if ymax - ymin <= 1e-9 {
        return Err(Error::DegenerateFit("curve is flat".into()));
    }
    let (s_lo, s_hi, n) = LOG_C2_GRID;
    let step = (s_hi - s_lo) / (n - 1) as f64;
    let mut best = (0, f64::INFINITY);
    for i in 0..n {
        let rss = profile(phi, epsilon, &pts, s_lo + step * i as f64)?.1;
        if rss < best.1 {
            best = (i, rss);
        }
    }
    if best.0 == 0 {
        return Err(Error::DegenerateFit(
            "the curve shows no decay on the fitted points".into(),
        ));
    }
    let lo = s_lo + step * (best.0 - 1) as f64;
    let hi = (s_lo + step * (best.0 + 1) as f64).min(s_hi);
    let s = golden_section(lo, hi, |s| Ok(profile(phi, epsilon, &pts, s)?.1))?;
    let (a, rss) = profile(phi, epsilon, &pts, s)?;
    let c2 = s.exp();
    let mut shift: f64 = 0.0;
    for &(t, y) in &pts {
        let model = a - (1.0 - epsilon) * log_phi_of_h_inverse(phi, c2 * t)?;
        shift = shift.max(y - model);
    }
    // a hair of headroom so rounding never puts a fitted point above the bound
    let shift = shift.exp() * (1.0 + 1e-12);
    Ok(FitResult {
        c1: a.exp() * shift,
        c2,
        residual: (rss / pts.len() as f64).sqrt(),
        shift,
        points_used: pts.len(),
    })
}

/// Fills the bound column from `(C1, C2)`; `C1` here excludes `1 + v0`.
pub fn attach_bound(
    curve: &mut ConvergenceCurve,
    phi: &RateFunction,
    params: &RateBoundParams,
) -> Result<()> {
    for row in &mut curve.rows {
        row.bound = Some(rate_bound(phi, params, row.t)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::curve::CurveRow;

    fn curve_from(f: impl Fn(f64) -> f64, ts: &[f64]) -> ConvergenceCurve {
        let rows = ts
            .iter()
            .map(|&t| CurveRow {
                t,
                distance: f(t),
                ci95: 0.0,
                bound: None,
            })
            .collect();
        ConvergenceCurve::new("synthetic", rows).unwrap()
    }

    #[test]
    fn recovers_constants_of_a_synthetic_curve() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 2.0).collect();
        for phi in [
            RateFunction::linear(0.5).unwrap(),
            RateFunction::power(0.5).unwrap(),
        ] {
            let p = RateBoundParams::new(2.0, 0.7, 0.1, 0.0).unwrap();
            let curve = curve_from(|t| rate_bound(&phi, &p, t).unwrap(), &ts);
            let fit = fit_rate_constants(&curve, &phi, 0.1).unwrap();
            assert!((fit.c1 / 2.0 - 1.0).abs() < 0.01, "{fit:?}");
            assert!((fit.c2 / 0.7 - 1.0).abs() < 0.01, "{fit:?}");
            assert!(fit.residual < 0.01);
        }
    }

    #[test]
    fn flat_and_short_curves_are_degenerate() {
        let ts = [1.0, 2.0, 3.0, 4.0, 5.0];
        let flat = curve_from(|_| 0.3, &ts);
        assert!(matches!(
            fit_rate_constants(&flat, &RateFunction::linear(1.0).unwrap(), 0.1),
            Err(Error::DegenerateFit(_))
        ));
        let short = curve_from(|t| (-t).exp(), &ts[..3]);
        assert!(matches!(
            fit_rate_constants(&short, &RateFunction::linear(1.0).unwrap(), 0.1),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn fitted_bound_dominates_digit_curve() {
        let ts: Vec<f64> = (1..=8).map(f64::from).collect();
        let mut curve = curve_from(|n| 0.5 * 10f64.powf(-n), &ts);
        let phi = RateFunction::linear(1.0).unwrap();
        let fit = fit_rate_constants(&curve, &phi, 0.1).unwrap();
        let p = RateBoundParams::new(fit.c1, fit.c2, 0.1, 0.0).unwrap();
        attach_bound(&mut curve, &phi, &p).unwrap();
        assert!(curve.rows.iter().all(|r| r.bound.unwrap() >= r.distance));
    }

    #[test]
    fn noisy_curve_is_covered_after_shift() {
        let ts: Vec<f64> = (0..12).map(f64::from).collect();
        let curve = curve_from(|t| (-0.4 * t).exp() * (1.0 + 0.2 * (3.0 * t).sin()), &ts);
        let phi = RateFunction::linear(1.0).unwrap();
        let fit = fit_rate_constants(&curve, &phi, 0.2).unwrap();
        assert!(fit.shift > 1.0);
        let p = RateBoundParams::new(fit.c1, fit.c2, 0.2, 0.0).unwrap();
        for r in &curve.rows {
            assert!(rate_bound(&phi, &p, r.t).unwrap() >= r.distance);
        }
    }
}
