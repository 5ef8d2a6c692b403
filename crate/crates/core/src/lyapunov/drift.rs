use std::ops::{Add, Mul, Sub};

use rayon::prelude::*;
use serde::Serialize;

use super::report::{DriftReport, DriftRow, Verdict};
use crate::chains::{run_chain, ContinuousModel, MarkovModel};
use crate::error::{Error, Result};
use crate::numerics::{compensated_sum, mean_ci95};
use crate::rate_kernel::RateFunction;
use crate::rng;

/// Smallest Monte Carlo size accepted by the drift checkers.
pub const MIN_DRIFT_SAMPLES: usize = 100;

fn check_mc(n_mc: usize) -> Result<()> {
    if n_mc < MIN_DRIFT_SAMPLES {
        return Err(Error::Parameter(format!(
            "n_mc = {n_mc} is below {MIN_DRIFT_SAMPLES}"
        )));
    }
    Ok(())
}

fn check_k(k: f64) -> Result<()> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::Parameter(format!(
            "drift constant K must be finite and nonnegative, got {k}"
        )));
    }
    Ok(())
}

fn lyapunov_of<M: MarkovModel>(model: &M, x: &M::State) -> Result<f64> {
    model
        .lyapunov(x)
        .ok_or_else(|| Error::Parameter("model carries no Lyapunov function".into()))
}

/// Monte Carlo check of `PV <= V - phi(V) + K` at each test state.
///
/// State `i` draws sample `j` from stream `j` of `derive_seed(seed, i)`.
pub fn check_drift_discrete<M: MarkovModel>(
    model: &M,
    phi: &RateFunction,
    k: f64,
    test_states: &[M::State],
    n_mc: usize,
    seed: u64,
) -> Result<DriftReport> {
    check_mc(n_mc)?;
    check_k(k)?;
    if test_states.is_empty() {
        return Err(Error::Parameter("no test states".into()));
    }
    let mut rows = Vec::with_capacity(test_states.len());
    for (i, x) in test_states.iter().enumerate() {
        let vx = lyapunov_of(model, x)?;
        let sub = rng::derive_seed(seed, i as u64);
        let vals = (0..n_mc as u64)
            .into_par_iter()
            .map(|j| {
                let y = model.step(x, &mut rng::stream(sub, j))?;
                lyapunov_of(model, &y)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (pv, ci) = mean_ci95(&vals);
        rows.push(DriftRow::new(i, vx, pv, vx - phi.value(vx) + k, ci));
    }
    Ok(DriftReport::new("monte_carlo", rows, Vec::new()))
}

/// `V(x) - phi(V(x)) + K - sum_i p_i V(y_i)` for an exactly enumerated kernel.
///
/// Generic over the number type so callers can run it in exact arithmetic.
pub fn enumerated_drift_margin<S, T>(
    x: &S,
    outcomes: &[(S, T)],
    v: impl Fn(&S) -> T,
    phi: impl Fn(&T) -> T,
    k: T,
) -> T
where
    T: Clone + Add<Output = T> + Sub<Output = T> + Mul<Output = T>,
{
    let vx = v(x);
    let bound = vx.clone() - phi(&vx) + k;
    outcomes
        .iter()
        .fold(bound, |acc, (y, p)| acc - p.clone() * v(y))
}

/// Drift check with the transition law enumerated instead of sampled.
pub fn check_drift_enumerated<S>(
    test_states: &[S],
    kernel: impl Fn(&S) -> Result<Vec<(S, f64)>>,
    v: impl Fn(&S) -> f64,
    phi: &RateFunction,
    k: f64,
) -> Result<DriftReport> {
    check_k(k)?;
    if test_states.is_empty() {
        return Err(Error::Parameter("no test states".into()));
    }
    let mut rows = Vec::with_capacity(test_states.len());
    for (i, x) in test_states.iter().enumerate() {
        let outcomes = kernel(x)?;
        let total = compensated_sum(outcomes.iter().map(|o| o.1));
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "kernel probabilities at state {i} sum to {total}"
            )));
        }
        let vx = v(x);
        let pv = compensated_sum(outcomes.iter().map(|(y, p)| p * v(y)));
        rows.push(DriftRow::new(i, vx, pv, vx - phi.value(vx) + k, 0.0));
    }
    Ok(DriftReport::new("enumeration", rows, Vec::new()))
}

/// Per-path `V(X_t) + ∫_0^t phi(V(X_u)) du` by the trapezoidal rule on the
/// integrator grid.
#[allow(clippy::too_many_arguments)]
fn continuous_rows<C: ContinuousModel>(
    model: &C,
    phi: &RateFunction,
    k: f64,
    test_states: &[C::State],
    t: f64,
    n_mc: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<DriftRow>> {
    let steps = (t / dt).round();
    if !(steps >= 1.0) || (steps * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::Parameter(format!(
            "dt = {dt} must divide the horizon t = {t}"
        )));
    }
    let steps = steps as usize;
    let times: Vec<f64> = (0..=steps).map(|s| s as f64 * dt).collect();
    let mut rows = Vec::with_capacity(test_states.len());
    for (i, x) in test_states.iter().enumerate() {
        let vx = model
            .lyapunov(x)
            .ok_or_else(|| Error::Parameter("model carries no Lyapunov function".into()))?;
        let sub = rng::derive_seed(seed, i as u64);
        let vals = (0..n_mc as u64)
            .into_par_iter()
            .map(|j| {
                let path = model.trajectory(x, &times, dt, &mut rng::stream(sub, j))?;
                let vs = path
                    .iter()
                    .map(|s| {
                        model.lyapunov(s).ok_or_else(|| {
                            Error::Parameter("model carries no Lyapunov function".into())
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let f: Vec<f64> = vs.iter().map(|v| phi.value(*v)).collect();
                let inner = compensated_sum(f.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt));
                Ok(vs[steps] + inner)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (lhs, ci) = mean_ci95(&vals);
        rows.push(DriftRow::new(i, vx, lhs, vx + k * t, ci));
    }
    Ok(rows)
}

/// Monte Carlo check of `E_x V(X_t) + E_x ∫_0^t phi(V(X_u)) du <= V(x) + K t`.
///
/// The check is repeated at `dt / 2` with the same streams; a warning is
/// attached when that moves any margin by more than its ci95.
#[allow(clippy::too_many_arguments)]
pub fn check_drift_continuous<C: ContinuousModel>(
    model: &C,
    phi: &RateFunction,
    k: f64,
    test_states: &[C::State],
    t: f64,
    n_mc: usize,
    dt: f64,
    seed: u64,
) -> Result<DriftReport> {
    check_mc(n_mc)?;
    check_k(k)?;
    if test_states.is_empty() {
        return Err(Error::Parameter("no test states".into()));
    }
    let rows = continuous_rows(model, phi, k, test_states, t, n_mc, dt, seed)?;
    let mut warnings = Vec::new();
    match continuous_rows(model, phi, k, test_states, t, n_mc, dt / 2.0, seed) {
        Ok(fine) => {
            for (a, b) in rows.iter().zip(&fine) {
                let shift = (a.margin - b.margin).abs();
                if shift > a.ci95 {
                    warnings.push(format!(
                        "state {}: halving dt moves the margin by {shift:.3e} (> ci95 {:.3e})",
                        a.index, a.ci95
                    ));
                }
            }
        }
        Err(e) => warnings.push(format!("dt / 2 rerun failed: {e}")),
    }
    Ok(DriftReport::new("monte_carlo_continuous", rows, warnings))
}

/// Outcome of the cumulative drift inequality `sum_{i<n} P^i(phi∘V)(x) <= nK + V(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeDriftReport {
    pub n: usize,
    pub lhs: f64,
    pub ci95: f64,
    pub rhs: f64,
    pub margin: f64,
    pub verdict: Verdict,
}

pub fn check_cumulative_drift<M: MarkovModel>(
    model: &M,
    phi: &RateFunction,
    k: f64,
    x: &M::State,
    n: usize,
    n_mc: usize,
    seed: u64,
) -> Result<CumulativeDriftReport> {
    check_mc(n_mc)?;
    check_k(k)?;
    let vx = lyapunov_of(model, x)?;
    let vals = (0..n_mc as u64)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(seed, j);
            let mut state = x.clone();
            let mut acc = Vec::with_capacity(n);
            for i in 0..n {
                if i > 0 {
                    state = run_chain(model, &state, 1, &mut r)?;
                }
                acc.push(phi.value(lyapunov_of(model, &state)?));
            }
            Ok(compensated_sum(acc))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (lhs, ci95) = mean_ci95(&vals);
    let rhs = n as f64 * k + vx;
    let margin = rhs - lhs;
    Ok(CumulativeDriftReport {
        n,
        lhs,
        ci95,
        rhs,
        margin,
        verdict: Verdict::from_scaled_margin(margin, ci95, rhs),
    })
}

/// Whether a level `R` clears `phi^{-1}(2K)`, with `K` known to `± k_ci95`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibleR {
    pub threshold: f64,
    pub admissible: bool,
    /// `R` lies within the three-sigma band of the threshold.
    pub near_threshold: bool,
}

pub fn admissible_r(phi: &RateFunction, k: f64, k_ci95: f64, r: f64) -> Result<AdmissibleR> {
    check_k(k)?;
    let threshold = phi.inverse(2.0 * k)?;
    let lo = phi.inverse(2.0 * (k - 3.0 * k_ci95).max(0.0))?;
    let hi = phi.inverse(2.0 * (k + 3.0 * k_ci95))?;
    Ok(AdmissibleR {
        threshold,
        admissible: r > threshold,
        near_threshold: r >= lo && r <= hi,
    })
}
