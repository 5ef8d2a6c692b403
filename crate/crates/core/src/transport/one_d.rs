use super::exact::{PlanEdge, TransportPlan};
use super::measure::EmpiricalMeasure;
use super::metric::Metric;
use crate::error::{Error, Result};
use crate::numerics::compensated_sum;

fn sorted_order(mu: &EmpiricalMeasure<f64>) -> Result<Vec<usize>> {
    if let Some(x) = mu.points().iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite support point {x}")));
    }
    let mut idx: Vec<usize> = (0..mu.len()).collect();
    // stable: ties keep input order
    idx.sort_by(|&a, &b| mu.points()[a].total_cmp(&mu.points()[b]));
    Ok(idx)
}

/// The monotone (quantile) coupling of two measures on the line.
pub fn monotone_coupling<M: Metric<f64>>(
    mu: &EmpiricalMeasure<f64>,
    nu: &EmpiricalMeasure<f64>,
    metric: &M,
) -> Result<TransportPlan> {
    let ia = sorted_order(mu)?;
    let ib = sorted_order(nu)?;
    let (pa, wa) = (mu.points(), mu.weights());
    let (pb, wb) = (nu.points(), nu.weights());
    let mut edges = Vec::with_capacity(ia.len() + ib.len());
    let (mut i, mut j) = (0, 0);
    let mut ra = wa[ia[0]];
    let mut rb = wb[ib[0]];
    loop {
        let mass = ra.min(rb);
        if mass > 0.0 {
            edges.push(PlanEdge {
                source: ia[i],
                target: ib[j],
                mass,
            });
        }
        // the smaller remainder hits exactly zero
        ra -= mass;
        rb -= mass;
        if ra == 0.0 {
            i += 1;
            if i == ia.len() {
                break;
            }
            ra = wa[ia[i]];
        }
        if rb == 0.0 {
            j += 1;
            if j == ib.len() {
                break;
            }
            rb = wb[ib[j]];
        }
    }
    let cost = compensated_sum(
        edges
            .iter()
            .map(|e| e.mass * metric.distance(&pa[e.source], &pb[e.target])),
    );
    Ok(TransportPlan { edges, cost })
}

/// Transport cost of the monotone coupling.
///
/// Exact `W_1` for the Euclidean cost (and any convex cost of `|x - y|`).
/// For a truncated cost such as `1 ∧ |x - y| / beta` the result is an
/// upper bound on `W_d`; use [`super::wasserstein_exact`] when the exact
/// value is needed.
pub fn wasserstein_1d<M: Metric<f64>>(
    mu: &EmpiricalMeasure<f64>,
    nu: &EmpiricalMeasure<f64>,
    metric: &M,
) -> Result<f64> {
    Ok(monotone_coupling(mu, nu, metric)?.cost)
}

/// Exact `W_1(mu, Uniform[lo, hi))` as `∫ |F_mu - G|`.
pub fn wasserstein_1d_to_uniform(mu: &EmpiricalMeasure<f64>, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Parameter(format!(
            "bad uniform support [{lo}, {hi})"
        )));
    }
    let order = sorted_order(mu)?;
    let g = |x: f64| ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    let mut breaks: Vec<f64> = order.iter().map(|&k| mu.points()[k]).collect();
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut pieces = Vec::with_capacity(breaks.len());
    // running Neumaier sum of the atoms left of the current piece
    let (mut acc, mut comp) = (0.0f64, 0.0f64);
    let mut cdf;
    let mut k = 0;
    for w in breaks.windows(2) {
        let (p, q) = (w[0], w[1]);
        while k < order.len() && mu.points()[order[k]] <= p {
            let x = mu.weights()[order[k]];
            let t = acc + x;
            comp += if acc.abs() >= x.abs() {
                (acc - t) + x
            } else {
                (x - t) + acc
            };
            acc = t;
            k += 1;
        }
        cdf = if k == order.len() { 1.0 } else { acc + comp };
        let d0 = cdf - g(p);
        let d1 = cdf - g(q);
        let len = q - p;
        let area = if d0 * d1 >= 0.0 {
            0.5 * (d0.abs() + d1.abs()) * len
        } else {
            len * (d0 * d0 + d1 * d1) / (2.0 * (d0.abs() + d1.abs()))
        };
        pieces.push(area);
    }
    Ok(compensated_sum(pieces))
}
