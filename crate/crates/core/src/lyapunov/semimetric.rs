use serde::Serialize;

use super::dsmall::one_step_costs;
use crate::chains::MarkovModel;
use crate::error::{Error, Result};
use crate::rate_kernel::RateFunction;
use crate::transport::{CostFn, Metric, SupportKey};

/// `l(x, y) = d(x, y)^{1/p} (1 + beta phi(V(x) + V(y)))^{1/q}` with `1/p + 1/q = 1`.
///
/// `p = 1` is accepted as the limit `q = ∞`, where `l = d`.
#[derive(Debug, Clone)]
pub struct SemimetricL {
    pub phi: RateFunction,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
}

impl SemimetricL {
    pub fn new(phi: RateFunction, p: f64, beta: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::Parameter(format!(
                "p must be finite and at least 1, got {p}"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Parameter(format!(
                "beta must be finite and nonnegative, got {beta}"
            )));
        }
        let q = if p == 1.0 {
            f64::INFINITY
        } else {
            p / (p - 1.0)
        };
        Ok(Self { phi, p, q, beta })
    }

    /// `l` from the base distance and `V(x) + V(y)`.
    pub fn value(&self, d: f64, vsum: f64) -> f64 {
        if d == 0.0 {
            return 0.0;
        }
        let weight = if self.q.is_infinite() {
            1.0
        } else {
            (1.0 + self.beta * self.phi.value(vsum)).powf(1.0 / self.q)
        };
        d.powf(1.0 / self.p) * weight
    }
}

pub fn semimetric_l_eval<S: ?Sized, D: Metric<S>>(
    l: &SemimetricL,
    metric: &D,
    v: impl Fn(&S) -> f64,
    x: &S,
    y: &S,
) -> f64 {
    l.value(metric.distance(x, y), v(x) + v(y))
}

/// `beta = ((1 + rho / (2 - 2 rho))^{q-1} - 1) / phi(2K + R)`, the weight
/// under which level-set pairs contract `l` by `1 - rho / (2p)` in one step.
pub fn contraction_beta(rho: f64, q: f64, k: f64, r: f64, phi: &RateFunction) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Domain(format!(
            "q must be finite and exceed 1, got {q}"
        )));
    }
    let denom = phi.value(2.0 * k + r);
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::Domain(format!(
            "phi(2K + R) must be positive, got {denom}"
        )));
    }
    Ok(((1.0 + rho / (2.0 - 2.0 * rho)).powf(q - 1.0) - 1.0) / denom)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LContractionRow {
    pub index: usize,
    pub vsum: f64,
    pub l: f64,
    pub w_l: f64,
    pub ratio: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LContractionReport {
    /// Rows in order of increasing `V(x) + V(y)`.
    pub rows: Vec<LContractionRow>,
    pub max_ratio: f64,
    /// Every ratio lies below 1.
    pub all_le_one: bool,
    pub upper_bound_only: bool,
    pub warnings: Vec<String>,
}

impl LContractionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Estimates `W_l(P(x,·), P(y,·)) / l(x, y)` per pair by exact OT under `l`.
pub fn estimate_onestep_l_contraction<M, D>(
    model: &M,
    l: &SemimetricL,
    metric: &D,
    pairs: &[(M::State, M::State)],
    n_mc: usize,
    seed: u64,
) -> Result<LContractionReport>
where
    M: MarkovModel,
    M::State: SupportKey,
    D: Metric<M::State> + Sync,
{
    if pairs.is_empty() {
        return Err(Error::Parameter("no pairs".into()));
    }
    let v = |s: &M::State| {
        model
            .lyapunov(s)
            .ok_or_else(|| Error::Parameter("model carries no Lyapunov function".into()))
    };
    let mut base = Vec::with_capacity(pairs.len());
    for (i, (x, y)) in pairs.iter().enumerate() {
        let vsum = v(x)? + v(y)?;
        let lxy = l.value(metric.distance(x, y), vsum);
        if !(lxy > 0.0) {
            return Err(Error::DegeneratePair(format!(
                "pair {i} has l(x, y) = {lxy}"
            )));
        }
        base.push((vsum, lxy));
    }
    let cost = CostFn(|a: &M::State, b: &M::State| {
        let vs = model.lyapunov(a).unwrap_or(f64::NAN) + model.lyapunov(b).unwrap_or(f64::NAN);
        l.value(metric.distance(a, b), vs)
    });
    let (costs, upper_bound_only) = one_step_costs(model, &cost, pairs, n_mc, seed)?;
    let mut rows: Vec<LContractionRow> = costs
        .iter()
        .enumerate()
        .map(|(i, &(w, ci))| {
            let (vsum, lxy) = base[i];
            LContractionRow {
                index: i,
                vsum,
                l: lxy,
                w_l: w,
                ratio: w / lxy,
                ci95: ci / lxy,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.vsum.total_cmp(&b.vsum).then(a.index.cmp(&b.index)));
    let mut warnings = Vec::new();
    for r in &rows {
        if r.ratio <= 1.0 && r.ratio + 3.0 * r.ci95 > 1.0
            || r.ratio > 1.0 && r.ratio - 3.0 * r.ci95 <= 1.0
        {
            warnings.push(format!(
                "pair {}: ratio {:.4} is within sampling error of 1",
                r.index, r.ratio
            ));
        }
    }
    Ok(LContractionReport {
        max_ratio: rows
            .iter()
            .map(|r| r.ratio)
            .fold(f64::NEG_INFINITY, f64::max),
        all_le_one: rows.iter().all(|r| r.ratio <= 1.0),
        upper_bound_only,
        rows,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{DigitShiftChain, WithLyapunov};
    use crate::lyapunov::estimate_dsmall;
    use crate::transport::Euclidean;
    use proptest::prelude::*;

    fn lin(c: f64) -> RateFunction {
        RateFunction::linear(c).unwrap()
    }

    #[test]
    fn plug_in_values() {
        let l = SemimetricL::new(lin(1.0), 2.0, 1.0).unwrap();
        assert_eq!(l.q, 2.0);
        assert_eq!(l.value(0.25, 3.0), 1.0);
        assert_eq!(l.value(0.0, 3.0), 0.0);
        let l0 = SemimetricL::new(lin(1.0), 2.0, 0.0).unwrap();
        assert_eq!(l0.value(0.25, 7.0), 0.5);
        assert!(SemimetricL::new(lin(1.0), 0.5, 1.0).is_err());
        assert_eq!(
            semimetric_l_eval(&l, &Euclidean, |x: &f64| *x, &0.3, &0.3),
            0.0
        );
    }

    #[test]
    fn beta_arithmetic() {
        let phi = lin(1.0);
        assert_eq!(
            contraction_beta(0.5, 2.0, 0.0, 4.0, &phi).unwrap(),
            0.5 / 4.0
        );
        assert!((contraction_beta(0.9, 2.0, 0.0, 1.0, &phi).unwrap() - 4.5).abs() < 1e-12);
        assert!(contraction_beta(1e-12, 3.0, 1.0, 1.0, &phi).unwrap() < 1e-11);
        assert!(contraction_beta(1.0, 2.0, 1.0, 1.0, &phi).is_err());
        assert!(contraction_beta(0.5, 1.0, 1.0, 1.0, &phi).is_err());
    }

    proptest! {
        #[test]
        fn l_dominates_bounded_d(d in 0.0f64..=1.0, vsum in 0.0f64..100.0, p in 1.0f64..6.0, beta in 0.0f64..10.0) {
            let l = SemimetricL::new(lin(0.7), p, beta).unwrap();
            prop_assert!(l.value(d, vsum) >= d);
        }

        #[test]
        fn l_is_symmetric(x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let l = SemimetricL::new(lin(0.9), 3.0, 2.0).unwrap();
            let v = |s: &f64| *s;
            prop_assert_eq!(semimetric_l_eval(&l, &Euclidean, v, &x, &y), semimetric_l_eval(&l, &Euclidean, v, &y, &x));
        }
    }

    #[test]
    fn digit_chain_contracts_l() {
        let phi = lin(0.9);
        let (rho, p, k, r) = (0.9, 2.0, 0.45, 1.5);
        let beta = contraction_beta(rho, p / (p - 1.0), k, r, &phi).unwrap();
        let l = SemimetricL::new(phi, p, beta).unwrap();
        let chain = WithLyapunov::new(DigitShiftChain, |x: &f64| *x);
        let pairs = vec![(0.1, 0.6), (0.3, 0.8), (0.0, 0.9), (0.7, 0.75)];
        let rep = estimate_onestep_l_contraction(&chain, &l, &Euclidean, &pairs, 128, 5).unwrap();
        assert!(rep.all_le_one);
        for row in &rep.rows {
            assert!(
                row.ratio <= 1.0 - rho / (2.0 * p) + 3.0 * row.ci95,
                "{row:?}"
            );
        }
        assert!(rep.rows.windows(2).all(|w| w[0].vsum <= w[1].vsum));
    }

    #[test]
    fn p_one_beta_zero_matches_dsmall() {
        let l = SemimetricL::new(lin(1.0), 1.0, 0.0).unwrap();
        let chain = WithLyapunov::new(DigitShiftChain, |x: &f64| *x);
        let pairs = vec![(0.3, 0.8)];
        let rep = estimate_onestep_l_contraction(&chain, &l, &Euclidean, &pairs, 128, 5).unwrap();
        let ds = estimate_dsmall(&chain, &Euclidean, None, &pairs, 128, 5).unwrap();
        assert!((rep.rows[0].ratio - ds.rows[0].ratio).abs() <= 1e-12);
    }
}
