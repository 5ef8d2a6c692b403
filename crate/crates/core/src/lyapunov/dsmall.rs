use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chains::MarkovModel;
use crate::error::{Error, Result};
use crate::numerics::mean_ci95;
use crate::rng;
use crate::transport::{
    coupling_upper_bound, wasserstein_exact, EmpiricalMeasure, Metric, SupportKey,
};

/// Largest per-side sample count for which one-step distances use exact OT.
pub const EXACT_OT_SAMPLES: usize = 512;

/// Independent replicates behind each exact-OT ratio.
pub const DSMALL_REPLICATES: u64 = 8;

/// Lower bound on reported CI half-widths; CRN marginals of translation
/// kernels can make every replicate agree to the last bit.
pub const CI_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DsmallRow {
    pub index: usize,
    /// Cost between the two starting states.
    pub d: f64,
    /// Estimated one-step transport cost.
    pub w: f64,
    pub ratio: f64,
    pub ci95: f64,
    /// `V(x) + V(y)` when the model carries `V`.
    pub vsum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DsmallReport {
    /// `1 - max ratio`.
    pub rho_hat: f64,
    pub ci95: f64,
    pub method: String,
    /// Set when the distances come from a coupling rather than exact OT.
    pub upper_bound_only: bool,
    pub rows: Vec<DsmallRow>,
}

impl DsmallReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Per-pair `(mean, ci95)` of `W_c(P(x,·), P(y,·))`, plus the method name.
///
/// Both marginals are built from the same streams (common random numbers).
pub(crate) fn one_step_costs<M, C>(
    model: &M,
    cost: &C,
    pairs: &[(M::State, M::State)],
    n_mc: usize,
    seed: u64,
) -> Result<(Vec<(f64, f64)>, bool)>
where
    M: MarkovModel,
    M::State: SupportKey,
    C: Metric<M::State> + Sync,
{
    if n_mc < 2 {
        return Err(Error::Parameter(format!(
            "n_mc must be at least 2, got {n_mc}"
        )));
    }
    let exact = n_mc <= EXACT_OT_SAMPLES;
    let mut out = Vec::with_capacity(pairs.len());
    for (i, (x, y)) in pairs.iter().enumerate() {
        let sub = rng::derive_seed(seed, i as u64);
        if exact {
            let reps = (0..DSMALL_REPLICATES)
                .into_par_iter()
                .map(|r| {
                    let rs = rng::derive_seed(sub, r);
                    let mut xs = Vec::with_capacity(n_mc);
                    let mut ys = Vec::with_capacity(n_mc);
                    for j in 0..n_mc as u64 {
                        xs.push(model.step(x, &mut rng::stream(rs, j))?);
                        ys.push(model.step(y, &mut rng::stream(rs, j))?);
                    }
                    let mu = EmpiricalMeasure::uniform(xs)?.compress();
                    let nu = EmpiricalMeasure::uniform(ys)?.compress();
                    Ok(wasserstein_exact(&mu, &nu, cost)?.0)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (m, ci) = mean_ci95(&reps);
            out.push((m, ci.max(CI_FLOOR)));
        } else {
            let sampler = |r: &mut ChaCha8Rng| {
                let mut r2 = r.clone();
                Ok((model.step(x, r)?, model.step(y, &mut r2)?))
            };
            let est = coupling_upper_bound(sampler, cost, n_mc, sub)?;
            out.push((est.mean, est.ci95.max(CI_FLOOR)));
        }
    }
    Ok((out, !exact))
}

/// Estimates the contraction `W_d(P(x,·), P(y,·)) <= (1 - rho) d(x, y)` over
/// the given pairs.
///
/// With `level = Some(r)` every pair must satisfy `V(x) + V(y) <= r`.
/// Above [`EXACT_OT_SAMPLES`] the synchronous coupling is used and the
/// report is marked as an upper bound only.
pub fn estimate_dsmall<M, D>(
    model: &M,
    metric: &D,
    level: Option<f64>,
    pairs: &[(M::State, M::State)],
    n_mc: usize,
    seed: u64,
) -> Result<DsmallReport>
where
    M: MarkovModel,
    M::State: SupportKey,
    D: Metric<M::State> + Sync,
{
    if pairs.is_empty() {
        return Err(Error::Parameter("no pairs".into()));
    }
    let mut ds = Vec::with_capacity(pairs.len());
    let mut vsums = Vec::with_capacity(pairs.len());
    for (i, (x, y)) in pairs.iter().enumerate() {
        let d = metric.distance(x, y);
        if !(d > 0.0) {
            return Err(Error::DegeneratePair(format!("pair {i} has d(x, y) = {d}")));
        }
        let vsum = match (model.lyapunov(x), model.lyapunov(y)) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        if let Some(r) = level {
            let s = vsum
                .ok_or_else(|| Error::Parameter("level set given but model carries no V".into()))?;
            if s > r {
                return Err(Error::Parameter(format!(
                    "pair {i} has V(x) + V(y) = {s} > R = {r}"
                )));
            }
        }
        ds.push(d);
        vsums.push(vsum);
    }
    let (costs, upper_bound_only) = one_step_costs(model, metric, pairs, n_mc, seed)?;
    let rows: Vec<DsmallRow> = costs
        .iter()
        .enumerate()
        .map(|(i, &(w, ci))| DsmallRow {
            index: i,
            d: ds[i],
            w,
            ratio: w / ds[i],
            ci95: ci / ds[i],
            vsum: vsums[i],
        })
        .collect();
    let worst = rows
        .iter()
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .expect("pairs nonempty");
    Ok(DsmallReport {
        rho_hat: 1.0 - worst.ratio,
        ci95: worst.ci95,
        method: if upper_bound_only {
            "synchronous coupling (upper bound only)"
        } else {
            "exact_ot"
        }
        .into(),
        upper_bound_only,
        rows,
    })
}

/// Draws `n_pairs` pairs from `draw` by rejection until `V(x) + V(y) <= r`.
///
/// Attempt `a` uses stream `a` of `seed`; gives up after `1000 n_pairs` attempts.
pub fn sample_level_set_pairs<S>(
    draw: impl Fn(&mut ChaCha8Rng) -> S,
    v: impl Fn(&S) -> f64,
    r: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<(S, S)>> {
    let max_tries = 1000 * n_pairs.max(1);
    let mut out = Vec::with_capacity(n_pairs);
    for attempt in 0..max_tries as u64 {
        if out.len() == n_pairs {
            break;
        }
        let mut s = rng::stream(seed, attempt);
        let x = draw(&mut s);
        let y = draw(&mut s);
        if v(&x) + v(&y) <= r {
            out.push((x, y));
        }
    }
    if out.len() < n_pairs {
        return Err(Error::NonConvergence(format!(
            "only {} of {n_pairs} pairs landed in the level set after {max_tries} draws",
            out.len()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{DigitShiftChain, KernelChain, WithLyapunov};
    use crate::transport::Euclidean;
    use rand::Rng;

    fn pairs() -> Vec<(f64, f64)> {
        vec![(0.3, 0.8), (0.0, 0.95), (0.12, 0.13), (0.5, 0.1)]
    }

    #[test]
    fn digit_chain_contracts_by_a_tenth() {
        let rep = estimate_dsmall(&DigitShiftChain, &Euclidean, None, &pairs(), 256, 7).unwrap();
        assert!(!rep.upper_bound_only);
        for row in &rep.rows {
            assert!((row.ratio - 0.1).abs() <= 3.0 * row.ci95, "{row:?}");
        }
        assert!((rep.rho_hat - 0.9).abs() <= 3.0 * rep.ci95);
    }

    #[test]
    fn large_samples_switch_to_coupling() {
        let rep =
            estimate_dsmall(&DigitShiftChain, &Euclidean, None, &pairs()[..1], 2000, 7).unwrap();
        assert!(rep.upper_bound_only);
        assert!((rep.rho_hat - 0.9).abs() <= 3.0 * rep.ci95 + 1e-12);
    }

    #[test]
    fn forgetful_chain_has_rho_one() {
        let chain = KernelChain::new(|_x: &f64, r: &mut ChaCha8Rng| Ok(r.random::<f64>()));
        let rep = estimate_dsmall(&chain, &Euclidean, None, &pairs(), 64, 1).unwrap();
        assert_eq!(rep.rho_hat, 1.0);
    }

    #[test]
    fn degenerate_pair_and_level_set() {
        let e = estimate_dsmall(&DigitShiftChain, &Euclidean, None, &[(0.4, 0.4)], 64, 1);
        assert!(matches!(e, Err(Error::DegeneratePair(_))));
        let with_v = WithLyapunov::new(DigitShiftChain, |x: &f64| *x);
        let e = estimate_dsmall(&with_v, &Euclidean, Some(0.5), &[(0.3, 0.8)], 64, 1);
        assert!(matches!(e, Err(Error::Parameter(_))));
        assert!(estimate_dsmall(&with_v, &Euclidean, Some(1.1), &[(0.3, 0.8)], 64, 1).is_ok());
    }

    #[test]
    fn level_set_sampler() {
        let p = sample_level_set_pairs(|r| r.random::<f64>(), |x| *x, 0.5, 20, 3).unwrap();
        assert_eq!(p.len(), 20);
        assert!(p.iter().all(|(x, y)| x + y <= 0.5));
        assert_eq!(
            p,
            sample_level_set_pairs(|r| r.random::<f64>(), |x| *x, 0.5, 20, 3).unwrap()
        );
        assert!(sample_level_set_pairs(|r| r.random::<f64>() + 1.0, |x| *x, 0.5, 2, 3).is_err());
    }
}
