use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::measure::{EmpiricalMeasure, SupportKey};
use super::metric::Metric;
use crate::error::{Error, Result};
use crate::numerics::{compensated_sum, mean_ci95};
use crate::rng;

/// Below this many samples the normal CI is flagged unreliable.
pub const RELIABLE_SAMPLES: usize = 100;

/// Monte Carlo mean of `d(X, Y)` under a coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingEstimate {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
    pub reliable: bool,
}

/// Upper bound on `W_d` from `n_samples` draws of a coupled pair.
///
/// Draw `i` uses stream `i` of `seed`, so the result does not depend on the
/// number of worker threads.
pub fn coupling_upper_bound<S, M, F>(
    sampler: F,
    metric: &M,
    n_samples: usize,
    seed: u64,
) -> Result<CouplingEstimate>
where
    S: Send,
    M: Metric<S> + Sync,
    F: Fn(&mut ChaCha8Rng) -> Result<(S, S)> + Sync,
{
    if n_samples < 2 {
        return Err(Error::Parameter(format!(
            "coupling estimate needs n_samples >= 2, got {n_samples}"
        )));
    }
    let distances: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i);
            let (x, y) = sampler(&mut r)?;
            Ok(metric.distance(&x, &y))
        })
        .collect::<Result<_>>()?;
    let (mean, ci95) = mean_ci95(&distances);
    Ok(CouplingEstimate {
        mean,
        ci95,
        n: n_samples,
        reliable: n_samples >= RELIABLE_SAMPLES,
    })
}

/// `sum_s |mu(s) - nu(s)|` over the merged support; ranges over `[0, 2]`.
///
/// Computed as `2 - 2 sum_s min(mu(s), nu(s))` so that disjoint supports
/// give exactly 2.
pub fn tv_distance<S: SupportKey + Clone>(
    mu: &EmpiricalMeasure<S>,
    nu: &EmpiricalMeasure<S>,
) -> f64 {
    let a = mu.atom_masses();
    let b = nu.atom_masses();
    let (small, large) = if a.len() <= b.len() {
        (&a, &b)
    } else {
        (&b, &a)
    };
    let mut overlaps: Vec<(S::Key, f64)> = small
        .iter()
        .filter_map(|(k, w)| large.get(k).map(|v| (k.clone(), w.min(*v))))
        .collect();
    if overlaps.is_empty() {
        return 2.0;
    }
    // fixed summation order regardless of hash iteration order
    overlaps.sort_by(|x, y| x.1.total_cmp(&y.1));
    let common = compensated_sum(overlaps.into_iter().map(|(_, w)| w));
    (2.0 - 2.0 * common).clamp(0.0, 2.0)
}
