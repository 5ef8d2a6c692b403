use serde::{Deserialize, Serialize};

use super::measure::EmpiricalMeasure;
use super::metric::Metric;
use crate::error::{Error, Result};
use crate::numerics::compensated_sum;

/// Largest `n * m` accepted by the exact solver.
pub const MAX_PLAN_SIZE: usize = 1_000_000;

const MASS_EPS: f64 = 1e-15;
const CERT_TOL: f64 = 1e-7;
const MARGINAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEdge {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
}

/// Sparse coupling between two finite measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub edges: Vec<PlanEdge>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn source_marginal(&self, n: usize) -> Vec<f64> {
        let mut out = vec![Vec::new(); n];
        for e in &self.edges {
            out[e.source].push(e.mass);
        }
        out.into_iter().map(compensated_sum).collect()
    }

    pub fn target_marginal(&self, m: usize) -> Vec<f64> {
        let mut out = vec![Vec::new(); m];
        for e in &self.edges {
            out[e.target].push(e.mass);
        }
        out.into_iter().map(compensated_sum).collect()
    }

    /// Largest marginal discrepancy against `a` and `b`.
    pub fn marginal_error(&self, a: &[f64], b: &[f64]) -> f64 {
        let ea = self
            .source_marginal(a.len())
            .iter()
            .zip(a)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let eb = self
            .target_marginal(b.len())
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        ea.max(eb)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Optimal plan together with the dual potentials that certify it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTransport {
    pub cost: f64,
    pub plan: TransportPlan,
    pub dual_source: Vec<f64>,
    pub dual_target: Vec<f64>,
}

/// Exact optimal transport between weights `a` and `b` under the row-major
/// `a.len() x b.len()` cost matrix.
///
/// Successive shortest paths on the bipartite residual graph. Reduced costs
/// `c_ij - u_i - v_j` stay nonnegative, so each search is a Dijkstra run
/// started from every source that still has supply. The returned potentials
/// are checked for complementary slackness before returning.
pub fn solve_transport(a: &[f64], b: &[f64], cost: &[f64]) -> Result<ExactTransport> {
    let n = a.len();
    let m = b.len();
    if n == 0 || m == 0 {
        return Err(Error::Parameter("transport between empty measures".into()));
    }
    if n.saturating_mul(m) > MAX_PLAN_SIZE {
        return Err(Error::SizeGuard(format!(
            "{n} x {m} plan exceeds {MAX_PLAN_SIZE} cells"
        )));
    }
    if cost.len() != n * m {
        return Err(Error::Dimension(format!(
            "cost matrix has {} entries, expected {}",
            cost.len(),
            n * m
        )));
    }
    if let Some(c) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::Domain(format!("non-finite cost {c}")));
    }
    let sa = compensated_sum(a.iter().copied());
    let sb = compensated_sum(b.iter().copied());
    if (sa - sb).abs() > MARGINAL_TOL {
        return Err(Error::Parameter(format!("unbalanced masses {sa} and {sb}")));
    }

    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let mut flow = vec![0.0_f64; n * m];
    let mut u = vec![0.0_f64; n];
    let mut v: Vec<f64> = (0..m)
        .map(|j| {
            (0..n)
                .map(|i| cost[i * m + j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    let total = n + m;
    let mut dist = vec![f64::INFINITY; total];
    let mut done = vec![false; total];
    // parent of a sink is a source and vice versa
    let mut parent = vec![usize::MAX; total];

    let max_rounds = 64 * total + 10_000;
    let mut rounds = 0;
    while supply.iter().any(|&s| s > MASS_EPS) {
        rounds += 1;
        if rounds > max_rounds {
            return Err(Error::NonConvergence(format!(
                "transport solver exceeded {max_rounds} augmentations"
            )));
        }
        dist.fill(f64::INFINITY);
        done.fill(false);
        parent.fill(usize::MAX);
        for i in 0..n {
            if supply[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        let mut sink = None;
        loop {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for (k, (&d, &f)) in dist.iter().zip(&done).enumerate() {
                if !f && d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < n {
                let i = best;
                for j in 0..m {
                    let node = n + j;
                    if done[node] {
                        continue;
                    }
                    let rc = (cost[i * m + j] - u[i] - v[j]).max(0.0);
                    let nd = best_d + rc;
                    if nd < dist[node] {
                        dist[node] = nd;
                        parent[node] = i;
                    }
                }
            } else {
                let j = best - n;
                if demand[j] > MASS_EPS {
                    sink = Some(j);
                    break;
                }
                for i in 0..n {
                    if done[i] || flow[i * m + j] <= MASS_EPS {
                        continue;
                    }
                    let rc = (u[i] + v[j] - cost[i * m + j]).max(0.0);
                    let nd = best_d + rc;
                    if nd < dist[i] {
                        dist[i] = nd;
                        parent[i] = best;
                    }
                }
            }
        }
        let Some(t) = sink else {
            return Err(Error::NonConvergence(
                "residual graph lost its augmenting path".into(),
            ));
        };
        let reach = dist[n + t];
        for i in 0..n {
            u[i] -= dist[i].min(reach);
        }
        for j in 0..m {
            v[j] += dist[n + j].min(reach);
        }

        // bottleneck along the path
        let mut delta = demand[t];
        let mut node = n + t;
        loop {
            let i = parent[node];
            let up = parent[i];
            if up == usize::MAX {
                delta = delta.min(supply[i]);
                break;
            }
            delta = delta.min(flow[i * m + (up - n)]);
            node = up;
        }
        let mut node = n + t;
        loop {
            let i = parent[node];
            let j = node - n;
            flow[i * m + j] += delta;
            let up = parent[i];
            if up == usize::MAX {
                supply[i] -= delta;
                if supply[i] <= MASS_EPS {
                    supply[i] = 0.0;
                }
                break;
            }
            let jb = up - n;
            flow[i * m + jb] -= delta;
            if flow[i * m + jb] <= MASS_EPS {
                flow[i * m + jb] = 0.0;
            }
            node = up;
        }
        demand[t] -= delta;
        if demand[t] <= MASS_EPS {
            demand[t] = 0.0;
        }
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let f = flow[i * m + j];
            if f > 0.0 {
                edges.push(PlanEdge {
                    source: i,
                    target: j,
                    mass: f,
                });
            }
        }
    }
    let cost_value = compensated_sum(edges.iter().map(|e| e.mass * cost[e.source * m + e.target]));
    let plan = TransportPlan {
        edges,
        cost: cost_value,
    };
    certify(&plan, a, b, cost, &u, &v)?;
    Ok(ExactTransport {
        cost: cost_value,
        plan,
        dual_source: u,
        dual_target: v,
    })
}

fn certify(
    plan: &TransportPlan,
    a: &[f64],
    b: &[f64],
    cost: &[f64],
    u: &[f64],
    v: &[f64],
) -> Result<()> {
    let m = b.len();
    let err = plan.marginal_error(a, b);
    if err > MARGINAL_TOL {
        return Err(Error::Certificate(format!("plan marginals off by {err:e}")));
    }
    for e in &plan.edges {
        let slack = cost[e.source * m + e.target] - u[e.source] - v[e.target];
        if slack.abs() > CERT_TOL {
            return Err(Error::Certificate(format!(
                "complementary slackness violated on ({}, {}) by {slack:e}",
                e.source, e.target
            )));
        }
    }
    for (i, ui) in u.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            let slack = cost[i * m + j] - ui - vj;
            if slack < -CERT_TOL {
                return Err(Error::Certificate(format!(
                    "dual infeasible at ({i}, {j}) by {slack:e}"
                )));
            }
        }
    }
    Ok(())
}

/// `W_d(mu, nu)` by exact optimal transport.
pub fn wasserstein_exact<S, M: Metric<S>>(
    mu: &EmpiricalMeasure<S>,
    nu: &EmpiricalMeasure<S>,
    metric: &M,
) -> Result<(f64, TransportPlan)> {
    let n = mu.len();
    let m = nu.len();
    if n.saturating_mul(m) > MAX_PLAN_SIZE {
        return Err(Error::SizeGuard(format!(
            "{n} x {m} plan exceeds {MAX_PLAN_SIZE} cells"
        )));
    }
    let mut cost = Vec::with_capacity(n * m);
    for x in mu.points() {
        for y in nu.points() {
            cost.push(metric.distance(x, y));
        }
    }
    let sol = solve_transport(mu.weights(), nu.weights(), &cost)?;
    Ok((sol.cost, sol.plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{BoundedMetric, DiscreteMetric, Euclidean};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn point_masses() {
        let mu = EmpiricalMeasure::dirac(0.25);
        let nu = EmpiricalMeasure::dirac(1.0);
        let (w, plan) = wasserstein_exact(&mu, &nu, &Euclidean).unwrap();
        assert_eq!(w, 0.75);
        assert_eq!(
            plan.edges,
            vec![PlanEdge {
                source: 0,
                target: 0,
                mass: 1.0
            }]
        );
    }

    #[test]
    fn disjoint_supports_under_discrete_metric() {
        let mu = EmpiricalMeasure::uniform(vec![0.0, 1.0]).unwrap();
        let nu = EmpiricalMeasure::uniform(vec![2.0, 3.0, 4.0]).unwrap();
        let (w, _) = wasserstein_exact(&mu, &nu, &DiscreteMetric).unwrap();
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_permutation_search_on_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let perms = permutations(3);
        for _ in 0..50 {
            let xs: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random(), rng.random()]).collect();
            let ys: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random(), rng.random()]).collect();
            let brute = perms
                .iter()
                .map(|p| {
                    (0..3)
                        .map(|i| Euclidean.distance(&xs[i], &ys[p[i]]))
                        .sum::<f64>()
                        / 3.0
                })
                .fold(f64::INFINITY, f64::min);
            let mu = EmpiricalMeasure::uniform(xs).unwrap();
            let nu = EmpiricalMeasure::uniform(ys).unwrap();
            let (w, _) = wasserstein_exact(&mu, &nu, &Euclidean).unwrap();
            assert!((w - brute).abs() < 1e-12, "{w} vs {brute}");
        }
    }

    #[test]
    fn size_guard() {
        let a = vec![1.0 / 1001.0; 1001];
        let b = vec![1.0 / 1000.0; 1000];
        let c = vec![0.0; 1001 * 1000];
        assert!(matches!(
            solve_transport(&a, &b, &c),
            Err(Error::SizeGuard(_))
        ));
    }

    #[test]
    fn plan_json_export() {
        let mu = EmpiricalMeasure::uniform(vec![0.0, 1.0]).unwrap();
        let (_, plan) = wasserstein_exact(&mu, &mu, &Euclidean).unwrap();
        let back: TransportPlan = serde_json::from_str(&plan.to_json().unwrap()).unwrap();
        assert_eq!(back, plan);
    }

    proptest! {
        #[test]
        fn plans_reproduce_marginals(
            xs in prop::collection::vec((0.0f64..1.0, 0.01f64..1.0), 1..9),
            ys in prop::collection::vec((0.0f64..1.0, 0.01f64..1.0), 1..9),
            beta in 0.05f64..2.0,
        ) {
            let (px, wx): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
            let (py, wy): (Vec<f64>, Vec<f64>) = ys.into_iter().unzip();
            let mu = EmpiricalMeasure::normalized(px, wx).unwrap();
            let nu = EmpiricalMeasure::normalized(py, wy).unwrap();
            let metric = BoundedMetric::bounded_euclidean(beta, 1).unwrap();
            let (w, plan) = wasserstein_exact(&mu, &nu, &metric).unwrap();
            prop_assert!(plan.marginal_error(mu.weights(), nu.weights()) <= 1e-9);
            prop_assert!(plan.edges.iter().all(|e| e.mass >= 0.0));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&w));
        }
    }
}
