use std::fs::File;
use std::io::BufWriter;

use rand::Rng;
use rayon::prelude::*;

use super::config::{constant_start, decimal_start, ExperimentConfig, Mode, ModelSpec, Observable};
use super::curve::{ConvergenceCurve, CurveRow};
use super::fit::{attach_bound, fit_rate_constants};
use crate::chains::{
    enumerate_digit_marginal_f64, sdde_observe, DecimalState, DigitShiftChain, ExactDigitChain,
    MarkovModel, PathWindow, SddeModel, SegmentState, MAX_ENUMERATION_STEPS,
};
use crate::error::{Error, Result};
use crate::numerics::mean_ci95;
use crate::rate_kernel::RateBoundParams;
use crate::rng;
use crate::transport::{
    wasserstein_1d, wasserstein_1d_to_uniform, wasserstein_exact, BoundedMetric, EmpiricalMeasure,
    Euclidean, Metric, MetricSpec, SupportKey,
};

const PATHS: u64 = 0;
const SURROGATE: u64 = 1;
const BOOTSTRAP: u64 = 2;
const FLOOR: u64 = 3;

/// Horizon multiple and sample multiple of the long-run surrogate reference.
pub const SURROGATE_HORIZON: f64 = 10.0;
pub const SURROGATE_SAMPLES: usize = 4;

/// Euclidean or a bounded metric, chosen at run time.
#[derive(Debug, Clone, Copy)]
enum Cost {
    Euclid,
    Bounded(BoundedMetric),
}

impl Cost {
    fn point(spec: MetricSpec, dim: usize) -> Result<Self> {
        match spec {
            MetricSpec::Euclidean => Ok(Self::Euclid),
            MetricSpec::Discrete => Ok(Self::Bounded(BoundedMetric::Discrete)),
            MetricSpec::BoundedEuclidean { beta } => {
                Ok(Self::Bounded(BoundedMetric::bounded_euclidean(beta, dim)?))
            }
            MetricSpec::SupSegment { .. } => Err(Error::Config(
                "segment metric needs the `segment` observable".into(),
            )),
        }
    }

    fn is_euclid(&self) -> bool {
        matches!(self, Self::Euclid)
    }
}

impl Metric<f64> for Cost {
    fn distance(&self, x: &f64, y: &f64) -> f64 {
        match self {
            Self::Euclid => Euclidean.distance(x, y),
            Self::Bounded(b) => b.distance(x, y),
        }
    }
}

impl Metric<Vec<f64>> for Cost {
    fn distance(&self, x: &Vec<f64>, y: &Vec<f64>) -> f64 {
        match self {
            Self::Euclid => Euclidean.distance(x, y),
            Self::Bounded(b) => b.distance(x, y),
        }
    }
}

impl Metric<DecimalState> for Cost {
    fn distance(&self, x: &DecimalState, y: &DecimalState) -> f64 {
        match self {
            Self::Euclid => Euclidean.distance(x, y),
            Self::Bounded(b) => b.distance(x, y),
        }
    }
}

/// `[sample][time]` states of a discrete chain at the given step counts.
/// Sample `j` uses stream `j` of `seed`.
pub fn chain_paths<M: MarkovModel>(
    model: &M,
    x0: &M::State,
    steps: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<M::State>>> {
    (0..n as u64)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(seed, j);
            let mut x = x0.clone();
            let mut done = 0;
            let mut out = Vec::with_capacity(steps.len());
            for &s in steps {
                while done < s {
                    x = model.step(&x, &mut r)?;
                    done += 1;
                }
                out.push(x.clone());
            }
            Ok(out)
        })
        .collect()
}

/// `[sample][time]` observations of a delay equation.
pub fn sdde_paths<A: Send>(
    model: &SddeModel,
    x0: &SegmentState,
    times: &[f64],
    n: usize,
    seed: u64,
    extract: impl Fn(&PathWindow) -> Result<A> + Sync,
) -> Result<Vec<Vec<A>>> {
    (0..n as u64)
        .into_par_iter()
        .map(|j| {
            let mut out = Vec::with_capacity(times.len());
            sdde_observe(
                &model.spec,
                x0,
                times,
                model.dt,
                &mut rng::stream(seed, j),
                |_, w| {
                    out.push(extract(w)?);
                    Ok(())
                },
            )?;
            Ok(out)
        })
        .collect()
}

fn column<A: Clone>(paths: &[Vec<A>], k: usize) -> Vec<A> {
    paths.iter().map(|p| p[k].clone()).collect()
}

fn pick<A: Clone>(xs: &[A], idx: &[usize]) -> Vec<A> {
    idx.iter().map(|&i| xs[i].clone()).collect()
}

type IndexStat<'a> = dyn Fn(&[usize], &[usize]) -> Result<f64> + Sync + 'a;
type SampleDistance<'a, A> = dyn Fn(&[A], &[A]) -> Result<f64> + Sync + 'a;

/// Normal-approximation CI from `b` bootstrap replicates of `stat`.
///
/// With `paired` both index sets are the same draw (for common-noise samples).
fn bootstrap_ci(
    n1: usize,
    n2: usize,
    paired: bool,
    b: usize,
    seed: u64,
    stat: &IndexStat<'_>,
) -> Result<f64> {
    let reps = (0..b as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i);
            let ia: Vec<usize> = (0..n1).map(|_| r.random_range(0..n1)).collect();
            let ib: Vec<usize> = if paired {
                ia.clone()
            } else {
                (0..n2).map(|_| r.random_range(0..n2)).collect()
            };
            stat(&ia, &ib)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (_, ci) = mean_ci95(&reps);
    // mean_ci95 scales by 1/sqrt(b); the bootstrap spread is the standard error itself
    Ok(ci * (b as f64).sqrt())
}

/// Distance and CI between two sample sets at each schedule point.
fn two_sample_rows<A: Clone + Sync>(
    cfg: &ExperimentConfig,
    a: &[Vec<A>],
    b_col: &(dyn Fn(usize) -> Vec<A> + Sync),
    paired: bool,
    dist: &SampleDistance<'_, A>,
) -> Result<Vec<CurveRow>> {
    let boot = rng::derive_seed(cfg.seed, BOOTSTRAP);
    (0..cfg.schedule.len())
        .into_par_iter()
        .map(|k| {
            let xs = column(a, k);
            let ys = b_col(k);
            let d = dist(&xs, &ys)?;
            let stat = |ia: &[usize], ib: &[usize]| dist(&pick(&xs, ia), &pick(&ys, ib));
            let ci = bootstrap_ci(
                xs.len(),
                ys.len(),
                paired,
                cfg.bootstrap,
                rng::derive_seed(boot, k as u64),
                &stat,
            )?;
            Ok(CurveRow {
                t: cfg.schedule[k],
                distance: d,
                ci95: ci,
                bound: None,
            })
        })
        .collect()
}

fn scalar_w(cost: Cost) -> impl Fn(&[f64], &[f64]) -> Result<f64> + Sync {
    move |x, y| {
        wasserstein_1d(
            &EmpiricalMeasure::uniform(x.to_vec())?,
            &EmpiricalMeasure::uniform(y.to_vec())?,
            &cost,
        )
    }
}

fn exact_w<A, M>(metric: M) -> impl Fn(&[A], &[A]) -> Result<f64> + Sync
where
    A: SupportKey + Clone,
    M: Metric<A> + Sync,
{
    move |x, y| {
        let mu = EmpiricalMeasure::uniform(x.to_vec())?.compress();
        let nu = EmpiricalMeasure::uniform(y.to_vec())?.compress();
        Ok(wasserstein_exact(&mu, &nu, &metric)?.0)
    }
}

/// Mean metric distance along synchronously coupled pairs.
fn coupled_rows<A: Clone + Sync>(
    cfg: &ExperimentConfig,
    a: &[Vec<A>],
    b: &[Vec<A>],
    metric: &(dyn Fn(&A, &A) -> f64 + Sync),
) -> Vec<CurveRow> {
    (0..cfg.schedule.len())
        .map(|k| {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| metric(&x[k], &y[k])).collect();
            let (mean, ci) = mean_ci95(&d);
            CurveRow {
                t: cfg.schedule[k],
                distance: mean,
                ci95: ci,
                bound: None,
            }
        })
        .collect()
}

fn steps(cfg: &ExperimentConfig) -> Vec<usize> {
    cfg.schedule.iter().map(|&t| t as usize).collect()
}

/// Distance between `P^n(x, ·)` and the digit chain's uniform invariant law.
fn digit_reference(cfg: &ExperimentConfig, x0: f64) -> Result<ConvergenceCurve> {
    if !matches!(cfg.metric, MetricSpec::Euclidean) {
        return Err(Error::Unsupported(
            "the uniform reference is implemented for the Euclidean metric".into(),
        ));
    }
    let st = steps(cfg);
    if cfg.enumerate {
        let rows = st
            .iter()
            .map(|&n| {
                if n as u32 > MAX_ENUMERATION_STEPS {
                    return Err(Error::SizeGuard(format!(
                        "enumeration needs n <= {MAX_ENUMERATION_STEPS}, got {n}"
                    )));
                }
                let mu = enumerate_digit_marginal_f64(x0, n as u32)?;
                Ok(CurveRow {
                    t: n as f64,
                    distance: wasserstein_1d_to_uniform(&mu, 0.0, 1.0)?,
                    ci95: 0.0,
                    bound: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return ConvergenceCurve::new("exact enumeration vs uniform", rows);
    }
    let paths: Vec<Vec<f64>> = match cfg.model {
        ModelSpec::ExactDigit => chain_paths(
            &ExactDigitChain,
            &decimal_start(x0)?,
            &st,
            cfg.n_samples,
            rng::derive_seed(cfg.seed, PATHS),
        )?
        .into_iter()
        .map(|p| p.iter().map(DecimalState::to_f64).collect())
        .collect(),
        _ => chain_paths(
            &DigitShiftChain,
            &x0,
            &st,
            cfg.n_samples,
            rng::derive_seed(cfg.seed, PATHS),
        )?,
    };
    let boot = rng::derive_seed(cfg.seed, BOOTSTRAP);
    let to_u =
        |x: &[f64]| wasserstein_1d_to_uniform(&EmpiricalMeasure::uniform(x.to_vec())?, 0.0, 1.0);
    let rows = (0..st.len())
        .into_par_iter()
        .map(|k| {
            let xs = column(&paths, k);
            let stat = |ia: &[usize], _: &[usize]| to_u(&pick(&xs, ia));
            let ci = bootstrap_ci(
                xs.len(),
                0,
                true,
                cfg.bootstrap,
                rng::derive_seed(boot, k as u64),
                &stat,
            )?;
            Ok(CurveRow {
                t: cfg.schedule[k],
                distance: to_u(&xs)?,
                ci95: ci,
                bound: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut floor_rng = rng::stream(rng::derive_seed(cfg.seed, FLOOR), 0);
    let iid: Vec<f64> = (0..cfg.n_samples)
        .map(|_| floor_rng.random::<f64>())
        .collect();
    let mut curve = ConvergenceCurve::new("sampled marginal vs uniform", rows)?;
    curve.sampling_floor = Some(to_u(&iid)?);
    Ok(curve)
}

fn digit_two_start(cfg: &ExperimentConfig, x: f64, y: f64) -> Result<ConvergenceCurve> {
    let st = steps(cfg);
    let seed = rng::derive_seed(cfg.seed, PATHS);
    let cost = Cost::point(cfg.metric, 1)?;
    let rows = match cfg.model {
        ModelSpec::ExactDigit => {
            let a = chain_paths(
                &ExactDigitChain,
                &decimal_start(x)?,
                &st,
                cfg.n_samples,
                seed,
            )?;
            let b = chain_paths(
                &ExactDigitChain,
                &decimal_start(y)?,
                &st,
                cfg.n_samples,
                seed,
            )?;
            coupled_rows(cfg, &a, &b, &|p: &DecimalState, q: &DecimalState| {
                cost.distance(p, q)
            })
        }
        _ => {
            let a = chain_paths(&DigitShiftChain, &x, &st, cfg.n_samples, seed)?;
            let b = chain_paths(&DigitShiftChain, &y, &st, cfg.n_samples, seed)?;
            coupled_rows(cfg, &a, &b, &|p: &f64, q: &f64| cost.distance(p, q))
        }
    };
    ConvergenceCurve::new("synchronous coupling", rows)
}

fn sdde_curve(cfg: &ExperimentConfig) -> Result<ConvergenceCurve> {
    let (model, grid) = cfg.model.sdde()?;
    let dim = model.spec.dim();
    let x0 = constant_start(&model, grid, cfg.starts[0])?;
    let seed = rng::derive_seed(cfg.seed, PATHS);
    let times = &cfg.schedule;
    let t_ref = SURROGATE_HORIZON * times[times.len() - 1];
    let n_ref = SURROGATE_SAMPLES * cfg.n_samples;
    let ref_seed = rng::derive_seed(cfg.seed, SURROGATE);
    let two = cfg.mode == Mode::TwoStart;
    let mut warnings = Vec::new();

    let (rows, floor, method) = match cfg.observable {
        Observable::Current => {
            let cost = Cost::point(cfg.metric, dim)?;
            let a = sdde_paths(&model, &x0, times, cfg.n_samples, seed, |w| {
                Ok(w.current().to_vec())
            })?;
            let other: Vec<Vec<Vec<f64>>> = if two {
                let y0 = constant_start(&model, grid, cfg.starts[1])?;
                sdde_paths(&model, &y0, times, cfg.n_samples, seed, |w| {
                    Ok(w.current().to_vec())
                })?
            } else {
                sdde_paths(&model, &x0, &[t_ref], n_ref, ref_seed, |w| {
                    Ok(w.current().to_vec())
                })?
            };
            let b_col = |k: usize| {
                if two {
                    column(&other, k)
                } else {
                    column(&other, 0)
                }
            };
            let (rows, floor) = if dim == 1 {
                let flat = |v: Vec<Vec<f64>>| v.into_iter().map(|p| p[0]).collect::<Vec<f64>>();
                let a1: Vec<Vec<f64>> =
                    a.iter().map(|p| p.iter().map(|q| q[0]).collect()).collect();
                let b1 = |k: usize| flat(b_col(k));
                let w = scalar_w(cost);
                let rows = two_sample_rows(cfg, &a1, &b1, two, &w)?;
                let last = if two {
                    column(&a1, times.len() - 1)
                } else {
                    flat(column(&other, 0))
                };
                let half = last.len() / 2;
                (rows, w(&last[..half], &last[half..])?)
            } else {
                let w = exact_w(cost);
                let rows = two_sample_rows(cfg, &a, &b_col, two, &w)?;
                let last = if two {
                    column(&a, times.len() - 1)
                } else {
                    column(&other, 0)
                };
                let half = last.len() / 2;
                (rows, w(&last[..half], &last[half..])?)
            };
            let method = if cost.is_euclid() || dim > 1 {
                "X(t)(0) marginals"
            } else {
                "X(t)(0) marginals, monotone coupling (upper bound for bounded metrics)"
            };
            (rows, floor, method)
        }
        Observable::Segment => {
            let metric = match cfg.metric {
                MetricSpec::SupSegment { beta } => BoundedMetric::bounded_sup_segment(beta, grid)?,
                MetricSpec::Discrete => BoundedMetric::Discrete,
                _ => {
                    return Err(Error::Config(
                        "segment observable needs the segment or discrete metric".into(),
                    ))
                }
            };
            let a = sdde_paths(&model, &x0, times, cfg.n_samples, seed, |w| {
                w.to_segment(grid)
            })?;
            let other = if two {
                let y0 = constant_start(&model, grid, cfg.starts[1])?;
                sdde_paths(&model, &y0, times, cfg.n_samples, seed, |w| {
                    w.to_segment(grid)
                })?
            } else {
                sdde_paths(&model, &x0, &[t_ref], n_ref, ref_seed, |w| {
                    w.to_segment(grid)
                })?
            };
            let b_col = |k: usize| {
                if two {
                    column(&other, k)
                } else {
                    column(&other, 0)
                }
            };
            let w = exact_w(metric);
            let rows = two_sample_rows(cfg, &a, &b_col, two, &w)?;
            let last = if two {
                column(&a, times.len() - 1)
            } else {
                column(&other, 0)
            };
            let half = last.len() / 2;
            (
                rows,
                w(&last[..half], &last[half..])?,
                "segment marginals, exact transport",
            )
        }
    };
    if !two {
        warnings.push(format!(
            "reference is a long-run surrogate at t = {t_ref} with {n_ref} samples; distances below the sampling floor are noise"
        ));
    }
    let mut curve = ConvergenceCurve::new(
        if two {
            format!("two-start, common noise, {method}")
        } else {
            method.to_string()
        },
        rows,
    )?;
    curve.sampling_floor = Some(floor);
    curve.warnings = warnings;
    Ok(curve)
}

/// Runs the experiment, attaches the bound column when constants are given
/// or fitted, and writes CSV to `cfg.output` when set.
pub fn run_convergence_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceCurve> {
    cfg.validate()?;
    let mut curve = match (cfg.model, cfg.mode) {
        (ModelSpec::Sdde { .. }, _) => sdde_curve(cfg)?,
        (_, Mode::Reference) => digit_reference(cfg, cfg.starts[0])?,
        (_, Mode::TwoStart) => digit_two_start(cfg, cfg.starts[0], cfg.starts[1])?,
    };
    if let (Some(rate), Some(phi)) = (cfg.rate, cfg.phi()?) {
        let v0 = cfg.bound.v0;
        let constants = if cfg.bound.fit {
            let fit = fit_rate_constants(&curve, &phi, rate.epsilon)?;
            curve.fit = Some(fit);
            Some((fit.c1 / (1.0 + v0), fit.c2))
        } else {
            cfg.bound.c1.zip(cfg.bound.c2)
        };
        if let Some((c1, c2)) = constants {
            attach_bound(
                &mut curve,
                &phi,
                &RateBoundParams::new(c1, c2, rate.epsilon, v0)?,
            )?;
        }
    }
    if let Some(path) = &cfg.output {
        curve.write_csv(BufWriter::new(File::create(path)?))?;
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{BoundConfig, RateConfig};
    use crate::rate_kernel::RateSpec;

    fn digit_cfg(mode: Mode, starts: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            name: None,
            model: ModelSpec::Digit,
            metric: MetricSpec::Euclidean,
            rate: None,
            bound: BoundConfig::default(),
            schedule: (1..=8).map(f64::from).collect(),
            n_samples: 200,
            seed: 11,
            mode,
            starts,
            observable: Observable::Current,
            enumerate: false,
            bootstrap: 32,
            output: None,
        }
    }

    #[test]
    fn synchronous_digit_curve_is_geometric() {
        for model in [ModelSpec::Digit, ModelSpec::ExactDigit] {
            let mut cfg = digit_cfg(Mode::TwoStart, vec![0.3, 0.8]);
            cfg.model = model;
            let c = run_convergence_experiment(&cfg).unwrap();
            for r in &c.rows {
                assert!((r.distance - 0.5 * 10f64.powf(-r.t)).abs() < 1e-12, "{r:?}");
            }
        }
    }

    #[test]
    fn enumerated_reference_curve() {
        let mut cfg = digit_cfg(Mode::Reference, vec![0.37]);
        cfg.enumerate = true;
        cfg.schedule = (1..=5).map(f64::from).collect();
        let c = run_convergence_experiment(&cfg).unwrap();
        for r in &c.rows {
            assert!(r.distance <= 1.5 * 10f64.powf(-r.t));
        }
        cfg.schedule = vec![8.0];
        assert!(matches!(
            run_convergence_experiment(&cfg),
            Err(Error::SizeGuard(_))
        ));
    }

    #[test]
    fn sampled_reference_sits_on_the_floor() {
        let cfg = digit_cfg(Mode::Reference, vec![0.37]);
        let c = run_convergence_experiment(&cfg).unwrap();
        let floor = c.sampling_floor.unwrap();
        assert!(floor > 0.0 && floor < 0.1);
        let last = c.rows.last().unwrap();
        assert!(last.distance <= 1e-8 + floor + 3.0 * last.ci95);
    }

    #[test]
    fn fitted_bound_covers_digit_curve() {
        let mut cfg = digit_cfg(Mode::TwoStart, vec![0.3, 0.8]);
        cfg.rate = Some(RateConfig {
            phi: RateSpec::Linear { lambda: 1.0 },
            epsilon: 0.1,
        });
        cfg.bound.fit = true;
        let c = run_convergence_experiment(&cfg).unwrap();
        assert!(c.rows.iter().all(|r| r.bound.unwrap() >= r.distance));
    }

    #[test]
    fn deterministic_and_writes_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = digit_cfg(Mode::Reference, vec![0.5]);
        cfg.output = Some(dir.path().join("a.csv"));
        run_convergence_experiment(&cfg).unwrap();
        cfg.output = Some(dir.path().join("b.csv"));
        run_convergence_experiment(&cfg).unwrap();
        let a = std::fs::read(dir.path().join("a.csv")).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
        assert!(String::from_utf8(a)
            .unwrap()
            .contains("t,distance,ci95,bound"));
    }

    #[test]
    fn small_sdde_runs() {
        let text = r#"
            schedule = [0.0, 0.5, 1.0]
            n_samples = 64
            seed = 4
            starts = [2.0, -2.0]
            mode = "two_start"
            bootstrap = 8
            metric = { kind = "bounded_euclidean", beta = 8.0 }
            [model]
            kind = "sdde"
            grid_points = 10
            dt = 0.05
            equation = { kind = "radial_tanh", kappa = 1.0, alpha = 1.0, m = 1.0 }
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let c = run_convergence_experiment(&cfg).unwrap();
        assert_eq!(c.rows[0].distance, 0.5);
        assert!(c.rows[2].distance < 0.4, "{c:?}");
        let mut seg = cfg.clone();
        seg.observable = Observable::Segment;
        seg.metric = MetricSpec::SupSegment { beta: 1.0 };
        seg.mode = Mode::Reference;
        seg.starts = vec![1.0];
        seg.schedule = vec![0.5, 1.0];
        seg.n_samples = 16;
        let c = run_convergence_experiment(&seg).unwrap();
        assert!(c.warnings[0].contains("surrogate"));
    }
}
