use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use super::config::{
    constant_start, decimal_start, load_any, DriftConfig, DsmallConfig, ExperimentConfig, Mode,
    ModelSpec,
};
use super::curve::ConvergenceCurve;
use super::experiment::{chain_paths, run_convergence_experiment, sdde_paths};
use super::fit::fit_rate_constants;
use crate::chains::{
    DecimalState, DigitShiftChain, ExactDigitChain, MarkovModel, SegmentState, Skeleton,
    WithLyapunov,
};
use crate::error::{Error, Result};
use crate::lyapunov::{
    check_cumulative_drift, check_drift_continuous, check_drift_discrete, check_drift_enumerated,
    estimate_dsmall, sample_level_set_pairs, CumulativeDriftReport, DriftReport, DsmallReport,
    Verdict,
};
use crate::rate_kernel::{
    h_inverse, h_transform, petrov_bound_check, rate_asymptotics, rate_bound, PsiFunction,
    RateBoundParams, RateSpec,
};
use crate::rng;
use crate::transport::{
    wasserstein_1d, wasserstein_exact, BoundedMetric, EmpiricalMeasure, Euclidean, Metric,
    MetricSpec, SupportKey,
};

/// Exit code for malformed invocations and configs.
pub const EXIT_USAGE: i32 = 64;
/// Exit code for runtime failures that are not verdicts.
pub const EXIT_SOFTWARE: i32 = 70;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "ergodic",
    version,
    about = "Wasserstein convergence rates for Markov chains and delay equations"
)]
pub struct Cli {
    /// Experiment or check config (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Rate function calculus.
    Rates {
        #[command(subcommand)]
        op: RatesOp,
    },
    /// Distance between two weighted point clouds given as CSV.
    Wasserstein {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long, default_value = "euclid1d")]
        metric: String,
    },
    /// Sample marginals on the config's schedule.
    Simulate,
    /// Drift inequality check; exits 1 on fail, 2 when inconclusive.
    DriftCheck,
    /// One-step contraction on level-set pairs.
    Dsmall,
    /// Extremal Petrov recursion against `g^{-1}(n)`.
    Petrov {
        #[arg(long)]
        psi: String,
        #[arg(long)]
        a0: f64,
        #[arg(long)]
        n: usize,
    },
    /// Convergence curve with optional bound column.
    Converge,
    /// Fit bound constants to a curve CSV.
    Fit {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        phi: String,
        #[arg(long)]
        eps: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum RatesOp {
    /// `phi(x)`, `phi'(x)` and `H_phi(x)`.
    Eval {
        #[arg(long)]
        phi: String,
        #[arg(long)]
        x: f64,
    },
    /// `H_phi^{-1}(y)`.
    Invert {
        #[arg(long)]
        phi: String,
        #[arg(long)]
        y: f64,
    },
    /// The bound `C1 (1 + V) phi(H^{-1}(C2 t))^{-(1-eps)}` at each `t`.
    Bound {
        #[arg(long)]
        phi: String,
        #[arg(long)]
        c1: f64,
        #[arg(long)]
        c2: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.0)]
        v: f64,
        #[arg(long, num_args = 1.., required = true)]
        t: Vec<f64>,
    },
}

/// Twelve significant digits, shortest form.
fn num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    rounded.to_string()
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

struct Output {
    text: String,
    code: i32,
}

impl Output {
    fn ok(text: String) -> Self {
        Self { text, code: 0 }
    }
}

fn need_config(cli: &Cli) -> Result<&PathBuf> {
    cli.config
        .as_ref()
        .ok_or_else(|| Error::Config("this verb needs --config <path>".into()))
}

fn rates(op: &RatesOp, format: Format) -> Result<Output> {
    let parse = |s: &str| -> Result<_> { s.parse::<RateSpec>()?.build() };
    let text = match op {
        RatesOp::Eval { phi, x } => {
            let f = parse(phi)?;
            let (v, d, h) = (f.value(*x), f.derivative(*x), h_transform(&f, *x)?);
            match format {
                Format::Csv => format!(
                    "x,phi,dphi,h\n{},{},{},{}\n",
                    num(*x),
                    num(v),
                    num(d),
                    num(h)
                ),
                Format::Json => json(
                    &serde_json::json!({ "phi": phi, "x": x, "value": v, "derivative": d, "h": h }),
                )?,
            }
        }
        RatesOp::Invert { phi, y } => {
            let x = h_inverse(&parse(phi)?, *y)?;
            match format {
                Format::Csv => format!("{}\n", num(x)),
                Format::Json => json(&serde_json::json!({ "phi": phi, "y": y, "x": x }))?,
            }
        }
        RatesOp::Bound {
            phi,
            c1,
            c2,
            eps,
            v,
            t,
        } => {
            let f = parse(phi)?;
            let p = RateBoundParams::new(*c1, *c2, *eps, *v)?;
            let vals = t
                .iter()
                .map(|&s| rate_bound(&f, &p, s))
                .collect::<Result<Vec<_>>>()?;
            let family = rate_asymptotics(&f, *eps)?;
            match format {
                Format::Csv => {
                    let mut s = format!("# family: {family:?}\nt,bound\n");
                    for (ti, b) in t.iter().zip(&vals) {
                        s += &format!("{},{}\n", num(*ti), num(*b));
                    }
                    s
                }
                Format::Json => json(
                    &serde_json::json!({ "params": p, "family": family, "t": t, "bound": vals }),
                )?,
            }
        }
    };
    Ok(Output::ok(text))
}

fn wasserstein(mu: &PathBuf, nu: &PathBuf, metric: &str, format: Format) -> Result<Output> {
    let a = EmpiricalMeasure::<Vec<f64>>::read_csv(File::open(mu)?)?;
    let b = EmpiricalMeasure::<Vec<f64>>::read_csv(File::open(nu)?)?;
    let spec: MetricSpec = metric.parse()?;
    let dim = a.points()[0].len();
    if b.points()[0].len() != dim {
        return Err(Error::Dimension(
            "the two measures live in different dimensions".into(),
        ));
    }
    let (d, method, plan) = match spec {
        MetricSpec::Euclidean if dim == 1 => (
            wasserstein_1d(&a.to_scalar()?, &b.to_scalar()?, &Euclidean)?,
            "monotone coupling (exact)",
            None,
        ),
        MetricSpec::Euclidean => {
            let (d, p) = wasserstein_exact(&a, &b, &Euclidean)?;
            (d, "exact transport", Some(p))
        }
        MetricSpec::Discrete => {
            let (d, p) = wasserstein_exact(&a, &b, &BoundedMetric::Discrete)?;
            (d, "exact transport", Some(p))
        }
        MetricSpec::BoundedEuclidean { beta } => {
            let (d, p) = wasserstein_exact(&a, &b, &BoundedMetric::bounded_euclidean(beta, dim)?)?;
            (d, "exact transport", Some(p))
        }
        MetricSpec::SupSegment { .. } => {
            return Err(Error::Config("segment metric needs segment states".into()))
        }
    };
    let text = match format {
        Format::Csv => format!("{}\n", num(d)),
        Format::Json => {
            json(&serde_json::json!({ "distance": d, "method": method, "plan": plan }))?
        }
    };
    Ok(Output::ok(text))
}

#[derive(Serialize)]
struct SampleRow {
    t: f64,
    start: usize,
    sample: usize,
    x: Vec<f64>,
}

fn simulate(cfg: &ExperimentConfig, format: Format) -> Result<Output> {
    let seed = rng::derive_seed(cfg.seed, 0);
    let mut rows = Vec::new();
    for (s, &x0) in cfg.starts.iter().enumerate() {
        let paths: Vec<Vec<Vec<f64>>> = match cfg.model {
            ModelSpec::Digit => {
                let st: Vec<usize> = cfg.schedule.iter().map(|&t| t as usize).collect();
                chain_paths(&DigitShiftChain, &x0, &st, cfg.n_samples, seed)?
                    .into_iter()
                    .map(|p| p.into_iter().map(|x| vec![x]).collect())
                    .collect()
            }
            ModelSpec::ExactDigit => {
                let st: Vec<usize> = cfg.schedule.iter().map(|&t| t as usize).collect();
                chain_paths(
                    &ExactDigitChain,
                    &decimal_start(x0)?,
                    &st,
                    cfg.n_samples,
                    seed,
                )?
                .into_iter()
                .map(|p| p.iter().map(|x| vec![x.to_f64()]).collect())
                .collect()
            }
            ModelSpec::Sdde { .. } => {
                let (model, grid) = cfg.model.sdde()?;
                let start = constant_start(&model, grid, x0)?;
                sdde_paths(&model, &start, &cfg.schedule, cfg.n_samples, seed, |w| {
                    Ok(w.current().to_vec())
                })?
            }
        };
        for (k, &t) in cfg.schedule.iter().enumerate() {
            for (j, p) in paths.iter().enumerate() {
                rows.push(SampleRow {
                    t,
                    start: s,
                    sample: j,
                    x: p[k].clone(),
                });
            }
        }
    }
    let text = match format {
        Format::Json => json(&rows)?,
        Format::Csv => {
            let dim = rows.first().map_or(1, |r| r.x.len());
            let mut s = String::from("# schema: 1\nt,start,sample");
            for i in 0..dim {
                s += &format!(",x{i}");
            }
            s.push('\n');
            for r in &rows {
                s += &format!("{},{},{}", r.t, r.start, r.sample);
                for v in &r.x {
                    s += &format!(",{v}");
                }
                s.push('\n');
            }
            s
        }
    };
    Ok(Output::ok(text))
}

#[derive(Serialize)]
struct DriftOutput {
    drift: DriftReport,
    cumulative: Vec<CumulativeDriftReport>,
    verdict: Verdict,
}

fn drift_output(
    drift: DriftReport,
    cumulative: Vec<CumulativeDriftReport>,
    format: Format,
) -> Result<Output> {
    let verdict = cumulative
        .iter()
        .fold(drift.verdict, |v, c| v.combine(c.verdict));
    let text = match format {
        Format::Json => json(&DriftOutput {
            drift,
            cumulative,
            verdict,
        })?,
        Format::Csv => {
            let mut s = drift.to_table();
            for c in &cumulative {
                s += &format!(
                    "cumulative n={}: lhs {:.6e} ± {:.3e}, rhs {:.6e}, verdict {}\n",
                    c.n, c.lhs, c.ci95, c.rhs, c.verdict
                );
            }
            s += &format!("overall verdict: {verdict}\n");
            s
        }
    };
    Ok(Output {
        text,
        code: verdict.exit_code(),
    })
}

fn cumulative<M: MarkovModel>(
    model: &M,
    cfg: &DriftConfig,
    phi: &crate::rate_kernel::RateFunction,
    states: &[M::State],
) -> Result<Vec<CumulativeDriftReport>> {
    let mut out = Vec::new();
    for (i, x) in states.iter().enumerate() {
        for &n in &cfg.cumulative {
            out.push(check_cumulative_drift(
                model,
                phi,
                cfg.k,
                x,
                n,
                cfg.n_mc,
                rng::derive_seed(cfg.seed, 1000 + i as u64),
            )?);
        }
    }
    Ok(out)
}

fn drift_check(cfg: &DriftConfig, format: Format) -> Result<Output> {
    let phi = cfg.phi.build()?;
    let v = cfg.lyapunov.build()?;
    match cfg.model {
        ModelSpec::Digit => {
            let vv = v.clone();
            let model = WithLyapunov::new(DigitShiftChain, move |x: &f64| vv(&[*x]));
            let report = if cfg.enumerate {
                let kernel = |x: &f64| Ok((0..10).map(|d| ((x + d as f64) / 10.0, 0.1)).collect());
                check_drift_enumerated(&cfg.states, kernel, |x| v(&[*x]), &phi, cfg.k)?
            } else {
                check_drift_discrete(&model, &phi, cfg.k, &cfg.states, cfg.n_mc, cfg.seed)?
            };
            drift_output(report, cumulative(&model, cfg, &phi, &cfg.states)?, format)
        }
        ModelSpec::ExactDigit => {
            let states = cfg
                .states
                .iter()
                .map(|&x| decimal_start(x))
                .collect::<Result<Vec<_>>>()?;
            let vv = v.clone();
            let model =
                WithLyapunov::new(ExactDigitChain, move |x: &DecimalState| vv(&[x.to_f64()]));
            let report = if cfg.enumerate {
                let kernel = |x: &DecimalState| (0..10u8).map(|d| Ok((x.step(d)?, 0.1))).collect();
                check_drift_enumerated(&states, kernel, |x| v(&[x.to_f64()]), &phi, cfg.k)?
            } else {
                check_drift_discrete(&model, &phi, cfg.k, &states, cfg.n_mc, cfg.seed)?
            };
            drift_output(report, cumulative(&model, cfg, &phi, &states)?, format)
        }
        ModelSpec::Sdde { .. } => {
            let horizon = cfg
                .horizon
                .ok_or_else(|| Error::Config("delay equations need `horizon`".into()))?;
            let (model, grid) = cfg.model.sdde()?;
            let states = cfg
                .states
                .iter()
                .map(|&x| constant_start(&model, grid, x))
                .collect::<Result<Vec<_>>>()?;
            let dt = model.dt;
            let model = model.with_lyapunov(move |s: &SegmentState| v(s.current()));
            let report = check_drift_continuous(
                &model, &phi, cfg.k, &states, horizon, cfg.n_mc, dt, cfg.seed,
            )?;
            if !cfg.cumulative.is_empty() {
                return Err(Error::Config(
                    "the cumulative check is for discrete chains".into(),
                ));
            }
            drift_output(report, Vec::new(), format)
        }
    }
}

fn dsmall_verdict(rep: &DsmallReport) -> Verdict {
    if !(rep.rho_hat.is_finite() && rep.ci95.is_finite()) {
        Verdict::Inconclusive
    } else if rep.rho_hat - 3.0 * rep.ci95 > 0.0 {
        Verdict::Pass
    } else if rep.rho_hat + 3.0 * rep.ci95 <= 0.0 {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

fn dsmall_output(rep: DsmallReport, format: Format) -> Result<Output> {
    let verdict = dsmall_verdict(&rep);
    let text = match format {
        Format::Json => json(&serde_json::json!({ "report": rep, "verdict": verdict }))?,
        Format::Csv => {
            let mut s = String::from("pair,d,w,ratio,ci95\n");
            for r in &rep.rows {
                s += &format!(
                    "{},{},{},{},{}\n",
                    r.index,
                    num(r.d),
                    num(r.w),
                    num(r.ratio),
                    num(r.ci95)
                );
            }
            s += &format!(
                "# rho_hat: {} ± {} ({})\n# verdict: {verdict}\n",
                num(rep.rho_hat),
                num(rep.ci95),
                rep.method
            );
            s
        }
    };
    Ok(Output {
        text,
        code: verdict.exit_code(),
    })
}

type PointRef<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

fn pairs_for(cfg: &DsmallConfig, v: Option<PointRef>) -> Result<Vec<(f64, f64)>> {
    match cfg.sample_pairs {
        None if cfg.pairs.is_empty() => Err(Error::Config("give `pairs` or `sample_pairs`".into())),
        None => Ok(cfg.pairs.clone()),
        Some(sp) => {
            let r = cfg
                .level
                .ok_or_else(|| Error::Config("sampling pairs needs `level`".into()))?;
            let v = v.ok_or_else(|| Error::Config("sampling pairs needs `lyapunov`".into()))?;
            if !(sp.lo < sp.hi) {
                return Err(Error::Config("sample_pairs needs lo < hi".into()));
            }
            sample_level_set_pairs(
                |g| g.random_range(sp.lo..sp.hi),
                |x: &f64| v(&[*x]),
                r,
                sp.n,
                rng::derive_seed(cfg.seed, 77),
            )
        }
    }
}

fn dsmall_with<M, D>(
    model: &M,
    metric: &D,
    cfg: &DsmallConfig,
    pairs: &[(M::State, M::State)],
) -> Result<DsmallReport>
where
    M: MarkovModel,
    M::State: SupportKey,
    D: Metric<M::State> + Sync,
{
    estimate_dsmall(model, metric, cfg.level, pairs, cfg.n_mc, cfg.seed)
}

fn scalar_metric(spec: MetricSpec) -> Result<BoundedMetric> {
    match spec {
        MetricSpec::Discrete => Ok(BoundedMetric::Discrete),
        MetricSpec::BoundedEuclidean { beta } => BoundedMetric::bounded_euclidean(beta, 1),
        _ => Err(Error::Config(format!(
            "metric {spec:?} is not available here"
        ))),
    }
}

fn dsmall(cfg: &DsmallConfig, format: Format) -> Result<Output> {
    let v = cfg.lyapunov.map(|l| l.build()).transpose()?;
    let vref = v.as_deref().map(|f| f as &(dyn Fn(&[f64]) -> f64 + Sync));
    let rep = match cfg.model {
        ModelSpec::Digit | ModelSpec::ExactDigit => {
            let pairs = pairs_for(cfg, vref)?;
            let vf = v
                .clone()
                .unwrap_or_else(|| std::sync::Arc::new(|x: &[f64]| x[0].abs()));
            if cfg.model == ModelSpec::Digit {
                let model = WithLyapunov::new(DigitShiftChain, move |x: &f64| vf(&[*x]));
                match cfg.metric {
                    MetricSpec::Euclidean => dsmall_with(&model, &Euclidean, cfg, &pairs)?,
                    other => dsmall_with(&model, &scalar_metric(other)?, cfg, &pairs)?,
                }
            } else {
                let model =
                    WithLyapunov::new(ExactDigitChain, move |x: &DecimalState| vf(&[x.to_f64()]));
                let pairs = pairs
                    .iter()
                    .map(|&(x, y)| Ok((decimal_start(x)?, decimal_start(y)?)))
                    .collect::<Result<Vec<_>>>()?;
                match cfg.metric {
                    MetricSpec::Euclidean => dsmall_with(&model, &Euclidean, cfg, &pairs)?,
                    other => dsmall_with(&model, &scalar_metric(other)?, cfg, &pairs)?,
                }
            }
        }
        ModelSpec::Sdde { .. } => {
            let (model, grid) = cfg.model.sdde()?;
            let metric = match cfg.metric {
                MetricSpec::SupSegment { beta } => BoundedMetric::bounded_sup_segment(beta, grid)?,
                MetricSpec::BoundedEuclidean { beta } => {
                    BoundedMetric::bounded_euclidean(beta, model.spec.dim())?
                }
                MetricSpec::Discrete => BoundedMetric::Discrete,
                MetricSpec::Euclidean => {
                    return Err(Error::Config(
                        "delay equations need a bounded metric".into(),
                    ))
                }
            };
            let pairs = pairs_for(cfg, vref)?
                .iter()
                .map(|&(x, y)| {
                    Ok((
                        constant_start(&model, grid, x)?,
                        constant_start(&model, grid, y)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let dt = model.dt;
            let model = match v {
                Some(vf) => model.with_lyapunov(move |s: &SegmentState| vf(s.current())),
                None => model,
            };
            let skeleton = Skeleton {
                model,
                t0: cfg.t0.unwrap_or(1.0),
                dt,
            };
            dsmall_with(&skeleton, &metric, cfg, &pairs)?
        }
    };
    dsmall_output(rep, format)
}

fn petrov(psi: &str, a0: f64, n: usize, format: Format) -> Result<Output> {
    let rep = petrov_bound_check(&PsiFunction::by_name(psi)?, a0, n)?;
    let verdict = if rep.passed {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let text = match format {
        Format::Json => json(&rep)?,
        Format::Csv => {
            let mut s = String::from("n,iterate,bound,margin\n");
            for r in &rep.rows {
                s += &format!(
                    "{},{},{},{}\n",
                    r.n,
                    num(r.iterate),
                    num(r.bound),
                    num(r.margin)
                );
            }
            s += &format!(
                "# psi: {}  a0: {}  worst margin: {:e}  verdict: {verdict}\n",
                rep.psi, rep.a0, rep.worst_margin
            );
            s
        }
    };
    Ok(Output {
        text,
        code: verdict.exit_code(),
    })
}

fn converge(cli: &Cli) -> Result<Output> {
    let mut cfg = ExperimentConfig::load(need_config(cli)?)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    // --out is handled by the caller so both formats go to the same place
    cfg.output = None;
    let curve = run_convergence_experiment(&cfg)?;
    let text = match cli.format {
        Format::Csv => curve.to_csv_string()?,
        Format::Json => curve.to_json()? + "\n",
    };
    Ok(Output::ok(text))
}

fn fit(curve: &PathBuf, phi: &str, eps: f64, format: Format) -> Result<Output> {
    let c = ConvergenceCurve::read_csv(File::open(curve)?)?;
    let f = fit_rate_constants(&c, &phi.parse::<RateSpec>()?.build()?, eps)?;
    let text = match format {
        Format::Json => json(&f)?,
        Format::Csv => format!(
            "c1,c2,residual,shift,points_used\n{},{},{},{},{}\n",
            num(f.c1),
            num(f.c2),
            num(f.residual),
            num(f.shift),
            f.points_used
        ),
    };
    Ok(Output::ok(text))
}

fn execute(cli: &Cli) -> Result<Output> {
    match &cli.verb {
        Verb::Rates { op } => rates(op, cli.format),
        Verb::Wasserstein { mu, nu, metric } => wasserstein(mu, nu, metric, cli.format),
        Verb::Simulate => {
            let mut cfg = ExperimentConfig::load(need_config(cli)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if cfg.mode == Mode::Reference && cfg.starts.len() != 1 {
                return Err(Error::Config("reference mode takes one start".into()));
            }
            simulate(&cfg, cli.format)
        }
        Verb::DriftCheck => {
            let mut cfg: DriftConfig = load_any(need_config(cli)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            drift_check(&cfg, cli.format)
        }
        Verb::Dsmall => {
            let mut cfg: DsmallConfig = load_any(need_config(cli)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            dsmall(&cfg, cli.format)
        }
        Verb::Petrov { psi, a0, n } => petrov(psi, *a0, *n, cli.format),
        Verb::Converge => converge(cli),
        Verb::Fit { curve, phi, eps } => fit(curve, phi, *eps, cli.format),
    }
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Json(_) => EXIT_USAGE,
        _ => EXIT_SOFTWARE,
    }
}

/// Parses `args` (including the program name), runs the verb and returns
/// the process exit code. Results go to `--out` or `stdout`; diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{e}")
            } else {
                write!(stdout, "{e}")
            };
            return code;
        }
    };
    let out = match execute(&cli) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return error_code(&e);
        }
    };
    let written = match &cli.out {
        Some(path) => std::fs::write(path, out.text.as_bytes()),
        None => stdout.write_all(out.text.as_bytes()),
    };
    if let Err(e) = written {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_SOFTWARE;
    }
    out.code
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut o = Vec::new();
        let mut e = Vec::new();
        let code = run(
            std::iter::once("ergodic").chain(args.iter().copied()),
            &mut o,
            &mut e,
        );
        (
            code,
            String::from_utf8(o).unwrap(),
            String::from_utf8(e).unwrap(),
        )
    }

    #[test]
    fn rates_invert_prints_four() {
        assert_eq!(
            call(&["rates", "invert", "--phi", "power:0.5", "--y", "2"]),
            (0, "4\n".into(), String::new())
        );
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(
            call(&["rates", "invert", "--phi", "power:0.5"]).0,
            EXIT_USAGE
        );
        assert_eq!(call(&["nonsense"]).0, EXIT_USAGE);
        assert_eq!(
            call(&["rates", "invert", "--phi", "cubic:1", "--y", "2"]).0,
            EXIT_USAGE
        );
        assert_eq!(call(&["converge"]).0, EXIT_USAGE);
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn petrov_linear_passes() {
        let (code, out, _) = call(&["petrov", "--psi", "linear", "--a0", "1", "--n", "100"]);
        assert_eq!(code, 0);
        assert!(out.contains("verdict: pass"));
    }

    #[test]
    fn rates_eval_and_bound() {
        let (code, out, _) = call(&["rates", "eval", "--phi", "linear:1", "--x", "1"]);
        assert_eq!((code, out.as_str()), (0, "x,phi,dphi,h\n1,1,1,0\n"));
        let (code, out, _) = call(&[
            "rates", "bound", "--phi", "linear:1", "--c1", "1", "--c2", "1", "--eps", "0.5", "--t",
            "0", "2",
        ]);
        assert_eq!(code, 0);
        assert!(out.contains("\n0,1\n2,0.367879441171\n"), "{out}");
    }
}
