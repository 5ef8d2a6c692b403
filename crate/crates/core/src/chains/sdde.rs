use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{ContinuousModel, StateFn};
use super::segment::{norm, PathWindow, SegmentGrid, SegmentState};
use crate::error::{Error, Result};
use crate::rng;

/// `|X(t)|` beyond which integration aborts.
pub const BLOWUP_NORM: f64 = 1e12;

/// Writes `f(x)` (length `dim`) for the current window.
pub type DriftFn = Arc<dyn Fn(&PathWindow, &mut [f64]) + Send + Sync>;
/// Writes `g(x)` as a row-major `dim x noise_dim` matrix.
pub type DiffusionFn = Arc<dyn Fn(&PathWindow, &mut [f64]) + Send + Sync>;

/// Parameters of the radial drift `f2(v) = -kappa v |v|^(alpha - 2)`,
/// continued linearly inside `|v| < m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VkDrift {
    pub kappa: f64,
    pub alpha: f64,
    pub m: f64,
}

impl VkDrift {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.m > 0.0 && self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "radial drift needs kappa > 0, m > 0, alpha in (0, 1], got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let r = norm(v);
        let scale = -self.kappa * r.max(self.m).powf(self.alpha - 2.0);
        for (o, x) in out.iter_mut().zip(v) {
            *o = scale * x;
        }
    }
}

/// Diagonal diffusion shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionShape {
    /// `g = sigma I`.
    Constant { sigma: f64 },
    /// `g = (base + amp tanh(x(-r))) I`, componentwise.
    DelayedTanh { base: f64, amp: f64 },
}

impl DiffusionShape {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { sigma } if sigma.is_finite() => Ok(()),
            Self::DelayedTanh { base, amp }
                if base.is_finite() && amp.is_finite() && base > amp.abs() =>
            {
                Ok(())
            }
            _ => Err(Error::Parameter(format!(
                "diffusion {self:?} must be finite and, if state dependent, positive"
            ))),
        }
    }

    /// `sup |g|^2`, which is both `lambda_+` and `Lambda` for diagonal shapes.
    pub fn sup_square(&self) -> f64 {
        match *self {
            Self::Constant { sigma } => sigma * sigma,
            Self::DelayedTanh { base, amp } => (base + amp.abs()).powi(2),
        }
    }

    fn build(self, dim: usize) -> DiffusionFn {
        match self {
            Self::Constant { sigma } => Arc::new(move |_w: &PathWindow, out: &mut [f64]| {
                out.fill(0.0);
                for i in 0..dim {
                    out[i * dim + i] = sigma;
                }
            }),
            Self::DelayedTanh { base, amp } => Arc::new(move |w: &PathWindow, out: &mut [f64]| {
                out.fill(0.0);
                let old = w.delayed();
                for i in 0..dim {
                    out[i * dim + i] = base + amp * old[i].tanh();
                }
            }),
        }
    }
}

/// `dX = f(X_t) dt + g(X_t) dW` with delay `r`.
#[derive(Clone)]
pub struct SddeSpec {
    name: String,
    dim: usize,
    noise_dim: usize,
    delay: f64,
    drift: DriftFn,
    diffusion: DiffusionFn,
    radial: Option<VkDrift>,
    diffusion_sup: Option<f64>,
}

impl fmt::Debug for SddeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SddeSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("delay", &self.delay)
            .field("radial", &self.radial)
            .finish_non_exhaustive()
    }
}

/// Number of random segments in the radial-drift construction check.
pub const VK_CHECK_SAMPLES: usize = 10_000;
const VK_CHECK_SEED: u64 = 0x5EED0FD81F7;

impl SddeSpec {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        noise_dim: usize,
        delay: f64,
        drift: DriftFn,
        diffusion: DiffusionFn,
    ) -> Result<Self> {
        if dim == 0 || noise_dim == 0 {
            return Err(Error::Parameter(
                "state and noise dimensions must be positive".into(),
            ));
        }
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(Error::Parameter(format!(
                "delay must be positive, got {delay}"
            )));
        }
        Ok(Self {
            name: name.into(),
            dim,
            noise_dim,
            delay,
            drift,
            diffusion,
            radial: None,
            diffusion_sup: None,
        })
    }

    /// Radial drift `f2(x(0))` plus an optional bounded perturbation `f1`.
    ///
    /// Checks `<f(x), x(0)> <= -kappa |x(0)|^alpha` on random segments with
    /// `|x(0)| >= m` and fails if any violates it.
    pub fn vk_drift(
        params: VkDrift,
        dim: usize,
        delay: f64,
        diffusion: DiffusionShape,
        perturbation: Option<DriftFn>,
    ) -> Result<Self> {
        params.validate()?;
        diffusion.validate()?;
        let drift: DriftFn = match perturbation {
            None => Arc::new(move |w: &PathWindow, out: &mut [f64]| params.apply(w.current(), out)),
            Some(f1) => Arc::new(move |w: &PathWindow, out: &mut [f64]| {
                params.apply(w.current(), out);
                let mut extra = vec![0.0; out.len()];
                f1(w, &mut extra);
                for (o, e) in out.iter_mut().zip(extra) {
                    *o += e;
                }
            }),
        };
        let mut spec = Self::new("vk_drift", dim, dim, delay, drift, diffusion.build(dim))?;
        spec.radial = Some(params);
        spec.diffusion_sup = Some(diffusion.sup_square());
        spec.check_radial_condition(VK_CHECK_SAMPLES, VK_CHECK_SEED)?;
        Ok(spec)
    }

    /// Scalar equation `dX = f2(X(t)) dt + g(X(t - 1)) dW` with the
    /// increasing bounded positive `g(u) = 1 + tanh(u) / 2`.
    pub fn radial_tanh(kappa: f64, alpha: f64, m: f64) -> Result<Self> {
        let mut spec = Self::vk_drift(
            VkDrift { kappa, alpha, m },
            1,
            1.0,
            DiffusionShape::DelayedTanh {
                base: 1.0,
                amp: 0.5,
            },
            None,
        )?;
        spec.name = "radial_tanh".into();
        Ok(spec)
    }

    /// `dX = -theta X(t) dt + sigma dW`, carried on a segment of length `delay`.
    pub fn ornstein_uhlenbeck(theta: f64, sigma: f64, delay: f64) -> Result<Self> {
        let drift: DriftFn =
            Arc::new(move |w: &PathWindow, out: &mut [f64]| out[0] = -theta * w.current()[0]);
        let shape = DiffusionShape::Constant { sigma };
        shape.validate()?;
        let mut spec = Self::new("ornstein_uhlenbeck", 1, 1, delay, drift, shape.build(1))?;
        spec.diffusion_sup = Some(shape.sup_square());
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn radial(&self) -> Option<VkDrift> {
        self.radial
    }

    /// `(lambda_+, Lambda)` when the diffusion is a known diagonal shape.
    pub fn diffusion_bounds(&self) -> Option<(f64, f64)> {
        self.diffusion_sup.map(|s| (s, s))
    }

    pub fn drift_at(&self, w: &PathWindow) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.drift)(w, &mut out);
        out
    }

    pub fn diffusion_at(&self, w: &PathWindow) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.noise_dim];
        (self.diffusion)(w, &mut out);
        out
    }

    /// Random-segment check of `<f(x), x(0)> <= -kappa |x(0)|^alpha`.
    pub fn check_radial_condition(&self, n: usize, seed: u64) -> Result<()> {
        let Some(p) = self.radial else {
            return Err(Error::Unsupported(format!(
                "{} has no radial drift parameters",
                self.name
            )));
        };
        let grid = SegmentGrid::new(self.delay, 8)?;
        let mut r = rng::stream(seed, 0);
        for trial in 0..n {
            let mut dir: Vec<f64> = (0..self.dim).map(|_| r.sample(StandardNormal)).collect();
            let len = norm(&dir).max(1e-300);
            // include the boundary sphere itself
            let radius = if trial % 10 == 0 {
                p.m
            } else {
                p.m * (1.0 + 9.0 * r.random::<f64>())
            };
            dir.iter_mut().for_each(|x| *x *= radius / len);
            let mut values: Vec<f64> = (0..grid.m * self.dim)
                .map(|_| p.m * r.sample::<f64, _>(StandardNormal))
                .collect();
            values.extend_from_slice(&dir);
            let seg = SegmentState::new(grid, self.dim, values)?;
            let w = PathWindow::from_segment(&seg, 1);
            let f = self.drift_at(&w);
            let inner: f64 = f.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let bound = -p.kappa * radius.powf(p.alpha);
            if inner > bound + 1e-12 * (1.0 + bound.abs()) {
                return Err(Error::Parameter(format!(
                    "drift violates <f(x), x(0)> <= -kappa |x(0)|^alpha at |x(0)| = {radius}: {inner} > {bound}"
                )));
            }
        }
        Ok(())
    }
}

fn steps_for(t: f64, dt: f64) -> Result<usize> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!(
            "time {t} must be finite and nonnegative"
        )));
    }
    let k = (t / dt).round();
    if (k * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::Parameter(format!(
            "time {t} is not a multiple of dt = {dt}"
        )));
    }
    Ok(k as usize)
}

fn refinement(grid: SegmentGrid, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    let q = (grid.dt() / dt).round();
    if q < 1.0 || (q * dt - grid.dt()).abs() > 1e-9 * grid.dt() {
        return Err(Error::Parameter(format!(
            "dt = {dt} must divide the segment grid step {}",
            grid.dt()
        )));
    }
    Ok(q as usize)
}

/// Euler–Maruyama from `x0`, calling `observe(k, window)` when the clock
/// reaches `times[k]`.
pub fn sdde_observe(
    spec: &SddeSpec,
    x0: &SegmentState,
    times: &[f64],
    dt: f64,
    rng: &mut ChaCha8Rng,
    mut observe: impl FnMut(usize, &PathWindow) -> Result<()>,
) -> Result<()> {
    if x0.dim() != spec.dim {
        return Err(Error::Dimension(format!(
            "initial segment has dimension {}, spec {}",
            x0.dim(),
            spec.dim
        )));
    }
    let grid = x0.grid();
    if (grid.r - spec.delay).abs() > 1e-12 * spec.delay {
        return Err(Error::Parameter(format!(
            "segment covers [-{}, 0] but the delay is {}",
            grid.r, spec.delay
        )));
    }
    let q = refinement(grid, dt)?;
    let targets = times
        .iter()
        .map(|&t| steps_for(t, dt))
        .collect::<Result<Vec<_>>>()?;
    if targets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter(
            "observation times must be nondecreasing".into(),
        ));
    }

    let (n, mw) = (spec.dim, spec.noise_dim);
    let mut window = PathWindow::from_segment(x0, q);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n * mw];
    let mut xi = vec![0.0; mw];
    let mut next = vec![0.0; n];
    let sq = dt.sqrt();
    let mut k = 0;
    let mut step = 0usize;
    loop {
        while k < targets.len() && targets[k] == step {
            observe(k, &window)?;
            k += 1;
        }
        if k == targets.len() {
            return Ok(());
        }
        (spec.drift)(&window, &mut f);
        (spec.diffusion)(&window, &mut g);
        for z in xi.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        let cur = window.current();
        for i in 0..n {
            let noise: f64 = g[i * mw..(i + 1) * mw]
                .iter()
                .zip(&xi)
                .map(|(a, b)| a * b)
                .sum();
            next[i] = cur[i] + f[i] * dt + sq * noise;
        }
        step += 1;
        let size = norm(&next);
        if !(size <= BLOWUP_NORM) {
            return Err(Error::BlowUp {
                time: step as f64 * dt,
                norm: size,
            });
        }
        window.push(&next);
    }
}

/// Segments `X_t` at each of `times`.
pub fn sdde_trajectory(
    spec: &SddeSpec,
    x0: &SegmentState,
    times: &[f64],
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SegmentState>> {
    let grid = x0.grid();
    let mut out = Vec::with_capacity(times.len());
    sdde_observe(spec, x0, times, dt, rng, |_, w| {
        out.push(w.to_segment(grid)?);
        Ok(())
    })?;
    Ok(out)
}

/// Terminal segment after `horizon`.
pub fn sdde_integrate(
    spec: &SddeSpec,
    x0: &SegmentState,
    horizon: f64,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SegmentState> {
    Ok(sdde_trajectory(spec, x0, &[horizon], dt, rng)?
        .pop()
        .expect("one time requested"))
}

/// An SDDE with a fixed integrator step, usable as a [`ContinuousModel`].
#[derive(Clone)]
pub struct SddeModel {
    pub spec: SddeSpec,
    pub dt: f64,
    pub lyapunov: Option<StateFn<SegmentState>>,
}

impl SddeModel {
    pub fn new(spec: SddeSpec, dt: f64) -> Self {
        Self {
            spec,
            dt,
            lyapunov: None,
        }
    }

    pub fn with_lyapunov(
        mut self,
        v: impl Fn(&SegmentState) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.lyapunov = Some(Arc::new(v));
        self
    }
}

impl ContinuousModel for SddeModel {
    type State = SegmentState;

    fn default_dt(&self) -> f64 {
        self.dt
    }

    fn trajectory(
        &self,
        x0: &SegmentState,
        times: &[f64],
        dt: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<SegmentState>> {
        sdde_trajectory(&self.spec, x0, times, dt, rng)
    }

    fn lyapunov(&self, x: &SegmentState) -> Option<f64> {
        self.lyapunov.as_ref().map(|v| v(x))
    }
}

/// Serializable SDDE presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SddeConfig {
    VkDrift {
        kappa: f64,
        alpha: f64,
        m: f64,
        #[serde(default = "unit_delay")]
        delay: f64,
        #[serde(default = "unit_dim")]
        dim: usize,
        diffusion: DiffusionShape,
    },
    RadialTanh {
        kappa: f64,
        alpha: f64,
        m: f64,
    },
    OrnsteinUhlenbeck {
        theta: f64,
        sigma: f64,
        #[serde(default = "unit_delay")]
        delay: f64,
    },
}

fn unit_delay() -> f64 {
    1.0
}

fn unit_dim() -> usize {
    1
}

impl SddeConfig {
    pub fn build(&self) -> Result<SddeSpec> {
        match *self {
            Self::VkDrift {
                kappa,
                alpha,
                m,
                delay,
                dim,
                diffusion,
            } => SddeSpec::vk_drift(VkDrift { kappa, alpha, m }, dim, delay, diffusion, None),
            Self::RadialTanh { kappa, alpha, m } => SddeSpec::radial_tanh(kappa, alpha, m),
            Self::OrnsteinUhlenbeck {
                theta,
                sigma,
                delay,
            } => SddeSpec::ornstein_uhlenbeck(theta, sigma, delay),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mean_ci95;

    fn zero_spec(drift: DriftFn) -> SddeSpec {
        SddeSpec::new(
            "test",
            1,
            1,
            1.0,
            drift,
            Arc::new(|_: &PathWindow, g: &mut [f64]| g[0] = 0.0),
        )
        .unwrap()
    }

    #[test]
    fn no_drift_no_noise_keeps_path() {
        let spec = zero_spec(Arc::new(|_: &PathWindow, f: &mut [f64]| f[0] = 0.0));
        let grid = SegmentGrid::new(1.0, 10).unwrap();
        let x0 = SegmentState::constant(grid, &[2.5]).unwrap();
        let x = sdde_integrate(&spec, &x0, 3.0, 0.01, &mut rng::stream(0, 0)).unwrap();
        assert_eq!(x, x0);
    }

    #[test]
    fn linear_decay_matches_euler_oracle() {
        let spec = zero_spec(Arc::new(|w: &PathWindow, f: &mut [f64]| {
            f[0] = -w.current()[0]
        }));
        let grid = SegmentGrid::new(1.0, 10).unwrap();
        let x0 = SegmentState::constant(grid, &[1.0]).unwrap();
        for dt in [0.1, 0.01, 0.001] {
            let x = sdde_integrate(&spec, &x0, 1.0, dt, &mut rng::stream(0, 0)).unwrap();
            let oracle = (1.0 - dt).powf(1.0 / dt);
            assert!((x.current()[0] - oracle).abs() < 1e-12);
        }
        let fine = sdde_integrate(&spec, &x0, 1.0, 1e-4, &mut rng::stream(0, 0)).unwrap();
        assert!((fine.current()[0] - (-1f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn rejects_incompatible_steps() {
        let spec = SddeSpec::ornstein_uhlenbeck(1.0, 1.0, 1.0).unwrap();
        let grid = SegmentGrid::new(1.0, 10).unwrap();
        let x0 = SegmentState::constant(grid, &[0.0]).unwrap();
        assert!(sdde_integrate(&spec, &x0, 1.0, 0.03, &mut rng::stream(0, 0)).is_err());
        assert!(sdde_integrate(&spec, &x0, 1.005, 0.01, &mut rng::stream(0, 0)).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let spec = zero_spec(Arc::new(|w: &PathWindow, f: &mut [f64]| {
            f[0] = w.current()[0] * 1e3
        }));
        let grid = SegmentGrid::new(1.0, 10).unwrap();
        let x0 = SegmentState::constant(grid, &[1.0]).unwrap();
        let err = sdde_integrate(&spec, &x0, 10.0, 0.1, &mut rng::stream(0, 0)).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn sign_drift_satisfies_radial_condition() {
        let spec = SddeSpec::vk_drift(
            VkDrift {
                kappa: 1.0,
                alpha: 1.0,
                m: 0.1,
            },
            1,
            1.0,
            DiffusionShape::Constant { sigma: 1.0 },
            None,
        )
        .unwrap();
        let grid = SegmentGrid::new(1.0, 4).unwrap();
        let x = SegmentState::constant(grid, &[-3.0]).unwrap();
        let w = PathWindow::from_segment(&x, 1);
        assert_eq!(spec.drift_at(&w), vec![1.0]);
    }

    #[test]
    fn outward_perturbation_fails_construction() {
        let push: DriftFn =
            Arc::new(|w: &PathWindow, f: &mut [f64]| f[0] = 2.0 * w.current()[0].signum());
        let err = SddeSpec::vk_drift(
            VkDrift {
                kappa: 1.0,
                alpha: 1.0,
                m: 1.0,
            },
            1,
            1.0,
            DiffusionShape::Constant { sigma: 1.0 },
            Some(push),
        );
        assert!(err.is_err());
    }

    #[test]
    fn ornstein_uhlenbeck_moments() {
        let spec = SddeSpec::ornstein_uhlenbeck(1.0, 1.0, 1.0).unwrap();
        let grid = SegmentGrid::new(1.0, 10).unwrap();
        let x0 = SegmentState::constant(grid, &[2.0]).unwrap();
        let t = 1.0;
        let ends: Vec<f64> = (0..4000)
            .map(|i| {
                sdde_integrate(&spec, &x0, t, 0.01, &mut rng::stream(4, i))
                    .unwrap()
                    .current()[0]
            })
            .collect();
        let (mean, ci) = mean_ci95(&ends);
        let se = ci / 1.96;
        let exact_mean = 2.0 * (-t).exp();
        assert!(
            (mean - exact_mean).abs() < 3.0 * se,
            "{mean} vs {exact_mean}"
        );
        let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (ends.len() - 1) as f64;
        let exact_var = (1.0 - (-2.0 * t).exp()) / 2.0;
        // standard error of a sample variance from normal data
        let se_var = exact_var * (2.0 / (ends.len() - 1) as f64).sqrt();
        assert!(
            (var - exact_var).abs() < 3.0 * se_var,
            "{var} vs {exact_var}"
        );
    }

    #[test]
    fn config_round_trip() {
        let cfg: SddeConfig =
            serde_json::from_str(r#"{"kind":"radial_tanh","kappa":1,"alpha":0.5,"m":1}"#).unwrap();
        let spec = cfg.build().unwrap();
        assert_eq!(spec.name(), "radial_tanh");
        assert_eq!(spec.diffusion_bounds(), Some((2.25, 2.25)));
    }
}
