use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[-r, 0]` with `m` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentGrid {
    pub r: f64,
    pub m: usize,
}

impl SegmentGrid {
    pub fn new(r: f64, m: usize) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) || m == 0 {
            return Err(Error::Parameter(format!(
                "segment grid needs r > 0 and m >= 1, got ({r}, {m})"
            )));
        }
        Ok(Self { r, m })
    }

    pub fn dt(&self) -> f64 {
        self.r / self.m as f64
    }

    pub fn points(&self) -> usize {
        self.m + 1
    }

    /// Lag `s` of grid point `k`, from `-r` at `k = 0` to `0` at `k = m`.
    pub fn lag(&self, k: usize) -> f64 {
        -self.r + k as f64 * self.dt()
    }
}

/// A discretized path piece `x(s)`, `s ∈ [-r, 0]`, in `R^dim`.
///
/// `values` is time-major: point `k` occupies `values[k*dim..(k+1)*dim]`,
/// and the last point is `x(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentState {
    grid: SegmentGrid,
    dim: usize,
    values: Vec<f64>,
}

impl SegmentState {
    pub fn new(grid: SegmentGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter(
                "segment dimension must be positive".into(),
            ));
        }
        if values.len() != grid.points() * dim {
            return Err(Error::Dimension(format!(
                "segment needs {} values, got {}",
                grid.points() * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("segment contains non-finite values".into()));
        }
        Ok(Self { grid, dim, values })
    }

    /// The constant path `x(s) = point`.
    pub fn constant(grid: SegmentGrid, point: &[f64]) -> Result<Self> {
        Self::new(grid, point.len(), point.repeat(grid.points()))
    }

    /// Samples `f(s)` at the grid lags.
    pub fn from_fn(
        grid: SegmentGrid,
        dim: usize,
        mut f: impl FnMut(f64) -> Vec<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.points() * dim);
        for k in 0..grid.points() {
            let p = f(grid.lag(k));
            if p.len() != dim {
                return Err(Error::Dimension(format!(
                    "path value has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            values.extend(p);
        }
        Self::new(grid, dim, values)
    }

    pub fn grid(&self) -> SegmentGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// `x(0)`.
    pub fn current(&self) -> &[f64] {
        self.point(self.grid.m)
    }

    /// `x(-r)`.
    pub fn oldest(&self) -> &[f64] {
        self.point(0)
    }

    /// Linear interpolation at lag `s ∈ [-r, 0]`.
    pub fn eval(&self, s: f64) -> Vec<f64> {
        let pos = ((s + self.grid.r) / self.grid.dt()).clamp(0.0, self.grid.m as f64);
        let k = (pos.floor() as usize).min(self.grid.m - 1);
        let w = pos - k as f64;
        let (a, b) = (self.point(k), self.point(k + 1));
        a.iter().zip(b).map(|(a, b)| a + w * (b - a)).collect()
    }

    /// `sup_s |x(s)|` over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.values.chunks(self.dim).map(norm).fold(0.0, f64::max)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sliding view of the recent path at the integrator step.
///
/// Holds `lag_steps + 1` points covering `[t - r, t]`; drift and diffusion
/// closures read the delayed history through it.
#[derive(Debug, Clone)]
pub struct PathWindow {
    dim: usize,
    dt: f64,
    lag_steps: usize,
    buf: Vec<f64>,
    head: usize,
    time: f64,
}

impl PathWindow {
    /// Refines `seg` by `refine` sub-steps per grid cell, interpolating linearly.
    pub fn from_segment(seg: &SegmentState, refine: usize) -> Self {
        let refine = refine.max(1);
        let grid = seg.grid();
        let lag_steps = grid.m * refine;
        let dim = seg.dim();
        let mut buf = Vec::with_capacity((lag_steps + 1) * dim);
        for k in 0..grid.m {
            let (a, b) = (seg.point(k), seg.point(k + 1));
            for j in 0..refine {
                let w = j as f64 / refine as f64;
                buf.extend(a.iter().zip(b).map(|(a, b)| a + w * (b - a)));
            }
        }
        buf.extend_from_slice(seg.current());
        Self {
            dim,
            dt: grid.dt() / refine as f64,
            lag_steps,
            buf,
            head: lag_steps,
            time: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time elapsed since the window was built.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn delay(&self) -> f64 {
        self.lag_steps as f64 * self.dt
    }

    fn slot(&self, back: usize) -> usize {
        let len = self.lag_steps + 1;
        (self.head + len - back) % len
    }

    /// The point `back` integrator steps ago.
    pub fn back(&self, back: usize) -> &[f64] {
        let s = self.slot(back.min(self.lag_steps));
        &self.buf[s * self.dim..(s + 1) * self.dim]
    }

    /// `x(t)`.
    pub fn current(&self) -> &[f64] {
        self.back(0)
    }

    /// `x(t - r)`.
    pub fn delayed(&self) -> &[f64] {
        self.back(self.lag_steps)
    }

    /// Linear interpolation at lag `s ∈ [-r, 0]`, written into `out`.
    pub fn lag_into(&self, s: f64, out: &mut [f64]) {
        let pos = (-s / self.dt).clamp(0.0, self.lag_steps as f64);
        let k = (pos.floor() as usize).min(self.lag_steps.saturating_sub(1));
        let w = pos - k as f64;
        let (a, b) = (self.back(k), self.back(k + 1));
        for ((o, a), b) in out.iter_mut().zip(a).zip(b) {
            *o = a + w * (b - a);
        }
    }

    pub fn lag(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.lag_into(s, &mut out);
        out
    }

    /// `sup_s |x(t + s)|`.
    pub fn sup_norm(&self) -> f64 {
        self.buf.chunks(self.dim).map(norm).fold(0.0, f64::max)
    }

    /// Appends `x(t + dt)` and drops `x(t - r)`.
    pub fn push(&mut self, point: &[f64]) {
        self.head = (self.head + 1) % (self.lag_steps + 1);
        let s = self.head;
        self.buf[s * self.dim..(s + 1) * self.dim].copy_from_slice(point);
        self.time += self.dt;
    }

    /// Samples the window back onto `grid` (every `refine`-th point).
    pub fn to_segment(&self, grid: SegmentGrid) -> Result<SegmentState> {
        let refine = self.lag_steps / grid.m;
        let mut values = Vec::with_capacity(grid.points() * self.dim);
        for k in 0..grid.points() {
            values.extend_from_slice(self.back((grid.m - k) * refine));
        }
        SegmentState::new(grid, self.dim, values)
    }
}
