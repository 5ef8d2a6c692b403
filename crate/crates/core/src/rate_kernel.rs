//! Rate-function calculus.
//!
//! A [`RateFunction`] is a concave increasing `phi` with `phi(0) = 0` that
//! grows to infinity. It fixes the clock of the convergence bound
//!
//! ```text
//! W(t) <= C1 (1 + V(x)) / phi(H^{-1}(C2 t))^(1 - eps),   H(x) = int_1^x du / phi(u)
//! ```
//!
//! Closed forms are used for the built-in families; arbitrary rates go
//! through adaptive quadrature and bracketing bisection. Both routes are
//! public so they can be checked against each other.
//!
//! The module also hosts the Petrov recursion bound: if
//! `a_{n+1} <= a_n (1 - psi(a_n))` with `a_0 <= 1` then `a_n <= g^{-1}(n)`
//! where `g(x) = int_x^1 dt / (t psi(t))`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bisect_increasing, bracket_above, integrate_default};

/// Shared scalar function handle.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `t (ln t)^p` beyond a splice point `s0`, with a concave quadratic
/// `a t + b t^2` on `[0, s0]` matching value and slope at `s0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPowerRate {
    alpha: f64,
    power: f64,
    splice: f64,
    log_splice: f64,
    lin: f64,
    quad: f64,
    h_at_splice: f64,
}

impl LogPowerRate {
    /// Smallest splice point keeping the tail concave and increasing.
    pub fn min_splice(alpha: f64) -> f64 {
        let p = (2.0 * alpha - 2.0) / alpha;
        (2.0_f64).max(1.0 - p).exp()
    }

    fn new(alpha: f64, splice: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "logpower alpha must lie in (0, 1], got {alpha}"
            )));
        }
        let min = Self::min_splice(alpha);
        if !(splice.is_finite() && splice >= min * (1.0 - 1e-12)) {
            return Err(Error::Parameter(format!(
                "logpower splice point {splice} is below the concavity threshold {min}"
            )));
        }
        let p = (2.0 * alpha - 2.0) / alpha;
        let l0 = splice.ln();
        let lin = l0.powf(p - 1.0) * (l0 - p);
        let quad = p * l0.powf(p - 1.0) / splice;
        let mut rate = Self {
            alpha,
            power: p,
            splice,
            log_splice: l0,
            lin,
            quad,
            h_at_splice: 0.0,
        };
        rate.h_at_splice = rate.h_lower(splice);
        Ok(rate)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn splice(&self) -> f64 {
        self.splice
    }

    /// Exponent `p = (2 alpha - 2) / alpha` of the logarithmic factor.
    pub fn log_exponent(&self) -> f64 {
        self.power
    }

    fn value(&self, x: f64) -> f64 {
        if x <= self.splice {
            self.lin * x + self.quad * x * x
        } else {
            x * x.ln().powf(self.power)
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        if x <= self.splice {
            self.lin + 2.0 * self.quad * x
        } else {
            let l = x.ln();
            l.powf(self.power - 1.0) * (l + self.power)
        }
    }

    fn h_lower(&self, x: f64) -> f64 {
        // int_1^x du / (u (a + b u))
        let (a, b) = (self.lin, self.quad);
        (x.ln() - ((a + b * x) / (a + b)).ln()) / a
    }

    fn h(&self, x: f64) -> f64 {
        if x <= self.splice {
            self.h_lower(x)
        } else {
            let e = 1.0 - self.power;
            self.h_at_splice + (x.ln().powf(e) - self.log_splice.powf(e)) / e
        }
    }

    /// `ln H^{-1}(y)`.
    fn log_h_inverse(&self, y: f64) -> f64 {
        if y <= self.h_at_splice {
            let (a, b) = (self.lin, self.quad);
            let c = (a * y).exp() / (a + b);
            (c * a / (1.0 - c * b)).ln()
        } else {
            let e = 1.0 - self.power;
            (self.log_splice.powf(e) + e * (y - self.h_at_splice)).powf(1.0 / e)
        }
    }

    fn log_value_at_log(&self, log_x: f64) -> f64 {
        if log_x <= self.log_splice {
            self.value(log_x.exp()).ln()
        } else {
            log_x + self.power * log_x.ln()
        }
    }

    fn inverse(&self, y: f64) -> Result<f64> {
        let at_splice = self.value(self.splice);
        if y <= at_splice {
            let (a, b) = (self.lin, self.quad);
            return Ok(2.0 * y / (a + (a * a + 4.0 * b * y).max(0.0).sqrt()));
        }
        // ln y = L + p ln L, increasing in L beyond the splice
        let target = y.ln();
        let f = |l: f64| Ok(l + self.power * l.ln());
        let (lo, hi) = bracket_above(f, target, self.log_splice, 2.0)?;
        let l = bisect_increasing(f, target, lo, hi, |lo, hi, r| {
            r.abs() <= 1e-15 * target.abs().max(1.0) || hi - lo <= 1e-15 * hi
        })?;
        Ok(l.exp())
    }
}

/// A concave rate function on `[0, inf)`.
#[derive(Clone)]
pub enum RateFunction {
    /// `phi(x) = lambda x`.
    Linear { lambda: f64 },
    /// `phi(x) = x^gamma`, `0 < gamma < 1`.
    Power { gamma: f64 },
    /// `phi(x) = x (ln x)^((2 alpha - 2) / alpha)` beyond a splice point.
    LogPower(LogPowerRate),
    /// User supplied `phi` and `phi'`.
    Custom { phi: ScalarFn, dphi: ScalarFn },
}

impl fmt::Debug for RateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { lambda } => write!(f, "Linear({lambda})"),
            Self::Power { gamma } => write!(f, "Power({gamma})"),
            Self::LogPower(r) => write!(f, "LogPower(alpha={}, splice={})", r.alpha, r.splice),
            Self::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl RateFunction {
    pub fn linear(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Parameter(format!(
                "linear rate needs lambda > 0, got {lambda}"
            )));
        }
        Ok(Self::Linear { lambda })
    }

    pub fn power(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Parameter(format!(
                "power rate needs gamma in (0, 1), got {gamma}"
            )));
        }
        Ok(Self::Power { gamma })
    }

    /// Log-power rate with the default splice `max(e^2, e^(1-p))`.
    pub fn log_power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!(
                "logpower alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Self::log_power_with_splice(alpha, LogPowerRate::min_splice(alpha))
    }

    pub fn log_power_with_splice(alpha: f64, splice: f64) -> Result<Self> {
        Ok(Self::LogPower(LogPowerRate::new(alpha, splice)?))
    }

    /// Wraps a user rate. Only `phi(0) = 0` and positivity at 1 are checked
    /// here; use [`RateFunction::check_shape`] for concavity.
    pub fn custom<F, D>(phi: F, dphi: D) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let at0 = phi(0.0);
        if at0.abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "custom rate must vanish at 0, got phi(0) = {at0}"
            )));
        }
        if !(phi(1.0) > 0.0) {
            return Err(Error::Parameter("custom rate must be positive at 1".into()));
        }
        Ok(Self::Custom {
            phi: Arc::new(phi),
            dphi: Arc::new(dphi),
        })
    }

    pub fn has_closed_form(&self) -> bool {
        !matches!(self, Self::Custom { .. })
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Linear { lambda } => lambda * x,
            Self::Power { gamma } => x.powf(*gamma),
            Self::LogPower(r) => r.value(x),
            Self::Custom { phi, .. } => phi(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Self::Linear { lambda } => *lambda,
            Self::Power { gamma } => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    gamma * x.powf(gamma - 1.0)
                }
            }
            Self::LogPower(r) => r.derivative(x),
            Self::Custom { dphi, .. } => dphi(x),
        }
    }

    /// `phi^{-1}(y)` for `y >= 0`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("phi^-1 needs y >= 0, got {y}")));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        match self {
            Self::Linear { lambda } => Ok(y / lambda),
            Self::Power { gamma } => Ok(y.powf(1.0 / gamma)),
            Self::LogPower(r) => r.inverse(y),
            Self::Custom { phi, .. } => {
                let f = |x: f64| Ok(phi(x));
                let (lo, hi) = if phi(1.0) >= y {
                    (0.0, 1.0)
                } else {
                    bracket_above(f, y, 1.0, 2.0)?
                };
                bisect_increasing(f, y, lo, hi, |lo, hi, r| {
                    r.abs() <= 1e-13 * y.max(1.0) || hi - lo <= 1e-15 * hi
                })
            }
        }
    }

    /// Checks `phi(0) = 0`, strict increase, concavity on every grid
    /// triple and nonincreasing `phi'` on `grid` (sorted, nonnegative).
    pub fn check_shape(&self, grid: &[f64]) -> Result<()> {
        if self.value(0.0).abs() > 1e-12 {
            return Err(Error::Parameter("rate does not vanish at 0".into()));
        }
        let vals: Vec<f64> = grid.iter().map(|&x| self.value(x)).collect();
        for w in vals.windows(2).zip(grid.windows(2)) {
            if w.1[1] > w.1[0] && w.0[1] <= w.0[0] {
                return Err(Error::Parameter(format!(
                    "rate not strictly increasing near {}",
                    w.1[1]
                )));
            }
        }
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                for k in j + 1..grid.len() {
                    let (a, b, c) = (grid[i], grid[j], grid[k]);
                    if !(a < b && b < c) {
                        continue;
                    }
                    let chord = vals[i] + (b - a) * (vals[k] - vals[i]) / (c - a);
                    if vals[j] < chord - 1e-10 * chord.abs().max(1.0) {
                        return Err(Error::Parameter(format!(
                            "rate not concave on ({a}, {b}, {c})"
                        )));
                    }
                }
            }
        }
        let ders: Vec<f64> = grid
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| self.derivative(x))
            .collect();
        for w in ders.windows(2) {
            if w[1] > w[0] * (1.0 + 1e-10) + 1e-14 {
                return Err(Error::Parameter("rate derivative increases".into()));
            }
        }
        Ok(())
    }
}

/// Config fragment for the built-in rate families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RateSpec {
    Linear {
        lambda: f64,
    },
    Power {
        gamma: f64,
    },
    #[serde(rename = "logpower")]
    LogPower {
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        splice: Option<f64>,
    },
}

impl RateSpec {
    pub fn build(&self) -> Result<RateFunction> {
        match *self {
            Self::Linear { lambda } => RateFunction::linear(lambda),
            Self::Power { gamma } => RateFunction::power(gamma),
            Self::LogPower {
                alpha,
                splice: None,
            } => RateFunction::log_power(alpha),
            Self::LogPower {
                alpha,
                splice: Some(s),
            } => RateFunction::log_power_with_splice(alpha, s),
        }
    }
}

impl std::str::FromStr for RateSpec {
    type Err = Error;

    /// Parses `linear:1`, `power:0.5` or `logpower:0.6`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("rate spec `{s}` must look like kind:value")))?;
        let v: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad number in rate spec `{s}`")))?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Self::Linear { lambda: v }),
            "power" => Ok(Self::Power { gamma: v }),
            "logpower" => Ok(Self::LogPower {
                alpha: v,
                splice: None,
            }),
            other => Err(Error::Parse(format!("unknown rate kind `{other}`"))),
        }
    }
}

/// `H_phi(x) = int_1^x du / phi(u)`, closed form when available.
pub fn h_transform(phi: &RateFunction, x: f64) -> Result<f64> {
    if !(x >= 1.0) {
        return Err(Error::Domain(format!("H is defined for x >= 1, got {x}")));
    }
    match phi {
        RateFunction::Linear { lambda } => Ok(x.ln() / lambda),
        RateFunction::Power { gamma } => {
            let e = 1.0 - gamma;
            Ok((e * x.ln()).exp_m1() / e)
        }
        RateFunction::LogPower(r) => Ok(r.h(x)),
        RateFunction::Custom { .. } => h_transform_quadrature(phi, x),
    }
}

/// `H_phi(x)` by adaptive quadrature in `s = ln u`, for any rate.
pub fn h_transform_quadrature(phi: &RateFunction, x: f64) -> Result<f64> {
    if !(x >= 1.0) {
        return Err(Error::Domain(format!("H is defined for x >= 1, got {x}")));
    }
    if !x.is_finite() {
        return Err(Error::Domain("H needs a finite argument".into()));
    }
    integrate_default(|s| s.exp() / phi.value(s.exp()), 0.0, x.ln())
}

/// `H_phi^{-1}(y)` for `y >= 0`, closed form when available.
pub fn h_inverse(phi: &RateFunction, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("H^-1 needs y >= 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    match phi {
        RateFunction::Linear { lambda } => Ok((lambda * y).exp()),
        RateFunction::Power { gamma } => {
            let e = 1.0 - gamma;
            Ok(((1.0 / e) * (e * y).ln_1p()).exp())
        }
        RateFunction::LogPower(r) => Ok(r.log_h_inverse(y).exp()),
        RateFunction::Custom { .. } => h_inverse_bisection(phi, y),
    }
}

/// `H_phi^{-1}(y)` by exponential bracketing and bisection on `ln x`
/// over the quadrature route.
pub fn h_inverse_bisection(phi: &RateFunction, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("H^-1 needs y >= 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    let h_of_log = |s: f64| integrate_default(|u| u.exp() / phi.value(u.exp()), 0.0, s);
    let tol = 1e-10 * y.max(1.0);
    let (lo, hi) = bracket_above(h_of_log, y, 0.5, 2.0)
        .map_err(|_| Error::NonConvergence(format!("H^-1({y}) could not be bracketed")))?;
    let lo = if h_of_log(lo)? > y { 0.0 } else { lo };
    let s = bisect_increasing(h_of_log, y, lo, hi, |lo, hi, r| {
        r.abs() <= tol || hi - lo <= 1e-15 * hi
    })?;
    let x = s.exp();
    let residual = (h_transform_quadrature(phi, x)? - y).abs();
    if residual > 1e-9 * y.max(1.0) {
        return Err(Error::NonConvergence(format!(
            "H^-1({y}) residual {residual:e}"
        )));
    }
    Ok(x)
}

/// `ln phi(H^{-1}(y))`, finite even when `H^{-1}(y)` overflows.
pub fn log_phi_of_h_inverse(phi: &RateFunction, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("H^-1 needs y >= 0, got {y}")));
    }
    match phi {
        RateFunction::Linear { lambda } => Ok(lambda.ln() + lambda * y),
        RateFunction::Power { gamma } => {
            let e = 1.0 - gamma;
            Ok((gamma / e) * (e * y).ln_1p())
        }
        RateFunction::LogPower(r) => Ok(r.log_value_at_log(r.log_h_inverse(y))),
        RateFunction::Custom { phi: f, .. } => Ok(f(h_inverse(phi, y)?).ln()),
    }
}

/// Constants of the convergence bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBoundParams {
    pub c1: f64,
    pub c2: f64,
    pub epsilon: f64,
    pub v_of_x: f64,
}

impl RateBoundParams {
    pub fn new(c1: f64, c2: f64, epsilon: f64, v_of_x: f64) -> Result<Self> {
        let p = Self {
            c1,
            c2,
            epsilon,
            v_of_x,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1.is_finite() && self.c2 > 0.0 && self.c2.is_finite()) {
            return Err(Error::Parameter(format!(
                "C1 and C2 must be positive and finite, got ({}, {})",
                self.c1, self.c2
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Parameter(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.v_of_x >= 0.0 && self.v_of_x.is_finite()) {
            return Err(Error::Parameter(format!(
                "V(x) must be finite and >= 0, got {}",
                self.v_of_x
            )));
        }
        Ok(())
    }
}

/// `C1 (1 + V(x)) phi(H^{-1}(C2 t))^{-(1 - eps)}`.
pub fn rate_bound(phi: &RateFunction, params: &RateBoundParams, t: f64) -> Result<f64> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("rate bound needs t >= 0, got {t}")));
    }
    let log_phi = log_phi_of_h_inverse(phi, params.c2 * t)?;
    Ok(params.c1 * (1.0 + params.v_of_x) * (-(1.0 - params.epsilon) * log_phi).exp())
}

/// Shape of `phi(H^{-1}(C2 t))^{-(1 - eps)}` for large `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum AsymptoticFamily {
    /// `exp(-rate * C2 t)`.
    Geometric { rate: f64 },
    /// `t^exponent`, `exponent < 0`.
    Polynomial { exponent: f64 },
    /// `exp(-c t^exponent)`, `0 < exponent < 1`.
    Subexponential { exponent: f64 },
}

impl AsymptoticFamily {
    pub fn exponent(&self) -> f64 {
        match *self {
            Self::Geometric { rate } => rate,
            Self::Polynomial { exponent } | Self::Subexponential { exponent } => exponent,
        }
    }
}

pub fn rate_asymptotics(phi: &RateFunction, epsilon: f64) -> Result<AsymptoticFamily> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Parameter(format!(
            "epsilon must lie in [0, 1), got {epsilon}"
        )));
    }
    match phi {
        RateFunction::Linear { lambda } => Ok(AsymptoticFamily::Geometric {
            rate: lambda * (1.0 - epsilon),
        }),
        RateFunction::Power { gamma } => Ok(AsymptoticFamily::Polynomial {
            exponent: -gamma * (1.0 - epsilon) / (1.0 - gamma),
        }),
        RateFunction::LogPower(r) if r.alpha == 1.0 => Ok(AsymptoticFamily::Geometric {
            rate: r.lin * (1.0 - epsilon),
        }),
        RateFunction::LogPower(r) => Ok(AsymptoticFamily::Subexponential {
            exponent: r.alpha / (2.0 - r.alpha),
        }),
        RateFunction::Custom { .. } => Err(Error::Unsupported(
            "no asymptotic catalog for custom rates".into(),
        )),
    }
}

/// A continuous increasing `psi: [0, inf) -> [0, 1]` with `psi(0) = 0`.
#[derive(Clone)]
pub struct PsiFunction {
    name: String,
    f: ScalarFn,
}

impl fmt::Debug for PsiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Psi({})", self.name)
    }
}

impl PsiFunction {
    /// Wraps `f`, checking the shape on a grid of `(0, 1]`.
    pub fn new<F>(name: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let name = name.into();
        if f(0.0) != 0.0 {
            return Err(Error::Parameter(format!("psi `{name}` must vanish at 0")));
        }
        let mut prev = 0.0;
        for i in 1..=200 {
            let t = i as f64 / 200.0;
            let v = f(t);
            if !(v > 0.0 && v <= 1.0) || v < prev {
                return Err(Error::Parameter(format!(
                    "psi `{name}` must be positive, increasing and at most 1 on (0, 1] (psi({t}) = {v})"
                )));
            }
            prev = v;
        }
        Ok(Self {
            name,
            f: Arc::new(f),
        })
    }

    /// `psi(t) = t`.
    pub fn linear() -> Self {
        Self::new("linear", |t| t).expect("valid psi")
    }

    /// `psi(t) = t^2`.
    pub fn square() -> Self {
        Self::new("square", |t| t * t).expect("valid psi")
    }

    /// `psi(t) = min(1, 2t)`.
    pub fn capped_double() -> Self {
        Self::new("capped_double", |t| (2.0 * t).min(1.0)).expect("valid psi")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "linear" | "t" => Ok(Self::linear()),
            "square" | "t2" => Ok(Self::square()),
            "capped_double" | "min2t" => Ok(Self::capped_double()),
            other => Err(Error::Parse(format!(
                "unknown psi `{other}` (linear, square, capped_double)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }
}

/// Smallest argument accepted by [`petrov_g`].
pub const PETROV_MIN_X: f64 = 1e-12;
const PETROV_OVERFLOW_GUARD: f64 = 1e300;

fn petrov_integrand(psi: &PsiFunction) -> impl Fn(f64) -> f64 + '_ {
    // dt / (t psi(t)) with t = e^s
    move |s: f64| 1.0 / psi.eval(s.exp())
}

/// `g(x) = int_x^1 dt / (t psi(t))` for `x` in `[1e-12, 1]`.
pub fn petrov_g(psi: &PsiFunction, x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::Domain(format!("g is defined on (0, 1], got {x}")));
    }
    if x < PETROV_MIN_X {
        return Err(Error::Domain(format!(
            "g is not evaluated below {PETROV_MIN_X}, got {x}"
        )));
    }
    let v = integrate_default(petrov_integrand(psi), x.ln(), 0.0)?;
    if !(v.is_finite() && v < PETROV_OVERFLOW_GUARD) {
        return Err(Error::Divergent(format!(
            "g({x}) exceeds the overflow guard"
        )));
    }
    Ok(v)
}

/// `g^{-1}(y)` by bisection on `ln x`.
pub fn petrov_g_inverse(psi: &PsiFunction, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("g^-1 needs y >= 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    let lo = PETROV_MIN_X.ln();
    let neg_g = |s: f64| petrov_g(psi, s.exp().min(1.0)).map(|v| -v);
    if -neg_g(lo)? < y {
        return Err(Error::Domain(format!(
            "g^-1({y}) lies below {PETROV_MIN_X}"
        )));
    }
    let tol = 1e-12 * y.max(1.0);
    let s = bisect_increasing(neg_g, -y, lo, 0.0, |lo, hi, r| {
        r.abs() <= tol || hi - lo <= 1e-16
    })?;
    Ok(s.exp())
}

/// Successive values of `g^{-1}(n)` for `n = 0, 1, ...`, evaluated by
/// safeguarded Newton steps in `ln x` with incremental quadrature.
struct PetrovInverter<'a> {
    psi: &'a PsiFunction,
    log_x: f64,
    g: f64,
}

impl<'a> PetrovInverter<'a> {
    fn new(psi: &'a PsiFunction) -> Self {
        Self {
            psi,
            log_x: 0.0,
            g: 0.0,
        }
    }

    fn move_to(&mut self, log_x: f64) -> Result<()> {
        let inc = integrate_default(petrov_integrand(self.psi), log_x, self.log_x)?;
        self.g += inc;
        self.log_x = log_x;
        if !(self.g.is_finite() && self.g < PETROV_OVERFLOW_GUARD) {
            return Err(Error::Divergent(format!(
                "g(e^{log_x}) exceeds the overflow guard"
            )));
        }
        Ok(())
    }

    /// Requires `y >= current g`.
    fn solve(&mut self, y: f64) -> Result<f64> {
        let floor = PETROV_MIN_X.ln();
        let tol = 1e-12 * y.max(1.0);
        let mut lo = f64::NEG_INFINITY;
        let mut hi = self.log_x;
        for _ in 0..200 {
            let r = self.g - y;
            if r.abs() <= tol {
                return Ok(self.log_x.exp());
            }
            if r < 0.0 {
                hi = self.log_x;
            } else {
                lo = self.log_x;
            }
            // g decreasing in ln x with slope -1/psi
            let mut cand = self.log_x + r * self.psi.eval(self.log_x.exp());
            if !(cand > lo && cand < hi) {
                cand = if lo.is_finite() {
                    0.5 * (lo + hi)
                } else {
                    hi - 2.0 * (hi - cand).abs().max(1e-3)
                };
            }
            if cand < floor {
                if self.log_x <= floor {
                    return Err(Error::Domain(format!(
                        "g^-1({y}) lies below {PETROV_MIN_X}"
                    )));
                }
                cand = floor.max(lo);
            }
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                return Ok(self.log_x.exp());
            }
            self.move_to(cand)?;
        }
        Err(Error::NonConvergence(format!("g^-1({y}) did not converge")))
    }
}

/// `g^{-1}(n)` for `n = 0..=n_max`.
pub fn petrov_bounds(psi: &PsiFunction, n_max: usize) -> Result<Vec<f64>> {
    let mut inv = PetrovInverter::new(psi);
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    for n in 1..=n_max {
        out.push(inv.solve(n as f64)?);
    }
    Ok(out)
}

/// One step of the extremal Petrov recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PetrovRow {
    pub n: usize,
    pub iterate: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PetrovReport {
    pub psi: String,
    pub a0: f64,
    pub rows: Vec<PetrovRow>,
    pub passed: bool,
    pub worst_margin: f64,
}

/// Slack allowed in `a_n <= g^{-1}(n)`.
pub const PETROV_SLACK: f64 = 1e-9;

/// Iterates `a_{n+1} = a_n (1 - psi(a_n))` and checks `a_n <= g^{-1}(n)`.
pub fn petrov_bound_check(psi: &PsiFunction, a0: f64, n_max: usize) -> Result<PetrovReport> {
    if !(0.0..=1.0).contains(&a0) {
        return Err(Error::Domain(format!("a0 must lie in [0, 1], got {a0}")));
    }
    if n_max < 1 {
        return Err(Error::Parameter("n_max must be at least 1".into()));
    }
    let bounds = petrov_bounds(psi, n_max)?;
    Ok(petrov_report_with_bounds(psi, a0, &bounds))
}

/// Same as [`petrov_bound_check`] with precomputed `g^{-1}(n)` values.
pub fn petrov_report_with_bounds(psi: &PsiFunction, a0: f64, bounds: &[f64]) -> PetrovReport {
    let mut a = a0;
    let mut rows = Vec::with_capacity(bounds.len());
    for (n, &bound) in bounds.iter().enumerate() {
        rows.push(PetrovRow {
            n,
            iterate: a,
            bound,
            margin: bound - a,
        });
        a *= 1.0 - psi.eval(a);
    }
    let worst_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    PetrovReport {
        psi: psi.name().to_string(),
        a0,
        passed: rows.iter().all(|r| r.iterate <= r.bound + PETROV_SLACK),
        worst_margin,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Composite Simpson on a log grid, independent of the library integrator.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn h_transform_examples() {
        let lin = RateFunction::linear(1.0).unwrap();
        assert_eq!(h_transform(&lin, 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            h_transform(&lin, std::f64::consts::E).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let oracle = simpson(|u| 1.0 / u, 1.0, std::f64::consts::E, 2000);
        assert_relative_eq!(oracle, 1.0, epsilon = 1e-12);

        let pow = RateFunction::power(0.5).unwrap();
        assert_relative_eq!(h_transform(&pow, 4.0).unwrap(), 2.0, epsilon = 1e-15);
        let oracle = simpson(|u| u.powf(-0.5), 1.0, 4.0, 2000);
        assert_relative_eq!(oracle, 2.0, epsilon = 1e-11);
    }

    #[test]
    fn h_transform_rejects_below_one() {
        let lin = RateFunction::linear(1.0).unwrap();
        assert!(matches!(h_transform(&lin, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn h_inverse_examples() {
        let lin = RateFunction::linear(1.0).unwrap();
        assert_relative_eq!(
            h_inverse(&lin, 1.0).unwrap(),
            std::f64::consts::E,
            epsilon = 1e-15
        );
        let pow = RateFunction::power(0.5).unwrap();
        assert_eq!(h_inverse(&pow, 2.0).unwrap(), 4.0);
        for phi in [lin, pow, RateFunction::log_power(0.6).unwrap()] {
            assert_eq!(h_inverse(&phi, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn rate_bound_examples() {
        let lin = RateFunction::linear(1.0).unwrap();
        let p = RateBoundParams::new(1.0, 1.0, 1e-12, 0.0).unwrap();
        for n in 0..6 {
            assert_relative_eq!(
                rate_bound(&lin, &p, n as f64).unwrap(),
                (-(n as f64)).exp(),
                max_relative = 1e-10
            );
        }
        let pow = RateFunction::power(0.5).unwrap();
        let p = RateBoundParams::new(1.0, 1.0, 0.5, 0.0).unwrap();
        assert_relative_eq!(
            rate_bound(&pow, &p, 2.0).unwrap(),
            2f64.powf(-0.5),
            max_relative = 1e-14
        );
        let p = RateBoundParams::new(1.0, 3.0, 0.25, 1.0).unwrap();
        let phi = RateFunction::log_power(0.5).unwrap();
        assert_relative_eq!(
            rate_bound(&phi, &p, 0.0).unwrap(),
            2.0 / phi.value(1.0).powf(0.75),
            max_relative = 1e-13
        );
    }

    #[test]
    fn rate_bound_params_validation() {
        assert!(RateBoundParams::new(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(RateBoundParams::new(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(RateBoundParams::new(-1.0, 1.0, 0.5, 0.0).is_err());
        assert!(RateBoundParams::new(1.0, 1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn asymptotic_catalog() {
        let pow = RateFunction::power(0.5).unwrap();
        assert_eq!(
            rate_asymptotics(&pow, 0.0).unwrap(),
            AsymptoticFamily::Polynomial { exponent: -1.0 }
        );
        let lin = RateFunction::linear(2.0).unwrap();
        assert!(matches!(
            rate_asymptotics(&lin, 0.1).unwrap(),
            AsymptoticFamily::Geometric { .. }
        ));
        let lp1 = RateFunction::log_power(1.0).unwrap();
        assert!(matches!(
            rate_asymptotics(&lp1, 0.1).unwrap(),
            AsymptoticFamily::Geometric { .. }
        ));
        let lp = RateFunction::log_power(0.5).unwrap();
        assert_eq!(
            rate_asymptotics(&lp, 0.1).unwrap(),
            AsymptoticFamily::Subexponential {
                exponent: 1.0 / 3.0
            }
        );
        let custom = RateFunction::custom(|x| x, |_| 1.0).unwrap();
        assert!(matches!(
            rate_asymptotics(&custom, 0.1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn log_power_alpha_one_is_identity() {
        let phi = RateFunction::log_power(1.0).unwrap();
        for x in [0.0, 0.5, 3.0, 100.0, 1e6] {
            assert_relative_eq!(phi.value(x), x, max_relative = 1e-15);
        }
    }

    #[test]
    fn log_power_is_c1_at_splice() {
        for alpha in [0.2, 0.5, 2.0 / 3.0, 0.9] {
            let RateFunction::LogPower(r) = RateFunction::log_power(alpha).unwrap() else {
                unreachable!()
            };
            let s = r.splice();
            let tail = |x: f64| x * x.ln().powf(r.log_exponent());
            assert_relative_eq!(r.value(s), tail(s), max_relative = 1e-13);
            let h = 1e-6 * s;
            let slope = (tail(s + h) - tail(s)) / h;
            assert_relative_eq!(r.derivative(s), slope, max_relative = 1e-4);
        }
    }

    #[test]
    fn log_power_splice_validation() {
        // for alpha = 0.5 the tail is concave only beyond e^3
        assert!(RateFunction::log_power_with_splice(0.5, 2f64.exp()).is_err());
        assert!(RateFunction::log_power_with_splice(0.5, 3f64.exp()).is_ok());
        assert!(RateFunction::log_power(0.0).is_err());
    }

    #[test]
    fn built_in_shapes_are_concave() {
        let grid: Vec<f64> = (0..40).map(|i| (i as f64 * 0.35).exp() - 1.0).collect();
        for phi in [
            RateFunction::linear(0.7).unwrap(),
            RateFunction::power(0.3).unwrap(),
            RateFunction::log_power(0.3).unwrap(),
            RateFunction::log_power(0.8).unwrap(),
        ] {
            phi.check_shape(&grid).unwrap();
        }
        let convex = RateFunction::custom(|x| x * x, |x| 2.0 * x).unwrap();
        assert!(convex.check_shape(&grid).is_err());
    }

    #[test]
    fn phi_inverse_round_trip() {
        for phi in [
            RateFunction::linear(0.7).unwrap(),
            RateFunction::power(0.3).unwrap(),
            RateFunction::log_power(0.4).unwrap(),
            RateFunction::custom(|x| (1.0 + x).ln(), |x| 1.0 / (1.0 + x)).unwrap(),
        ] {
            for x in [0.01, 1.0, 7.0, 50.0, 1e4] {
                let y = phi.value(x);
                assert_relative_eq!(phi.inverse(y).unwrap(), x, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn log_power_closed_form_matches_quadrature() {
        let phi = RateFunction::log_power(0.6).unwrap();
        for x in [1.5, 5.0, 20.0, 1e3, 1e8] {
            let a = h_transform(&phi, x).unwrap();
            let b = h_transform_quadrature(&phi, x).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
        for y in [0.1, 1.0, 10.0, 40.0] {
            let a = h_inverse(&phi, y).unwrap();
            let b = h_inverse_bisection(&phi, y).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-8);
        }
    }

    #[test]
    fn custom_rate_uses_numeric_route() {
        let phi = RateFunction::custom(|x| 2.0 * x, |_| 2.0).unwrap();
        assert_relative_eq!(
            h_transform(&phi, 10.0).unwrap(),
            10f64.ln() / 2.0,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            h_inverse(&phi, 1.5).unwrap(),
            3f64.exp(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn rate_spec_parsing() {
        let spec: RateSpec = "power:0.5".parse().unwrap();
        assert_eq!(spec, RateSpec::Power { gamma: 0.5 });
        let spec: RateSpec = serde_json::from_str(r#"{"kind": "logpower", "alpha": 0.6}"#).unwrap();
        assert_eq!(
            spec,
            RateSpec::LogPower {
                alpha: 0.6,
                splice: None
            }
        );
        let spec: RateSpec = serde_json::from_str(r#"{"kind": "linear", "lambda": 1.0}"#).unwrap();
        assert!(matches!(spec.build().unwrap(), RateFunction::Linear { .. }));
        assert!("cubic:1".parse::<RateSpec>().is_err());
    }

    #[test]
    fn petrov_g_examples() {
        let lin = PsiFunction::linear();
        assert_eq!(petrov_g(&lin, 1.0).unwrap(), 0.0);
        assert_relative_eq!(petrov_g(&lin, 0.5).unwrap(), 1.0, max_relative = 1e-10);
        // int_x^1 t^-3 dt = (1/x^2 - 1)/2 = 1.5 at x = 1/2
        let oracle = simpson(|t| t.powi(-3), 0.5, 1.0, 4000);
        assert_relative_eq!(oracle, 1.5, max_relative = 1e-12);
        assert_relative_eq!(
            petrov_g(&PsiFunction::square(), 0.5).unwrap(),
            oracle,
            max_relative = 1e-10
        );
    }

    #[test]
    fn petrov_g_domain() {
        let lin = PsiFunction::linear();
        assert!(petrov_g(&lin, 0.0).is_err());
        assert!(petrov_g(&lin, 1.5).is_err());
        assert!(petrov_g(&lin, 1e-13).is_err());
    }

    #[test]
    fn petrov_inverse_matches_closed_form() {
        let lin = PsiFunction::linear();
        let bounds = petrov_bounds(&lin, 50).unwrap();
        for (n, b) in bounds.iter().enumerate() {
            assert_relative_eq!(*b, 1.0 / (n as f64 + 1.0), max_relative = 1e-10);
        }
        assert_relative_eq!(
            petrov_g_inverse(&lin, 3.0).unwrap(),
            0.25,
            max_relative = 1e-10
        );
    }

    #[test]
    fn petrov_check_examples() {
        let lin = PsiFunction::linear();
        let r = petrov_bound_check(&lin, 1.0, 5).unwrap();
        assert!(r.passed);
        assert_eq!(r.rows[1].iterate, 0.0);
        assert_relative_eq!(r.rows[1].bound, 0.5, max_relative = 1e-10);

        let r = petrov_bound_check(&lin, 0.5, 1).unwrap();
        assert_eq!(r.rows[1].iterate, 0.25);
        assert!(r.passed);

        let r = petrov_bound_check(&PsiFunction::square(), 0.0, 20).unwrap();
        assert!(r.rows.iter().all(|row| row.iterate == 0.0));
        assert!(r.passed);
    }

    #[test]
    fn psi_validation() {
        assert!(PsiFunction::new("bad", |t| t + 0.1).is_err());
        assert!(PsiFunction::new("too big", |t| 2.0 * t).is_err());
        assert!(PsiFunction::by_name("nope").is_err());
    }
}
