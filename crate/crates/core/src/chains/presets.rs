use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::segment::{norm, SegmentState};
use crate::error::{Error, Result};
use crate::rate_kernel::RateFunction;

/// Inputs to the two Lyapunov constructions for radial-drift delay equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum LyapunovPresetSpec {
    /// `U(v) = exp(k |v|^alpha)` outside `M0`, for `alpha ∈ (0, 1]`.
    Exponential {
        alpha: f64,
        kappa: f64,
        m: f64,
        lambda_plus: f64,
        big_lambda: f64,
        n: usize,
    },
    /// `U(v) = |v|^k`, for drift bounded away from zero (`alpha = 0`).
    Polynomial {
        kappa: f64,
        lambda_plus: f64,
        big_lambda: f64,
        n: usize,
        epsilon: f64,
    },
}

/// A Lyapunov function `V(x) = U(x(0))` with its rate function.
#[derive(Clone)]
pub struct LyapunovPreset {
    u: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub phi: RateFunction,
    /// Exponent `k` of `U`.
    pub k: f64,
    /// Radius beyond which `U` has its closed form.
    pub m0: f64,
    /// The additive drift constant is not computable; this says how to get it.
    pub k_hint: String,
}

impl fmt::Debug for LyapunovPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovPreset")
            .field("phi", &self.phi)
            .field("k", &self.k)
            .field("m0", &self.m0)
            .finish_non_exhaustive()
    }
}

impl LyapunovPreset {
    /// `U` as a function of `|v|`.
    pub fn radial(&self, r: f64) -> f64 {
        (self.u)(r.abs())
    }

    pub fn eval_point(&self, v: &[f64]) -> f64 {
        self.radial(norm(v))
    }

    /// `V(x) = U(x(0))`.
    pub fn eval(&self, x: &SegmentState) -> f64 {
        self.eval_point(x.current())
    }
}

const K_HINT: &str =
    "estimate K empirically with the drift checker; the analytic constant is not available";

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

/// Coefficients of `a + b r^2 + c r^4` matching value, slope and curvature
/// `(h0, h1, h2)` at `r = big_r`.
pub fn even_quartic_bridge(h0: f64, h1: f64, h2: f64, big_r: f64) -> (f64, f64, f64) {
    let c = (h2 - h1 / big_r) / (8.0 * big_r * big_r);
    let b = (h1 / big_r - 4.0 * c * big_r * big_r) / 2.0;
    let a = h0 - b * big_r * big_r - c * big_r.powi(4);
    (a, b, c)
}

pub fn lyapunov_presets(spec: &LyapunovPresetSpec) -> Result<LyapunovPreset> {
    match *spec {
        LyapunovPresetSpec::Exponential {
            alpha,
            kappa,
            m,
            lambda_plus,
            big_lambda,
            n,
        } => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::Parameter(format!(
                    "alpha must lie in (0, 1], got {alpha}"
                )));
            }
            positive("kappa", kappa)?;
            positive("m", m)?;
            positive("lambda_plus", lambda_plus)?;
            if !(big_lambda >= 0.0) || n == 0 {
                return Err(Error::Parameter(
                    "Lambda must be nonnegative and n positive".into(),
                ));
            }
            let k = kappa / (2.0 * lambda_plus * alpha);
            let c1 = lambda_plus * (alpha - 2.0) + n as f64 * big_lambda;
            let mut m0 = (2.0 / k).powf(1.0 / alpha).max(m);
            if c1 > 0.0 {
                m0 = m0.max((c1 / kappa).powf(1.0 / alpha));
            }
            let derivs = |r: f64| {
                let h0 = (k * r.powf(alpha)).exp();
                let s = k * alpha * r.powf(alpha - 1.0);
                let h1 = s * h0;
                let h2 = h0 * (s * s + k * alpha * (alpha - 1.0) * r.powf(alpha - 2.0));
                (h0, h1, h2)
            };
            let bridge_at = |r: f64| {
                let (h0, h1, h2) = derivs(r);
                even_quartic_bridge(h0, h1, h2, r)
            };
            // for small alpha the bridge can dip below zero; k alpha M0^alpha >= 4 rules that out
            if bridge_at(m0).0 < 0.0 {
                m0 = m0.max((4.0 / (k * alpha)).powf(1.0 / alpha));
            }
            let (a, b, c) = bridge_at(m0);
            let u = move |r: f64| {
                if r >= m0 {
                    (k * r.powf(alpha)).exp()
                } else {
                    let r2 = r * r;
                    a + b * r2 + c * r2 * r2
                }
            };
            Ok(LyapunovPreset {
                u: Arc::new(u),
                phi: RateFunction::log_power(alpha)?,
                k,
                m0,
                k_hint: K_HINT.into(),
            })
        }
        LyapunovPresetSpec::Polynomial {
            kappa,
            lambda_plus,
            big_lambda,
            n,
            epsilon,
        } => {
            positive("kappa", kappa)?;
            positive("lambda_plus", lambda_plus)?;
            positive("epsilon", epsilon)?;
            let k = 2.0 + (2.0 * kappa - n as f64 * big_lambda) / lambda_plus - epsilon;
            if !(k > 2.0) {
                return Err(Error::Parameter(format!(
                    "polynomial Lyapunov exponent k = {k} must exceed 2 (needs kappa > n Lambda / 2 and small epsilon)"
                )));
            }
            Ok(LyapunovPreset {
                u: Arc::new(move |r: f64| r.powf(k)),
                phi: RateFunction::power((k - 2.0) / k)?,
                k,
                m0: 0.0,
                k_hint: K_HINT.into(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_kernel::{rate_asymptotics, AsymptoticFamily};

    #[test]
    fn polynomial_case_exponent() {
        let p = lyapunov_presets(&LyapunovPresetSpec::Polynomial {
            kappa: 3.0,
            lambda_plus: 1.0,
            big_lambda: 1.0,
            n: 1,
            epsilon: 0.5,
        })
        .unwrap();
        assert_eq!(p.k, 6.5);
        assert!((p.phi.value(2.0) - 2f64.powf(4.5 / 6.5)).abs() < 1e-14);
        assert_eq!(p.radial(2.0), 2f64.powf(6.5));
    }

    #[test]
    fn polynomial_case_needs_strong_drift() {
        let r = lyapunov_presets(&LyapunovPresetSpec::Polynomial {
            kappa: 0.4,
            lambda_plus: 1.0,
            big_lambda: 1.0,
            n: 1,
            epsilon: 0.1,
        });
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    fn exp_case(alpha: f64) -> LyapunovPreset {
        lyapunov_presets(&LyapunovPresetSpec::Exponential {
            alpha,
            kappa: 1.0,
            m: 0.5,
            lambda_plus: 2.25,
            big_lambda: 2.25,
            n: 1,
        })
        .unwrap()
    }

    #[test]
    fn exponential_case_closed_form_and_family() {
        let p = exp_case(1.0);
        let r = p.m0 * 1.5;
        assert!((p.radial(r) - (p.k * r).exp()).abs() <= 1e-12 * p.radial(r));
        assert!(matches!(
            rate_asymptotics(&p.phi, 0.1).unwrap(),
            AsymptoticFamily::Geometric { .. }
        ));
        assert!(p.radial(p.m0) >= std::f64::consts::E.powi(2) * (1.0 - 1e-12));
    }

    #[test]
    fn bridge_is_c2_and_nonnegative() {
        for alpha in [0.1, 0.3, 0.5, 1.0] {
            let p = exp_case(alpha);
            let m0 = p.m0;
            let h = 1e-4 * m0;
            let d1 = |r: f64| (p.radial(r + h) - p.radial(r - h)) / (2.0 * h);
            let d2 = |r: f64| (p.radial(r + h) - 2.0 * p.radial(r) + p.radial(r - h)) / (h * h);
            let scale = p.radial(m0);
            assert!((p.radial(m0 - 1e-12) - p.radial(m0)).abs() < 1e-9 * scale);
            assert!(
                (d1(m0 - 2.0 * h) - d1(m0 + 2.0 * h)).abs() < 1e-2 * scale / m0,
                "alpha {alpha}"
            );
            assert!(
                (d2(m0 - 3.0 * h) - d2(m0 + 3.0 * h)).abs() < 5e-2 * scale / (m0 * m0),
                "alpha {alpha}"
            );
            for i in 0..=100 {
                assert!(p.radial(m0 * i as f64 / 100.0) >= 0.0);
            }
        }
    }

    #[test]
    fn quartic_bridge_matches_derivatives() {
        let (a, b, c) = even_quartic_bridge(3.0, 2.0, 5.0, 1.5);
        let r: f64 = 1.5;
        assert!((a + b * r * r + c * r.powi(4) - 3.0).abs() < 1e-12);
        assert!((2.0 * b * r + 4.0 * c * r.powi(3) - 2.0).abs() < 1e-12);
        assert!((2.0 * b + 12.0 * c * r * r - 5.0).abs() < 1e-12);
    }
}
