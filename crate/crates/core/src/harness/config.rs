use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chains::{
    lyapunov_presets, DecimalState, LyapunovPresetSpec, SddeConfig, SddeModel, SegmentGrid,
    SegmentState,
};
use crate::error::{Error, Result};
use crate::rate_kernel::{RateFunction, RateSpec};
use crate::transport::MetricSpec;

/// Which chain an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `X_{n+1} = (X_n + eps_{n+1}) / 10` in floating point.
    Digit,
    /// The same chain on exact finite decimals.
    ExactDigit,
    /// A delay equation on a segment grid with `grid_points` intervals.
    Sdde {
        equation: SddeConfig,
        grid_points: usize,
        dt: f64,
    },
}

impl ModelSpec {
    pub fn is_discrete(&self) -> bool {
        !matches!(self, Self::Sdde { .. })
    }

    /// `(spec, grid)` for delay equations.
    pub fn sdde(&self) -> Result<(SddeModel, SegmentGrid)> {
        match *self {
            Self::Sdde {
                equation,
                grid_points,
                dt,
            } => {
                let spec = equation.build()?;
                let grid = SegmentGrid::new(spec.delay(), grid_points)?;
                Ok((SddeModel::new(spec, dt), grid))
            }
            _ => Err(Error::Config("not a delay equation".into())),
        }
    }
}

/// Constant initial segment at `value` in every coordinate.
pub fn constant_start(model: &SddeModel, grid: SegmentGrid, value: f64) -> Result<SegmentState> {
    SegmentState::constant(grid, &vec![value; model.spec.dim()])
}

/// Parses a start for the exact decimal chain from its shortest decimal form.
pub fn decimal_start(x: f64) -> Result<DecimalState> {
    x.to_string().parse()
}

/// Reference marginal against which distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Distance to the invariant law (analytic or a long-run surrogate).
    #[default]
    Reference,
    /// Distance between the marginals from two starts, driven by common noise.
    TwoStart,
}

/// What is compared for delay equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// The current value `X(t)(0)`.
    #[default]
    Current,
    /// The whole segment, under the sup-norm metric.
    Segment,
}

/// Rate function and the `epsilon` of the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub phi: RateSpec,
    pub epsilon: f64,
}

/// Where the bound constants come from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default)]
    pub fit: bool,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    /// `V` at the start; enters the bound as `C1 (1 + v0)`.
    #[serde(default)]
    pub v0: f64,
}

/// A full convergence experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSpec,
    pub metric: MetricSpec,
    #[serde(default)]
    pub rate: Option<RateConfig>,
    #[serde(default)]
    pub bound: BoundConfig,
    /// Steps (discrete chains) or times (delay equations), strictly increasing.
    pub schedule: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    /// One start for `reference`, two for `two_start`.
    pub starts: Vec<f64>,
    #[serde(default)]
    pub observable: Observable,
    /// Enumerate all digit outcomes instead of sampling (digit chains, n <= 7).
    #[serde(default)]
    pub enumerate: bool,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_bootstrap() -> usize {
    32
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads TOML when the extension is `.toml`, JSON otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::Config("schedule is empty".into()));
        }
        if self.schedule.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Config(
                "schedule entries must be finite and nonnegative".into(),
            ));
        }
        if self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("schedule must be strictly increasing".into()));
        }
        if self.model.is_discrete() && self.schedule.iter().any(|t| t.fract() != 0.0) {
            return Err(Error::Config(
                "discrete chains need integer steps in the schedule".into(),
            ));
        }
        if self.n_samples < 2 {
            return Err(Error::Config("n_samples must be at least 2".into()));
        }
        let want = match self.mode {
            Mode::Reference => 1,
            Mode::TwoStart => 2,
        };
        if self.starts.len() != want {
            return Err(Error::Config(format!(
                "mode {:?} needs {want} start(s), got {}",
                self.mode,
                self.starts.len()
            )));
        }
        if self.bootstrap < 2 {
            return Err(Error::Config("bootstrap must be at least 2".into()));
        }
        if let ModelSpec::Sdde {
            dt, grid_points, ..
        } = self.model
        {
            if !(dt > 0.0) || grid_points == 0 {
                return Err(Error::Config(
                    "delay equations need dt > 0 and grid_points > 0".into(),
                ));
            }
        }
        if self.bound.fit || self.bound.c1.is_some() || self.bound.c2.is_some() {
            let rate = self
                .rate
                .ok_or_else(|| Error::Config("bound requested without a rate".into()))?;
            rate.phi.build()?;
            if !(rate.epsilon > 0.0 && rate.epsilon < 1.0) {
                return Err(Error::Config(format!(
                    "epsilon must lie in (0, 1), got {}",
                    rate.epsilon
                )));
            }
            if self.bound.c1.is_some() != self.bound.c2.is_some() {
                return Err(Error::Config("give both c1 and c2, or neither".into()));
            }
        }
        Ok(())
    }

    pub fn phi(&self) -> Result<Option<RateFunction>> {
        self.rate.map(|r| r.phi.build()).transpose()
    }
}

/// `V` for the built-in models.
/// A Lyapunov function of the current point.
pub type PointFn = std::sync::Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LyapunovSpec {
    /// `V(x) = |x|` (on `x(0)` for segments).
    Abs,
    /// `V(x) = |x|^2`.
    Square,
    /// `V(x) = U(x(0))` from the radial-drift constructions.
    Preset { preset: LyapunovPresetSpec },
}

impl LyapunovSpec {
    /// `V` as a function of the current point.
    pub fn build(&self) -> Result<PointFn> {
        Ok(match *self {
            Self::Abs => {
                std::sync::Arc::new(|v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt())
            }
            Self::Square => std::sync::Arc::new(|v: &[f64]| v.iter().map(|a| a * a).sum::<f64>()),
            Self::Preset { preset } => {
                let p = lyapunov_presets(&preset)?;
                std::sync::Arc::new(move |v: &[f64]| p.eval_point(v))
            }
        })
    }
}

/// Input of the `drift-check` verb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub model: ModelSpec,
    pub lyapunov: LyapunovSpec,
    pub phi: RateSpec,
    pub k: f64,
    pub states: Vec<f64>,
    pub n_mc: usize,
    pub seed: u64,
    /// Enumerate the ten digits instead of sampling (digit chains).
    #[serde(default)]
    pub enumerate: bool,
    /// Horizon of the continuous-time inequality.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Also check the cumulative inequality at these step counts.
    #[serde(default)]
    pub cumulative: Vec<usize>,
}

/// Input of the `dsmall` verb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsmallConfig {
    pub model: ModelSpec,
    pub metric: MetricSpec,
    #[serde(default)]
    pub lyapunov: Option<LyapunovSpec>,
    /// Level `R` of `{V(x) + V(y) <= R}`.
    #[serde(default)]
    pub level: Option<f64>,
    #[serde(default)]
    pub pairs: Vec<(f64, f64)>,
    /// Draw this many pairs from `[lo, hi]^2` by rejection instead.
    #[serde(default)]
    pub sample_pairs: Option<SampledPairs>,
    /// Time step of the one-step kernel for delay equations.
    #[serde(default)]
    pub t0: Option<f64>,
    pub n_mc: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledPairs {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Deserializes TOML or JSON by extension.
pub fn load_any<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))
    } else {
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIGIT: &str = r#"{
        "model": {"kind": "digit"},
        "metric": {"kind": "euclidean"},
        "schedule": [1, 2, 3],
        "n_samples": 100,
        "seed": 1,
        "mode": "two_start",
        "starts": [0.3, 0.8]
    }"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_json(DIGIT).unwrap();
        assert_eq!(cfg.mode, Mode::TwoStart);
        assert_eq!(cfg.bootstrap, 32);
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_schedules_and_missing_seed() {
        let bad = DIGIT.replace("[1, 2, 3]", "[1, 3, 2]");
        assert!(matches!(
            ExperimentConfig::from_json(&bad),
            Err(Error::Config(_))
        ));
        let frac = DIGIT.replace("[1, 2, 3]", "[1, 2.5]");
        assert!(ExperimentConfig::from_json(&frac).is_err());
        let no_seed = DIGIT.replace("\"seed\": 1,", "");
        assert!(ExperimentConfig::from_json(&no_seed).is_err());
        let one_start = DIGIT.replace("[0.3, 0.8]", "[0.3]");
        assert!(ExperimentConfig::from_json(&one_start).is_err());
    }

    #[test]
    fn toml_sdde() {
        let text = r#"
            schedule = [0.0, 1.0, 2.0]
            n_samples = 10
            seed = 4
            starts = [1.0]
            metric = { kind = "bounded_euclidean", beta = 1.0 }
            [model]
            kind = "sdde"
            grid_points = 10
            dt = 0.1
            equation = { kind = "radial_tanh", kappa = 1.0, alpha = 1.0, m = 1.0 }
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let (model, grid) = cfg.model.sdde().unwrap();
        let x0 = constant_start(&model, grid, 1.0).unwrap();
        assert_eq!(x0.current(), &[1.0]);
    }

    #[test]
    fn decimal_starts_round_trip() {
        assert_eq!(decimal_start(0.3).unwrap().to_string(), "0.3");
        assert_eq!(decimal_start(0.0).unwrap().to_string(), "0");
    }
}
