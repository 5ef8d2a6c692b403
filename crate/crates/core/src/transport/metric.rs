use serde::{Deserialize, Serialize};

use crate::chains::{DecimalState, SegmentGrid, SegmentState};

/// A (semi)metric or transport cost on states of type `S`.
pub trait Metric<S: ?Sized> {
    fn distance(&self, x: &S, y: &S) -> f64;
}

impl<S: ?Sized, M: Metric<S> + ?Sized> Metric<S> for &M {
    fn distance(&self, x: &S, y: &S) -> f64 {
        (**self).distance(x, y)
    }
}

/// Wraps a closure as a cost.
#[derive(Clone, Copy)]
pub struct CostFn<F>(pub F);

impl<S: ?Sized, F: Fn(&S, &S) -> f64> Metric<S> for CostFn<F> {
    fn distance(&self, x: &S, y: &S) -> f64 {
        (self.0)(x, y)
    }
}

/// `d_0(x, y) = 1{x != y}` on any comparable state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DiscreteMetric;

impl<S: PartialEq + ?Sized> Metric<S> for DiscreteMetric {
    fn distance(&self, x: &S, y: &S) -> f64 {
        if x == y {
            0.0
        } else {
            1.0
        }
    }
}

/// Unbounded Euclidean distance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Euclidean;

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

impl Metric<f64> for Euclidean {
    fn distance(&self, x: &f64, y: &f64) -> f64 {
        (x - y).abs()
    }
}

impl Metric<[f64]> for Euclidean {
    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        euclid(x, y)
    }
}

impl Metric<Vec<f64>> for Euclidean {
    fn distance(&self, x: &Vec<f64>, y: &Vec<f64>) -> f64 {
        euclid(x, y)
    }
}

impl Metric<DecimalState> for Euclidean {
    fn distance(&self, x: &DecimalState, y: &DecimalState) -> f64 {
        x.abs_diff(y)
    }
}

/// Metrics bounded by one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundedMetric {
    /// `1{x != y}`.
    Discrete,
    /// `1 ∧ |x - y| / beta` on `R^dim`.
    BoundedEuclidean { beta: f64, dim: usize },
    /// `1 ∧ sup_s |x(s) - y(s)| / beta` on path segments.
    BoundedSupSegment { beta: f64, grid: SegmentGrid },
}

impl BoundedMetric {
    pub fn bounded_euclidean(beta: f64, dim: usize) -> crate::Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) || dim == 0 {
            return Err(crate::Error::Parameter(format!(
                "bounded Euclidean metric needs beta > 0 and dim >= 1, got ({beta}, {dim})"
            )));
        }
        Ok(Self::BoundedEuclidean { beta, dim })
    }

    pub fn bounded_sup_segment(beta: f64, grid: SegmentGrid) -> crate::Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(crate::Error::Parameter(format!(
                "segment metric needs beta > 0, got {beta}"
            )));
        }
        Ok(Self::BoundedSupSegment { beta, grid })
    }

    fn truncate(&self, raw: f64) -> f64 {
        match self {
            Self::Discrete => {
                if raw == 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            Self::BoundedEuclidean { beta, .. } | Self::BoundedSupSegment { beta, .. } => {
                (raw / beta).min(1.0)
            }
        }
    }
}

fn sup_norm_diff(x: &[f64], y: &[f64], dim: usize) -> f64 {
    x.chunks(dim)
        .zip(y.chunks(dim))
        .map(|(a, b)| euclid(a, b))
        .fold(0.0, f64::max)
}

impl Metric<f64> for BoundedMetric {
    fn distance(&self, x: &f64, y: &f64) -> f64 {
        match self {
            Self::Discrete => DiscreteMetric.distance(x, y),
            _ => self.truncate((x - y).abs()),
        }
    }
}

impl Metric<[f64]> for BoundedMetric {
    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Self::Discrete => DiscreteMetric.distance(x, y),
            Self::BoundedEuclidean { .. } => self.truncate(euclid(x, y)),
            Self::BoundedSupSegment { grid, .. } => {
                let dim = (x.len() / (grid.m + 1)).max(1);
                self.truncate(sup_norm_diff(x, y, dim))
            }
        }
    }
}

impl Metric<Vec<f64>> for BoundedMetric {
    fn distance(&self, x: &Vec<f64>, y: &Vec<f64>) -> f64 {
        Metric::<[f64]>::distance(self, x.as_slice(), y.as_slice())
    }
}

impl Metric<SegmentState> for BoundedMetric {
    fn distance(&self, x: &SegmentState, y: &SegmentState) -> f64 {
        match self {
            Self::Discrete => DiscreteMetric.distance(x.values(), y.values()),
            Self::BoundedEuclidean { .. } => self.truncate(euclid(x.current(), y.current())),
            Self::BoundedSupSegment { .. } => {
                self.truncate(sup_norm_diff(x.values(), y.values(), x.dim()))
            }
        }
    }
}

impl Metric<DecimalState> for BoundedMetric {
    fn distance(&self, x: &DecimalState, y: &DecimalState) -> f64 {
        match self {
            Self::Discrete => DiscreteMetric.distance(x, y),
            _ => self.truncate(x.abs_diff(y)),
        }
    }
}

/// Serializable metric choice for configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricSpec {
    /// Raw Euclidean distance (unbounded).
    Euclidean,
    Discrete,
    BoundedEuclidean {
        beta: f64,
    },
    /// Sup-norm over the segment grid, bounded by one.
    SupSegment {
        beta: f64,
    },
}

impl std::str::FromStr for MetricSpec {
    type Err = crate::Error;

    /// `euclid`, `euclid1d`, `discrete`, `beta:<b>` or `segment:<b>`.
    fn from_str(s: &str) -> crate::Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "euclid" | "euclid1d" | "euclidean" => return Ok(Self::Euclidean),
            "discrete" => return Ok(Self::Discrete),
            _ => {}
        }
        let parse = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| crate::Error::Parse(format!("bad beta in metric `{s}`")))
        };
        if let Some(b) = lower.strip_prefix("beta:") {
            return Ok(Self::BoundedEuclidean { beta: parse(b)? });
        }
        if let Some(b) = lower.strip_prefix("segment:") {
            return Ok(Self::SupSegment { beta: parse(b)? });
        }
        Err(crate::Error::Parse(format!(
            "unknown metric `{s}` (euclid1d, discrete, beta:<b>, segment:<b>)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bounded_euclidean_truncates() {
        let m = BoundedMetric::bounded_euclidean(2.0, 1).unwrap();
        assert_eq!(m.distance(&0.0, &1.0), 0.5);
        assert_eq!(m.distance(&0.0, &5.0), 1.0);
        assert_eq!(m.distance(&3.0, &3.0), 0.0);
        assert!(BoundedMetric::bounded_euclidean(0.0, 1).is_err());
    }

    #[test]
    fn discrete_metric_is_indicator() {
        assert_eq!(DiscreteMetric.distance(&1.0, &1.0), 0.0);
        assert_eq!(DiscreteMetric.distance(&1.0, &1.5), 1.0);
        assert_eq!(
            BoundedMetric::Discrete.distance(&[1.0, 2.0][..], &[1.0, 2.0][..]),
            0.0
        );
    }

    #[test]
    fn metric_spec_parsing() {
        assert_eq!(
            "euclid1d".parse::<MetricSpec>().unwrap(),
            MetricSpec::Euclidean
        );
        assert_eq!(
            "beta:0.5".parse::<MetricSpec>().unwrap(),
            MetricSpec::BoundedEuclidean { beta: 0.5 }
        );
        assert!("manhattan".parse::<MetricSpec>().is_err());
    }

    proptest! {
        #[test]
        fn bounded_metric_axioms(
            x in prop::collection::vec(-5.0f64..5.0, 3),
            y in prop::collection::vec(-5.0f64..5.0, 3),
            z in prop::collection::vec(-5.0f64..5.0, 3),
            beta in 0.1f64..4.0,
        ) {
            for m in [BoundedMetric::Discrete, BoundedMetric::BoundedEuclidean { beta, dim: 3 }] {
                let dxy = m.distance(&x, &y);
                prop_assert!((0.0..=1.0).contains(&dxy));
                prop_assert_eq!(m.distance(&x, &x), 0.0);
                prop_assert_eq!(dxy, m.distance(&y, &x));
                prop_assert!(dxy <= m.distance(&x, &z) + m.distance(&z, &y) + 1e-12);
            }
        }
    }
}
