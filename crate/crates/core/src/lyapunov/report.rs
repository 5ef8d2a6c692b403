use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;

const ROUNDING_SLACK: f64 = 1e-12;

/// Three-way outcome of a statistical check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// CLI exit code: 0 pass, 1 fail, 2 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Pass => 0,
            Self::Fail => 1,
            Self::Inconclusive => 2,
        }
    }

    /// Fail beats inconclusive beats pass.
    pub fn combine(self, other: Self) -> Self {
        match (self, other) {
            (Self::Fail, _) | (_, Self::Fail) => Self::Fail,
            (Self::Inconclusive, _) | (_, Self::Inconclusive) => Self::Inconclusive,
            _ => Self::Pass,
        }
    }

    /// Three-sigma rule on `margin = bound - estimate`.
    pub fn from_margin(margin: f64, ci95: f64) -> Self {
        Self::from_scaled_margin(margin, ci95, 0.0)
    }

    /// As [`Verdict::from_margin`], tolerating rounding of order
    /// `1e-12 (1 + |scale|)` when the interval is degenerate.
    pub fn from_scaled_margin(margin: f64, ci95: f64, scale: f64) -> Self {
        if !(margin.is_finite() && ci95.is_finite()) {
            Self::Inconclusive
        } else if margin < -3.0 * ci95 - ROUNDING_SLACK * (1.0 + scale.abs()) {
            Self::Fail
        } else {
            Self::Pass
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Inconclusive => "inconclusive",
        })
    }
}

/// One test state of a drift check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    pub index: usize,
    pub v: f64,
    /// Estimate of `PV(x)` (or of `E_x[V(X_t) + ∫ phi(V)]` in continuous time).
    pub estimate: f64,
    pub bound: f64,
    /// `bound - estimate`; negative means the drift inequality is violated.
    pub margin: f64,
    pub ci95: f64,
    /// `|margin| <= 3 ci95`: the data cannot tell the two sides apart.
    pub tight: bool,
    pub verdict: Verdict,
}

impl DriftRow {
    pub fn new(index: usize, v: f64, estimate: f64, bound: f64, ci95: f64) -> Self {
        let margin = bound - estimate;
        Self {
            index,
            v,
            estimate,
            bound,
            margin,
            ci95,
            tight: margin.abs() <= 3.0 * ci95,
            verdict: Verdict::from_scaled_margin(margin, ci95, bound),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub method: String,
    pub rows: Vec<DriftRow>,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

impl DriftReport {
    pub fn new(method: impl Into<String>, rows: Vec<DriftRow>, warnings: Vec<String>) -> Self {
        let verdict = if rows.is_empty() {
            Verdict::Inconclusive
        } else {
            rows.iter()
                .fold(Verdict::Pass, |acc, r| acc.combine(r.verdict))
        };
        Self {
            method: method.into(),
            rows,
            verdict,
            warnings,
        }
    }

    /// Smallest margin over the test states.
    pub fn worst_margin(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.margin)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5}  {:>14}  {:>14}  {:>14}  {:>12}  {:>10}  {:>5}  verdict",
            "state", "V", "estimate", "bound", "margin", "ci95", "tight"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>5}  {:>14.6e}  {:>14.6e}  {:>14.6e}  {:>12.3e}  {:>10.3e}  {:>5}  {}",
                r.index, r.v, r.estimate, r.bound, r.margin, r.ci95, r.tight, r.verdict
            );
        }
        let _ = writeln!(out, "method: {}  verdict: {}", self.method, self.verdict);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
