use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version written into every curve artifact.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: f64,
    pub distance: f64,
    pub ci95: f64,
    pub bound: Option<f64>,
}

/// Constants of a fitted bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub c1: f64,
    pub c2: f64,
    /// Root-mean-square residual in `ln distance` before the one-sided shift.
    pub residual: f64,
    /// Factor applied to `C1` so the bound covers every fitted point.
    pub shift: f64,
    pub points_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub schema: u32,
    pub method: String,
    /// Typical distance between two samples of the reference itself.
    pub sampling_floor: Option<f64>,
    pub rows: Vec<CurveRow>,
    pub fit: Option<FitResult>,
    pub warnings: Vec<String>,
}

impl ConvergenceCurve {
    pub fn new(method: impl Into<String>, rows: Vec<CurveRow>) -> Result<Self> {
        let curve = Self {
            schema: SCHEMA_VERSION,
            method: method.into(),
            sampling_floor: None,
            rows,
            fit: None,
            warnings: Vec::new(),
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Parameter(
                "curve times must be strictly increasing".into(),
            ));
        }
        if let Some(r) = self.rows.iter().find(|r| !(r.distance >= 0.0)) {
            return Err(Error::Parameter(format!(
                "negative or NaN distance {} at t = {}",
                r.distance, r.t
            )));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.distance).collect()
    }

    /// Header comments, then `t,distance,ci95,bound`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# schema: {}", self.schema)?;
        writeln!(w, "# method: {}", self.method)?;
        if let Some(f) = self.sampling_floor {
            writeln!(w, "# sampling_floor: {f:e}")?;
        }
        if let Some(fit) = &self.fit {
            writeln!(
                w,
                "# fit: c1={} c2={} residual={} shift={}",
                fit.c1, fit.c2, fit.residual, fit.shift
            )?;
        }
        for msg in &self.warnings {
            writeln!(w, "# warning: {msg}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "distance", "ci95", "bound"])?;
        for r in &self.rows {
            let bound = r.bound.map(|b| b.to_string()).unwrap_or_default();
            out.write_record([
                r.t.to_string(),
                r.distance.to_string(),
                r.ci95.to_string(),
                bound,
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads what [`ConvergenceCurve::write_csv`] writes; comment lines other
    /// than schema, method and sampling floor are ignored.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut schema = SCHEMA_VERSION;
        let mut method = String::from("csv");
        let mut floor = None;
        let mut body = String::new();
        for line in BufReader::new(reader).lines() {
            let line = line?;
            if let Some(c) = line.strip_prefix('#') {
                let c = c.trim();
                if let Some(v) = c.strip_prefix("schema:") {
                    schema = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad schema line `{line}`")))?;
                    if schema != SCHEMA_VERSION {
                        return Err(Error::Unsupported(format!("curve schema {schema}")));
                    }
                } else if let Some(v) = c.strip_prefix("method:") {
                    method = v.trim().to_string();
                } else if let Some(v) = c.strip_prefix("sampling_floor:") {
                    floor = Some(
                        v.trim()
                            .parse()
                            .map_err(|_| Error::Parse(format!("bad floor line `{line}`")))?,
                    );
                }
                continue;
            }
            body.push_str(&line);
            body.push('\n');
        }
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
        };
        let (ct, cd) = (col("t")?, col("distance")?);
        let cc = col("ci95").ok();
        let cb = col("bound").ok();
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{s}`")))
        };
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let get = |i: usize| rec.get(i).unwrap_or("");
            let bound = match cb.map(get) {
                Some(s) if !s.trim().is_empty() => Some(num(s)?),
                _ => None,
            };
            rows.push(CurveRow {
                t: num(get(ct))?,
                distance: num(get(cd))?,
                ci95: cc.map(|i| num(get(i))).transpose()?.unwrap_or(0.0),
                bound,
            });
        }
        let mut curve = Self::new(method, rows)?;
        curve.schema = schema;
        curve.sampling_floor = floor;
        Ok(curve)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConvergenceCurve {
        let rows = vec![
            CurveRow {
                t: 1.0,
                distance: 0.05,
                ci95: 0.0,
                bound: Some(0.1),
            },
            CurveRow {
                t: 2.0,
                distance: 0.005,
                ci95: 1e-4,
                bound: None,
            },
        ];
        let mut c = ConvergenceCurve::new("test", rows).unwrap();
        c.sampling_floor = Some(1e-3);
        c
    }

    #[test]
    fn csv_round_trip() {
        let c = sample();
        let text = c.to_csv_string().unwrap();
        assert!(text.starts_with("# schema: 1\n"));
        assert!(text.contains("t,distance,ci95,bound\n1,0.05,0,0.1\n2,0.005,0.0001,\n"));
        let back = ConvergenceCurve::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.rows, c.rows);
        assert_eq!(back.sampling_floor, Some(1e-3));
    }

    #[test]
    fn invariants() {
        let bad = vec![
            CurveRow {
                t: 2.0,
                distance: 0.1,
                ci95: 0.0,
                bound: None,
            },
            CurveRow {
                t: 1.0,
                distance: 0.1,
                ci95: 0.0,
                bound: None,
            },
        ];
        assert!(ConvergenceCurve::new("x", bad).is_err());
        let neg = vec![CurveRow {
            t: 0.0,
            distance: -1.0,
            ci95: 0.0,
            bound: None,
        }];
        assert!(ConvergenceCurve::new("x", neg).is_err());
    }
}
