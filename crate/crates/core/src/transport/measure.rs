use std::collections::HashMap;
use std::hash::Hash;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::chains::{DecimalState, SegmentState};
use crate::error::{Error, Result};
use crate::numerics::compensated_sum;

/// Weighted finite point set standing in for a probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<S> {
    points: Vec<S>,
    weights: Vec<f64>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl<S> EmpiricalMeasure<S> {
    /// Builds a measure, checking that weights are nonnegative and sum to one.
    pub fn new(points: Vec<S>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter(
                "empirical measure needs at least one point".into(),
            ));
        }
        if points.len() != weights.len() {
            return Err(Error::Parameter(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Parameter(format!("invalid weight {w}")));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Parameter(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { points, weights })
    }

    /// Rescales nonnegative raw weights to sum to one.
    pub fn normalized(points: Vec<S>, raw: Vec<f64>) -> Result<Self> {
        let total = compensated_sum(raw.iter().copied());
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Parameter(format!("raw weights sum to {total}")));
        }
        Self::new(points, raw.into_iter().map(|w| w / total).collect())
    }

    /// Equal weights.
    pub fn uniform(points: Vec<S>) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        let n = points.len();
        Self::new(points, vec![w; n])
    }

    pub fn dirac(point: S) -> Self {
        Self {
            points: vec![point],
            weights: vec![1.0],
        }
    }

    pub fn points(&self) -> &[S] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// Push-forward under `f`.
    pub fn map<T>(&self, f: impl FnMut(&S) -> T) -> EmpiricalMeasure<T> {
        EmpiricalMeasure {
            points: self.points.iter().map(f).collect(),
            weights: self.weights.clone(),
        }
    }

    /// `int f dmu`.
    pub fn expectation(&self, mut f: impl FnMut(&S) -> f64) -> f64 {
        compensated_sum(self.iter().map(|(s, w)| w * f(s)))
    }

    pub fn into_parts(self) -> (Vec<S>, Vec<f64>) {
        (self.points, self.weights)
    }
}

impl<S: SupportKey + Clone> EmpiricalMeasure<S> {
    /// Merges identical atoms, keeping first-occurrence order.
    pub fn compress(&self) -> Self {
        let mut index: HashMap<S::Key, usize> = HashMap::new();
        let mut points = Vec::new();
        let mut mass: Vec<Vec<f64>> = Vec::new();
        for (p, w) in self.iter() {
            let k = p.support_key();
            match index.get(&k) {
                Some(&i) => mass[i].push(w),
                None => {
                    index.insert(k, points.len());
                    points.push(p.clone());
                    mass.push(vec![w]);
                }
            }
        }
        let weights = mass.into_iter().map(compensated_sum).collect();
        Self { points, weights }
    }

    /// Mass assigned to each distinct atom.
    pub fn atom_masses(&self) -> HashMap<S::Key, f64> {
        let mut parts: HashMap<S::Key, Vec<f64>> = HashMap::new();
        for (p, w) in self.iter() {
            parts.entry(p.support_key()).or_default().push(w);
        }
        parts
            .into_iter()
            .map(|(k, v)| (k, compensated_sum(v)))
            .collect()
    }
}

impl EmpiricalMeasure<Vec<f64>> {
    /// Scalar view; fails unless every point is one-dimensional.
    pub fn to_scalar(&self) -> Result<EmpiricalMeasure<f64>> {
        if let Some(p) = self.points.iter().find(|p| p.len() != 1) {
            return Err(Error::Dimension(format!(
                "expected scalar states, found dimension {}",
                p.len()
            )));
        }
        Ok(self.map(|p| p[0]))
    }

    /// Reads `value[,value...],weight` rows. A non-numeric first row is
    /// treated as a header. Weights are renormalized.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .flexible(false)
            .from_reader(reader);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (row_no, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::Parse(format!(
                    "row {}: need at least one value and a weight",
                    row_no + 1
                )));
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(mut vals) => {
                    let w = vals.pop().expect("len >= 2");
                    points.push(vals);
                    weights.push(w);
                }
                Err(_) if row_no == 0 => continue,
                Err(_) => {
                    return Err(Error::Parse(format!(
                        "row {}: non-numeric field",
                        row_no + 1
                    )))
                }
            }
        }
        Self::normalized(points, weights)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        let dim = self.points[0].len();
        let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for (p, wt) in self.iter() {
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            row.push(wt.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let atoms: Vec<JsonAtom> = self
            .iter()
            .map(|(p, w)| JsonAtom {
                point: p.clone(),
                weight: w,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&atoms)?)
    }

    /// Reads `[{"point": [..], "weight": w}, ...]`.
    pub fn from_json(text: &str) -> Result<Self> {
        let atoms: Vec<JsonAtom> = serde_json::from_str(text)?;
        let (points, weights) = atoms.into_iter().map(|a| (a.point, a.weight)).unzip();
        Self::normalized(points, weights)
    }
}

#[derive(Serialize, Deserialize)]
struct JsonAtom {
    point: Vec<f64>,
    weight: f64,
}

/// Hashable identity of a state, used to match supports.
pub trait SupportKey {
    type Key: Hash + Eq + Clone;
    fn support_key(&self) -> Self::Key;
}

fn float_key(x: f64) -> u64 {
    // -0.0 and 0.0 are the same atom
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

impl SupportKey for f64 {
    type Key = u64;
    fn support_key(&self) -> u64 {
        float_key(*self)
    }
}

impl SupportKey for Vec<f64> {
    type Key = Vec<u64>;
    fn support_key(&self) -> Vec<u64> {
        self.iter().map(|v| float_key(*v)).collect()
    }
}

impl SupportKey for SegmentState {
    type Key = Vec<u64>;
    fn support_key(&self) -> Vec<u64> {
        self.values().iter().map(|v| float_key(*v)).collect()
    }
}

impl SupportKey for DecimalState {
    type Key = DecimalState;
    fn support_key(&self) -> DecimalState {
        self.clone()
    }
}

macro_rules! int_key {
    ($($t:ty),*) => {$(
        impl SupportKey for $t {
            type Key = $t;
            fn support_key(&self) -> $t { *self }
        }
    )*};
}
int_key!(u8, u32, u64, usize, i32, i64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_weights() {
        assert!(EmpiricalMeasure::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(EmpiricalMeasure::new(vec![0.0], vec![-1.0]).is_err());
        assert!(EmpiricalMeasure::<f64>::new(vec![], vec![]).is_err());
        assert!(EmpiricalMeasure::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn uniform_many_atoms_is_valid() {
        let m = EmpiricalMeasure::uniform((0..1_000_000).map(|i| i as f64).collect()).unwrap();
        assert_eq!(m.len(), 1_000_000);
    }

    #[test]
    fn compress_merges_duplicates() {
        let m = EmpiricalMeasure::uniform(vec![1.0, 2.0, 1.0, -0.0, 0.0])
            .unwrap()
            .compress();
        assert_eq!(m.points(), &[1.0, 2.0, -0.0]);
        assert!((m.weights()[0] - 0.4).abs() < 1e-15);
        assert!((m.weights()[2] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_with_header() {
        let text = "x,weight\n0.0,1\n1.0,1\n";
        let m = EmpiricalMeasure::read_csv(text.as_bytes()).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let again = EmpiricalMeasure::read_csv(buf.as_slice()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn json_round_trip() {
        let m =
            EmpiricalMeasure::new(vec![vec![0.0, 1.0], vec![2.0, 3.0]], vec![0.25, 0.75]).unwrap();
        let back = EmpiricalMeasure::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn scalar_view_checks_dimension() {
        let m = EmpiricalMeasure::uniform(vec![vec![0.0, 1.0]]).unwrap();
        assert!(matches!(m.to_scalar(), Err(Error::Dimension(_))));
    }
}
