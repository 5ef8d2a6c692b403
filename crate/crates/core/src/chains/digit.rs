use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::MarkovModel;
use crate::error::{Error, Result};
use crate::transport::EmpiricalMeasure;

/// A terminating decimal in `[0, 1)` stored as its digits after the point.
///
/// Trailing zeros are trimmed, so equality, hashing and the derived
/// lexicographic order all agree with the numeric value.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct DecimalState {
    digits: Vec<u8>,
}

impl DecimalState {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_digits(mut digits: Vec<u8>) -> Result<Self> {
        if let Some(d) = digits.iter().find(|d| **d > 9) {
            return Err(Error::Domain(format!("{d} is not a decimal digit")));
        }
        while digits.last() == Some(&0) {
            digits.pop();
        }
        Ok(Self { digits })
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    /// `x / 10 + digit / 10`: the digit goes right after the point.
    pub fn step(&self, digit: u8) -> Result<Self> {
        if digit > 9 {
            return Err(Error::Domain(format!("{digit} is not a decimal digit")));
        }
        let mut digits = Vec::with_capacity(self.digits.len() + 1);
        digits.push(digit);
        digits.extend_from_slice(&self.digits);
        Self::from_digits(digits)
    }

    /// Fractional part of `10^n x`.
    pub fn reconstruct(&self, n: usize) -> Self {
        Self {
            digits: self.digits.get(n..).map(<[u8]>::to_vec).unwrap_or_default(),
        }
    }

    /// Nearest double.
    pub fn to_f64(&self) -> f64 {
        self.to_string().parse().expect("decimal string parses")
    }

    /// `|x - y|`, subtracted exactly and rounded once.
    pub fn abs_diff(&self, other: &Self) -> f64 {
        let (hi, lo) = if self >= other {
            (self, other)
        } else {
            (other, self)
        };
        let len = hi.digits.len().max(lo.digits.len());
        let mut out = vec![0u8; len];
        let mut borrow = 0i8;
        for k in (0..len).rev() {
            let a = *hi.digits.get(k).unwrap_or(&0) as i8;
            let b = *lo.digits.get(k).unwrap_or(&0) as i8 + borrow;
            if a >= b {
                out[k] = (a - b) as u8;
                borrow = 0;
            } else {
                out[k] = (a + 10 - b) as u8;
                borrow = 1;
            }
        }
        debug_assert_eq!(borrow, 0);
        Self::from_digits(out).expect("digits in range").to_f64()
    }
}

impl fmt::Display for DecimalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.digits.is_empty() {
            return f.write_str("0");
        }
        f.write_str("0.")?;
        for d in &self.digits {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for DecimalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DecimalState({self})")
    }
}

impl FromStr for DecimalState {
    type Err = Error;

    /// Accepts `0`, `0.`, `.25`, `0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let frac = match t.split_once('.') {
            Some(("" | "0", frac)) => frac,
            None if t == "0" => "",
            _ => return Err(Error::Parse(format!("`{s}` is not a decimal in [0, 1)"))),
        };
        let digits = frac
            .bytes()
            .map(|b| {
                if b.is_ascii_digit() {
                    Ok(b - b'0')
                } else {
                    Err(Error::Parse(format!("bad digit in `{s}`")))
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::from_digits(digits)
    }
}

impl From<DecimalState> for String {
    fn from(d: DecimalState) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for DecimalState {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "digit-chain state {x} outside [0, 1)"
        )))
    }
}

/// One step of `X_{n+1} = X_n / 10 + digit / 10`.
pub fn digit_step(x: f64, digit: u8) -> Result<f64> {
    check_unit(x)?;
    if digit > 9 {
        return Err(Error::Domain(format!("{digit} is not a decimal digit")));
    }
    Ok((x + digit as f64) / 10.0)
}

/// Recovered start and, when float error may reach the reported digits,
/// a warning.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub value: f64,
    pub warning: Option<String>,
}

/// Absolute error budget for float reconstruction.
pub const RECONSTRUCT_TOL: f64 = 1e-9;

/// `{10^n x_n}` in floating point.
pub fn digit_reconstruct(x_n: f64, n: u32) -> Result<Reconstruction> {
    check_unit(x_n)?;
    let scale = 10f64.powi(n as i32);
    let value = (x_n * scale).fract();
    let err = 2.0 * f64::EPSILON * scale;
    let warning = (err > RECONSTRUCT_TOL).then(|| {
        format!(
            "float reconstruction after {n} steps carries error up to {err:.1e}; use DecimalState"
        )
    });
    Ok(Reconstruction { value, warning })
}

/// Uniform digit insertion on `f64` states.
#[derive(Debug, Clone, Copy, Default)]
pub struct DigitShiftChain;

impl MarkovModel for DigitShiftChain {
    type State = f64;
    fn step(&self, x: &f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        digit_step(*x, rng.random_range(0..10u8))
    }
}

/// Uniform digit insertion on exact decimal states.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactDigitChain;

impl MarkovModel for ExactDigitChain {
    type State = DecimalState;
    fn step(&self, x: &DecimalState, rng: &mut ChaCha8Rng) -> Result<DecimalState> {
        x.step(rng.random_range(0..10u8))
    }
}

/// Largest `n` accepted by the enumerators (10^n atoms).
pub const MAX_ENUMERATION_STEPS: u32 = 7;

fn check_enum(n: u32) -> Result<usize> {
    if n > MAX_ENUMERATION_STEPS {
        return Err(Error::SizeGuard(format!(
            "10^{n} outcomes exceed the enumeration limit"
        )));
    }
    Ok(10usize.pow(n))
}

/// All `10^n` equally likely outcomes of `n` steps from `x0`.
pub fn enumerate_digit_marginal(
    x0: &DecimalState,
    n: u32,
) -> Result<EmpiricalMeasure<DecimalState>> {
    let count = check_enum(n)?;
    let n = n as usize;
    let points = (0..count)
        .map(|k| {
            let mut digits = Vec::with_capacity(n + x0.digits.len());
            let mut rest = k;
            for _ in 0..n {
                digits.push((rest % 10) as u8);
                rest /= 10;
            }
            digits.extend_from_slice(&x0.digits);
            DecimalState::from_digits(digits).expect("digits in range")
        })
        .collect();
    EmpiricalMeasure::uniform(points)
}

/// Float counterpart: atoms `(x0 + k) / 10^n`, `k = 0..10^n`.
pub fn enumerate_digit_marginal_f64(x0: f64, n: u32) -> Result<EmpiricalMeasure<f64>> {
    check_unit(x0)?;
    let count = check_enum(n)?;
    let scale = count as f64;
    EmpiricalMeasure::uniform((0..count).map(|k| (x0 + k as f64) / scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use num_rational::Ratio;

    fn dec(s: &str) -> DecimalState {
        s.parse().unwrap()
    }

    // oracle: exact rational value of a decimal string
    fn rational(s: &DecimalState) -> Ratio<i64> {
        s.digits()
            .iter()
            .enumerate()
            .fold(Ratio::from_integer(0), |acc, (k, d)| {
                acc + Ratio::new(*d as i64, 10i64.pow(k as u32 + 1))
            })
    }

    #[test]
    fn step_follows_recursion() {
        assert_eq!(digit_step(0.0, 7).unwrap(), 0.7);
        assert_eq!(digit_step(0.5, 0).unwrap(), 0.05);
        assert!(digit_step(1.0, 0).is_err());
        assert_eq!(dec("0").step(7).unwrap(), dec("0.7"));
        assert_eq!(dec("0.5").step(0).unwrap(), dec("0.05"));
    }

    #[test]
    fn exact_step_matches_rational_oracle() {
        let x = dec("0.25");
        for d in 0..10u8 {
            let y = x.step(d).unwrap();
            assert_eq!(
                rational(&y),
                (rational(&x) + Ratio::from_integer(d as i64)) / 10
            );
        }
    }

    #[test]
    fn reconstruction() {
        let x1 = dec("0.25").step(3).unwrap();
        assert_eq!(x1, dec("0.325"));
        assert_eq!(x1.reconstruct(1), dec("0.25"));
        assert_eq!(x1.reconstruct(0), x1);
        let r = digit_reconstruct(0.325, 1).unwrap();
        assert!((r.value - 0.25).abs() < 1e-14);
        assert!(r.warning.is_none());
        assert!(digit_reconstruct(0.5, 9).unwrap().warning.is_some());
    }

    #[test]
    fn reconstruction_is_exact_for_random_digit_sequences() {
        let mut r = rng::stream(11, 0);
        for _ in 0..200 {
            let start = DecimalState::from_digits(
                (0..r.random_range(0..6))
                    .map(|_| r.random_range(0..10))
                    .collect(),
            )
            .unwrap();
            let n = r.random_range(0..=6);
            let mut x = start.clone();
            for _ in 0..n {
                x = ExactDigitChain.step(&x, &mut r).unwrap();
            }
            assert_eq!(x.reconstruct(n), start);
        }
    }

    #[test]
    fn synchronous_pair_contracts_by_ten() {
        let mut x = dec("0.3");
        let mut y = dec("0.8");
        for n in 1..=8 {
            let d = (n * 3 % 10) as u8;
            x = x.step(d).unwrap();
            y = y.step(d).unwrap();
            assert_eq!(x.abs_diff(&y), 0.5 * 10f64.powi(-n));
        }
    }

    #[test]
    fn abs_diff_matches_rational_oracle() {
        for (a, b) in [
            ("0.3", "0.8"),
            ("0.123", "0.9"),
            ("0.05", "0.0499"),
            ("0", "0.999"),
        ] {
            let (a, b) = (dec(a), dec(b));
            let exact = rational(&a) - rational(&b);
            let exact = if exact < Ratio::from_integer(0) {
                -exact
            } else {
                exact
            };
            assert_eq!(
                a.abs_diff(&b),
                *exact.numer() as f64 / *exact.denom() as f64
            );
        }
    }

    #[test]
    fn one_step_enumeration() {
        let m = enumerate_digit_marginal(&DecimalState::zero(), 1).unwrap();
        let got: Vec<String> = m.points().iter().map(|p| p.to_string()).collect();
        assert_eq!(
            got,
            ["0", "0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"]
        );
        assert!(m.weights().iter().all(|w| *w == 0.1));
        let f = enumerate_digit_marginal_f64(0.0, 1).unwrap();
        assert_eq!(f.points()[7], 0.7);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["0", "0.5", "0.0001", "0.123456789"] {
            assert_eq!(dec(s).to_string(), s);
        }
        assert_eq!(dec("0.500"), dec("0.5"));
        assert_eq!(dec(".25"), dec("0.25"));
        assert!("1.5".parse::<DecimalState>().is_err());
        assert!("0.2a".parse::<DecimalState>().is_err());
        let json = serde_json::to_string(&dec("0.25")).unwrap();
        assert_eq!(json, "\"0.25\"");
        assert_eq!(
            serde_json::from_str::<DecimalState>(&json).unwrap(),
            dec("0.25")
        );
    }
}
