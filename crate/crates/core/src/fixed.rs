//! Exact fixed-point decimals used for times (minutes) and battery costs.
//!
//! Values are stored as integer micro-units so interval endpoint comparisons
//! and budget sums never depend on float rounding. On disk they are written
//! as decimal strings.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of fractional decimal digits kept.
pub const FRACTION_DIGITS: u32 = 6;
const SCALE: i64 = 10i64.pow(FRACTION_DIGITS);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed(i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid decimal {0:?}")]
pub struct ParseFixedError(pub String);

impl Fixed {
    pub const ZERO: Fixed = Fixed(0);

    pub const fn from_raw(raw: i64) -> Self {
        Fixed(raw)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    pub const fn from_int(v: i64) -> Self {
        Fixed(v * SCALE)
    }

    /// Rounds toward negative infinity onto the micro grid.
    pub fn from_f64_floor(v: f64) -> Self {
        Fixed((v * SCALE as f64).floor() as i64)
    }

    pub fn from_f64_round(v: f64) -> Self {
        Fixed((v * SCALE as f64).round() as i64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / SCALE as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 + rhs.0)
    }
}

impl AddAssign for Fixed {
    fn add_assign(&mut self, rhs: Fixed) {
        self.0 += rhs.0;
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        Fixed(self.0 - rhs.0)
    }
}

impl Sum for Fixed {
    fn sum<I: Iterator<Item = Fixed>>(iter: I) -> Fixed {
        Fixed(iter.map(|f| f.0).sum())
    }
}

impl<'a> Sum<&'a Fixed> for Fixed {
    fn sum<I: Iterator<Item = &'a Fixed>>(iter: I) -> Fixed {
        Fixed(iter.map(|f| f.0).sum())
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let int = abs / SCALE as u64;
        let frac = abs % SCALE as u64;
        if frac == 0 {
            return write!(f, "{sign}{int}");
        }
        let digits = format!("{:0width$}", frac, width = FRACTION_DIGITS as usize);
        write!(f, "{sign}{int}.{}", digits.trim_end_matches('0'))
    }
}

impl FromStr for Fixed {
    type Err = ParseFixedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFixedError(s.to_string());
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        if !frac_part.bytes().all(|b| b.is_ascii_digit()) || (body.contains('.') && frac_part.is_empty()) {
            return Err(err());
        }
        // Extra digits are only tolerated when they carry no value.
        let (kept, dropped) = frac_part.split_at(frac_part.len().min(FRACTION_DIGITS as usize));
        if dropped.bytes().any(|b| b != b'0') {
            return Err(err());
        }
        let int: i64 = int_part.parse().map_err(|_| err())?;
        let mut frac: i64 = if kept.is_empty() { 0 } else { kept.parse().map_err(|_| err())? };
        frac *= 10i64.pow(FRACTION_DIGITS - kept.len() as u32);
        let raw = int.checked_mul(SCALE).and_then(|v| v.checked_add(frac)).ok_or_else(err)?;
        Ok(Fixed(if neg { -raw } else { raw }))
    }
}

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fixed {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_format() {
        assert_eq!("12.5".parse::<Fixed>().unwrap(), Fixed::from_raw(12_500_000));
        assert_eq!("0.000001".parse::<Fixed>().unwrap(), Fixed::from_raw(1));
        assert_eq!("-3".parse::<Fixed>().unwrap(), Fixed::from_int(-3));
        assert_eq!("1.2500000".parse::<Fixed>().unwrap().to_string(), "1.25");
        assert_eq!(Fixed::from_raw(-1_500_000).to_string(), "-1.5");
        for bad in ["", ".5", "1.", "1.0000001", "abc", "1e3", "--1"] {
            assert!(bad.parse::<Fixed>().is_err(), "{bad}");
        }
    }

    proptest! {
        #[test]
        fn display_round_trips(raw in -10i64.pow(15)..10i64.pow(15)) {
            let f = Fixed::from_raw(raw);
            prop_assert_eq!(f.to_string().parse::<Fixed>().unwrap(), f);
        }
    }
}
