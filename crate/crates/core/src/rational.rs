//! Exact rational arithmetic helpers.
//!
//! Every numeric quantity in the crate is a [`Rational`]. The underlying
//! `BigRational` keeps fractions reduced after each operation, so equal values
//! always have identical representations.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::de::{self, Visitor};
use serde::{Deserializer, Serializer};

pub type Rational = num_rational::BigRational;

/// Error returned when a string is not an integer or a `p/q` fraction.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal {0:?}")]
pub struct ParseRationalError(pub String);

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn frac(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Parses `"7"`, `"-3"` or `"3/2"`. Denominators must be nonzero.
pub fn parse(text: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(text.to_string());
    let text = text.trim();
    match text.split_once('/') {
        None => BigInt::from_str(text)
            .map(Rational::from_integer)
            .map_err(|_| err()),
        Some((num, den)) => {
            let num = BigInt::from_str(num.trim()).map_err(|_| err())?;
            let den = BigInt::from_str(den.trim()).map_err(|_| err())?;
            if den.is_zero() {
                return Err(err());
            }
            Ok(Rational::new(num, den))
        }
    }
}

/// Formats as a decimal integer when the denominator is one, else as `p/q`.
pub fn format(value: &Rational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// `floor(a / b)` for `b > 0`.
pub fn floor_div(a: &Rational, b: &Rational) -> BigInt {
    debug_assert!(b.is_positive());
    (a / b).floor().to_integer()
}

/// True when `value` is an integer multiple of `unit`.
pub fn is_multiple_of(value: &Rational, unit: &Rational) -> bool {
    (value / unit).is_integer()
}

pub fn max_ref<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if a >= b {
        a
    } else {
        b
    }
}

pub fn pow(base: &Rational, exp: usize) -> Rational {
    num_traits::pow(base.clone(), exp)
}

/// Least common multiple of the denominators of `values`.
pub fn denominator_lcm<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// Smallest integer `k` with `2^k >= value`, for `value > 0`.
pub fn ceil_log2(value: &Rational) -> i64 {
    debug_assert!(value.is_positive());
    let mut k = value.numer().bits() as i64 - value.denom().bits() as i64;
    while pow2(k) < *value {
        k += 1;
    }
    while pow2(k - 1) >= *value {
        k -= 1;
    }
    k
}

fn pow2(k: i64) -> Rational {
    let p = Rational::from_integer(BigInt::one() << k.unsigned_abs());
    if k >= 0 {
        p
    } else {
        p.recip()
    }
}

/// Approximate conversion, only for human-facing summaries.
pub fn to_f64(value: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    value.to_f64().unwrap_or(f64::NAN)
}

/// Serde adapter storing a [`Rational`] as its canonical string form.
pub mod serde_str {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        d.deserialize_any(RationalVisitor)
    }
}

/// Serde adapter for `Vec<Rational>`.
pub mod serde_vec {
    use super::*;
    use serde::ser::SerializeSeq;
    use serde::Deserialize;

    pub fn serialize<S: Serializer>(values: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&format(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let raw: Vec<RationalLiteral> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|r| r.0).collect())
    }
}

/// A rational that deserializes from a JSON integer or a `"p/q"` string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalLiteral(pub Rational);

impl<'de> serde::Deserialize<'de> for RationalLiteral {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(RationalVisitor).map(RationalLiteral)
    }
}

impl serde::Serialize for RationalLiteral {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(&self.0))
    }
}

struct RationalVisitor;

impl Visitor<'_> for RationalVisitor {
    type Value = Rational;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an integer or a \"p/q\" string")
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
        Ok(int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
        Ok(Rational::from_integer(BigInt::from(v)))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational, E> {
        Err(E::custom(format_args!(
            "floating-point value {v} is not accepted; use an integer or \"p/q\""
        )))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
        parse(v).map_err(E::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_integers_and_fractions() {
        assert_eq!(parse("3/2").unwrap(), frac(3, 2));
        assert_eq!(parse("6/4").unwrap(), frac(3, 2));
        assert_eq!(parse("-7").unwrap(), int(-7));
        assert!(parse("1/0").is_err());
        assert!(parse("1.5").is_err());
        assert!(parse("").is_err());
    }

    #[test]
    fn formats_canonically() {
        assert_eq!(format(&frac(4, 2)), "2");
        assert_eq!(format(&frac(-3, 6)), "-1/2");
    }

    #[test]
    fn floor_and_multiples() {
        let d = frac(1, 4);
        assert_eq!(floor_div(&frac(5, 8), &d), BigInt::from(2));
        assert_eq!(floor_div(&frac(1, 8), &d), BigInt::from(0));
        assert!(is_multiple_of(&frac(3, 4), &d));
        assert!(!is_multiple_of(&frac(1, 8), &d));
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(&int(1)), 0);
        assert_eq!(ceil_log2(&int(8)), 3);
        assert_eq!(ceil_log2(&int(9)), 4);
        assert_eq!(ceil_log2(&frac(1, 3)), -1);
        assert_eq!(ceil_log2(&frac(1, 4)), -2);
    }

    #[test]
    fn json_literals() {
        let v: RationalLiteral = serde_json::from_str("\"3/2\"").unwrap();
        assert_eq!(v.0, frac(3, 2));
        let v: RationalLiteral = serde_json::from_str("4").unwrap();
        assert_eq!(v.0, int(4));
        assert!(serde_json::from_str::<RationalLiteral>("1.5").is_err());
    }
}
