//! Exact rational scalar used for every breakpoint, slope, value and answer.
//!
//! Values are always kept in lowest terms with a positive denominator. The
//! text encoding is a plain decimal when the value has a finite decimal
//! expansion (`"2.5"`, `"-3"`) and `"num/den"` otherwise (`"8/3"`). Both forms
//! are accepted when parsing.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Rational(BigRational::new(numer.into(), denom.into()))
    }

    pub fn from_integer(value: i64) -> Self {
        Rational(BigRational::from_integer(value.into()))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        Rational(self.0.recip())
    }

    pub fn half(&self) -> Self {
        Rational(&self.0 / BigInt::from(2))
    }

    /// Checked division; `None` when dividing by zero.
    pub fn checked_div(&self, rhs: &Rational) -> Option<Rational> {
        if rhs.is_zero() {
            None
        } else {
            Some(Rational(&self.0 / &rhs.0))
        }
    }

    pub fn min(self, other: Rational) -> Rational {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Rational) -> Rational {
        if other > self {
            other
        } else {
            self
        }
    }

    /// Smallest `k >= 0` with `2^k >= self`. Requires a positive value.
    pub fn ceil_log2(&self) -> u32 {
        assert!(self.is_positive(), "ceil_log2 of a non-positive value");
        let mut k = 0u32;
        let mut pow = BigRational::one();
        while pow < self.0 {
            pow *= BigInt::from(2);
            k += 1;
        }
        k
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Nearest rational to `value` with denominator `denom` (used to build
    /// lattices and to convert decimal UI inputs).
    pub fn from_f64_on_lattice(value: f64, denom: i64) -> Self {
        Rational::new((value * denom as f64).round() as i64, denom)
    }

    fn decimal_digits(&self) -> Option<usize> {
        // Finite decimal expansion iff the denominator is 2^a 5^b.
        let mut d = self.0.denom().clone();
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let mut twos = 0usize;
        let mut fives = 0usize;
        while d.is_even() {
            d /= &two;
            twos += 1;
        }
        while (&d % &five).is_zero() {
            d /= &five;
            fives += 1;
        }
        if d.is_one() {
            Some(twos.max(fives))
        } else {
            None
        }
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.decimal_digits() {
            Some(0) => write!(f, "{}", self.0.numer()),
            Some(digits) => {
                let scale = BigInt::from(10).pow(digits as u32);
                let scaled = self.0.numer() * &scale / self.0.denom();
                let sign = if scaled.is_negative() { "-" } else { "" };
                let magnitude = scaled.abs();
                let (int_part, frac_part) = magnitude.div_rem(&scale);
                write!(f, "{sign}{int_part}.{frac_part:0>digits$}")
            }
            None => write!(f, "{}/{}", self.0.numer(), self.0.denom()),
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let bad = || Error::Parse(format!("not a rational number: {s:?}"));
        if text.is_empty() {
            return Err(bad());
        }
        if let Some((num, den)) = text.split_once('/') {
            let num: BigInt = num.trim().parse().map_err(|_| bad())?;
            let den: BigInt = den.trim().parse().map_err(|_| bad())?;
            if den.is_zero() {
                return Err(bad());
            }
            return Ok(Rational(BigRational::new(num, den)));
        }
        let (negative, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text.strip_prefix('+').unwrap_or(text)),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let numer: BigInt = if digits.is_empty() {
            BigInt::zero()
        } else {
            digits.parse().map_err(|_| bad())?
        };
        let denom = BigInt::from(10).pow(frac_part.len() as u32);
        let value = BigRational::new(numer, denom);
        Ok(Rational(if negative { -value } else { value }))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Int(i64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Int(v) => Ok(Rational::from_integer(v)),
        }
    }
}

impl From<i64> for Rational {
    fn from(value: i64) -> Self {
        Rational::from_integer(value)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl $trait<&Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational($trait::$method(&self.0, &rhs.0))
            }
        }
        impl $trait<Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational($trait::$method(self.0, rhs.0))
            }
        }
        impl $trait<&Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &Rational) -> Rational {
                Rational($trait::$method(self.0, &rhs.0))
            }
        }
        impl $trait<Rational> for &Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational($trait::$method(&self.0, rhs.0))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |acc, x| acc + x)
    }
}

/// Comparison helper treating `None` as +infinity.
pub fn cmp_none_last(a: &Option<Rational>, b: &Option<Rational>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.cmp(y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Shorthand constructor used throughout tests and fixtures.
pub fn q(numer: i64, denom: i64) -> Rational {
    Rational::new(numer, denom)
}
