//! Scalar abstraction for the exact probability algebra.
//!
//! Every identification functional, nuisance extraction and expansion check
//! only needs field arithmetic, so those paths are generic over [`Scalar`].
//! `f64` is the working type; [`Rational`] gives bit-exact evaluation where a
//! tolerance of zero is wanted.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational scalar.
pub type Rational = BigRational;

pub trait Scalar:
    Num + Clone + Debug + PartialOrd + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// `n / d`, exact where the type allows it.
    fn from_ratio(n: i64, d: i64) -> Self;

    /// Default tolerance for normalization checks on this type.
    fn normalization_tolerance() -> Self;

    fn abs_val(&self) -> Self {
        if *self < Self::zero() {
            Self::zero() - self.clone()
        } else {
            self.clone()
        }
    }

    fn from_usize_exact(n: usize) -> Self {
        Self::from_ratio(n as i64, 1)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Parses a decimal label such as `"1"`, `"-0.25"` or `"3/4"`.
    fn parse_label(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            return (d != 0).then(|| Self::from_ratio(n, d));
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit() || c == '.') {
            return None;
        }
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if frac_part.contains('.') || frac_part.len() > 17 {
            return None;
        }
        let digits = format!("{int_part}{frac_part}");
        let numer: i64 = if digits.is_empty() { return None } else { digits.parse().ok()? };
        let denom = 10i64.checked_pow(frac_part.len() as u32)?;
        let v = Self::from_ratio(numer, denom);
        Some(if neg { Self::zero() - v } else { v })
    }
}

impl Scalar for f64 {
    fn from_ratio(n: i64, d: i64) -> Self {
        n as f64 / d as f64
    }
    fn normalization_tolerance() -> Self {
        1e-12
    }
    fn parse_label(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: f64 = n.trim().parse().ok()?;
            let d: f64 = d.trim().parse().ok()?;
            return (d != 0.0).then(|| n / d);
        }
        s.parse::<f64>().ok().filter(|v| v.is_finite())
    }
}

impl Scalar for f32 {
    fn from_ratio(n: i64, d: i64) -> Self {
        (n as f64 / d as f64) as f32
    }
    fn normalization_tolerance() -> Self {
        1e-5
    }
}

impl Scalar for Rational {
    fn from_ratio(n: i64, d: i64) -> Self {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }
    fn normalization_tolerance() -> Self {
        Self::zero()
    }
    fn abs_val(&self) -> Self {
        Signed::abs(self)
    }
}

/// Rational read from the shortest decimal that round-trips `v`, so `0.44`
/// maps to `11/25`; falls back to the exact binary value when that decimal
/// does not fit in 64 bits.
pub fn decimal_rational(v: f64) -> Option<Rational> {
    if !v.is_finite() {
        return None;
    }
    Rational::parse_label(&v.to_string()).or_else(|| num_traits::FromPrimitive::from_f64(v))
}

/// Sum in the given order; accumulation order is part of the contract.
pub fn ordered_sum<T: Scalar, I: IntoIterator<Item = T>>(it: I) -> T {
    it.into_iter().fold(T::zero(), |acc, v| acc + v)
}

pub(crate) fn odds<T: Scalar>(p: &T) -> T {
    p.clone() / (T::one() - p.clone())
}

pub(crate) fn is_unit_interval<T: Scalar>(v: &T) -> bool {
    *v >= T::zero() && *v <= T::one()
}
