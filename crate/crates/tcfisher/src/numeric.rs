//! Scalar arithmetic backends.
//!
//! Every quantity in the solver is generic over [`Scalar`], which has two
//! implementations with different equality contracts:
//!
//! * [`Exact`]: arbitrary-precision rationals. Comparisons are exact; the
//!   tolerance argument is ignored. All prices, allocations and surpluses
//!   stay rational as long as the inputs and epsilon are rational, so this
//!   backend is the reference semantics.
//! * `f64`: IEEE double precision. Two values are considered equal when
//!   `|a - b| <= tol * max(1, |a|, |b|)`.
//!
//! Number literals in instance files are parsed losslessly: `"0.2"` becomes
//! the rational 1/5, `"3/7"` stays 3/7. The float backend parses through the
//! same rational path and rounds once at the end.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision rational scalar.
pub type Exact = BigRational;

/// Which scalar backend a computation runs under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    Exact,
    #[default]
    Float64,
}

impl fmt::Display for NumericMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericMode::Exact => write!(f, "exact"),
            NumericMode::Float64 => write!(f, "float64"),
        }
    }
}

impl std::str::FromStr for NumericMode {
    type Err = NumberParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(NumericMode::Exact),
            "float64" | "float" | "f64" => Ok(NumericMode::Float64),
            other => Err(NumberParseError::BadMode(other.to_string())),
        }
    }
}

/// Default comparison tolerance for the float backend.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumberParseError {
    #[error("empty number literal")]
    Empty,
    #[error("invalid number literal `{0}`")]
    BadLiteral(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("unknown numeric mode `{0}` (expected `exact` or `float64`)")]
    BadMode(String),
}

/// The scalar contract shared by both arithmetic backends.
pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// True when comparisons are exact (rational backend).
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(v: i64) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;

    /// Parse a decimal literal (`"1.25"`, `"-3"`, `"2e-4"`) or a rational
    /// literal (`"a/b"`).
    fn parse_number(text: &str) -> Result<Self, NumberParseError>;

    fn to_f64(&self) -> f64;

    /// Backend equality: exact for rationals, relative tolerance for floats.
    fn approx_eq(&self, other: &Self, tol: f64) -> bool;

    /// Three-way compare of `a/b` against `c/d` (`b, d > 0`). Backends may
    /// avoid forming the quotients; the rational backend cross-multiplies
    /// without normalizing, which skips two gcd reductions.
    fn ratio_cmp(a: &Self, b: &Self, c: &Self, d: &Self) -> Option<std::cmp::Ordering> {
        (a.clone() / b.clone()).partial_cmp(&(c.clone() / d.clone()))
    }

    /// Three-way compare of the products `x * y` against `v * w`
    /// (`y, w >= 0`), again without normalizing on the rational backend.
    fn product_cmp(x: &Self, y: &Self, v: &Self, w: &Self) -> Option<std::cmp::Ordering> {
        (x.clone() * y.clone()).partial_cmp(&(v.clone() * w.clone()))
    }

    fn approx_le(&self, other: &Self, tol: f64) -> bool {
        self <= other || self.approx_eq(other, tol)
    }

    fn approx_ge(&self, other: &Self, tol: f64) -> bool {
        self >= other || self.approx_eq(other, tol)
    }

    fn is_zero(&self) -> bool;

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }

    /// Canonical text form, stable across runs: `num/den` for rationals,
    /// shortest round-trip decimal for floats.
    fn render(&self) -> String {
        format!("{self}")
    }
}

impl Scalar for Exact {
    const EXACT: bool = true;

    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }

    fn one() -> Self {
        <BigRational as One>::one()
    }

    fn from_int(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn parse_number(text: &str) -> Result<Self, NumberParseError> {
        parse_rational(text)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn approx_eq(&self, other: &Self, _tol: f64) -> bool {
        self == other
    }

    // a/b vs c/d == a*d vs c*b; raw products skip the gcd reductions, and
    // rational comparison itself is gcd-free
    fn ratio_cmp(a: &Self, b: &Self, c: &Self, d: &Self) -> Option<std::cmp::Ordering> {
        let left = BigRational::new_raw(a.numer() * d.numer(), a.denom() * d.denom());
        let right = BigRational::new_raw(c.numer() * b.numer(), c.denom() * b.denom());
        Some(left.cmp(&right))
    }

    fn product_cmp(x: &Self, y: &Self, v: &Self, w: &Self) -> Option<std::cmp::Ordering> {
        let left = BigRational::new_raw(x.numer() * y.numer(), x.denom() * y.denom());
        let right = BigRational::new_raw(v.numer() * w.numer(), v.denom() * w.denom());
        Some(left.cmp(&right))
    }

    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }

    fn one() -> Self {
        1.0
    }

    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn parse_number(text: &str) -> Result<Self, NumberParseError> {
        parse_rational(text).map(|q| ToPrimitive::to_f64(&q).unwrap_or(f64::NAN))
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let scale = 1f64.max(self.abs()).max(other.abs());
        (self - other).abs() <= tol * scale
    }

    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

/// Parse a number literal into an exact rational.
///
/// Accepted forms: integers (`-12`), decimals (`0.125`), scientific notation
/// (`2.5e-3`), and fractions of integers (`7/20`). Decimals map to the exact
/// fraction they denote.
pub fn parse_rational(text: &str) -> Result<BigRational, NumberParseError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(NumberParseError::Empty);
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| NumberParseError::BadLiteral(text.to_string()))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| NumberParseError::BadLiteral(text.to_string()))?;
        if Zero::is_zero(&d) {
            return Err(NumberParseError::ZeroDenominator(text.to_string()));
        }
        return Ok(BigRational::new(n, d));
    }

    // Decimal with optional exponent: [sign] digits [. digits] [e[sign]digits]
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = s[pos + 1..]
                .parse()
                .map_err(|_| NumberParseError::BadLiteral(text.to_string()))?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if frac_part.contains(['+', '-']) {
        return Err(NumberParseError::BadLiteral(text.to_string()));
    }
    let digits = format!("{int_part}{frac_part}");
    if digits.is_empty() || digits == "-" || digits == "+" {
        return Err(NumberParseError::BadLiteral(text.to_string()));
    }
    let unscaled: BigInt = digits
        .parse()
        .map_err(|_| NumberParseError::BadLiteral(text.to_string()))?;
    let shift = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let scale = num::pow::pow(ten, shift.unsigned_abs() as usize);
    Ok(if shift >= 0 {
        BigRational::from_integer(unscaled * scale)
    } else {
        BigRational::new(unscaled, scale)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_parse_losslessly() {
        let q = Exact::parse_number("0.2").unwrap();
        assert_eq!(q, Exact::from_ratio(1, 5));
        let q = Exact::parse_number("-1.25").unwrap();
        assert_eq!(q, Exact::from_ratio(-5, 4));
        let q = Exact::parse_number("2.5e-3").unwrap();
        assert_eq!(q, Exact::from_ratio(1, 400));
        let q = Exact::parse_number("1e2").unwrap();
        assert_eq!(q, Exact::from_int(100));
    }

    #[test]
    fn fractions_parse() {
        assert_eq!(Exact::parse_number("3/7").unwrap(), Exact::from_ratio(3, 7));
        assert_eq!(
            Exact::parse_number("-3/9").unwrap(),
            Exact::from_ratio(-1, 3)
        );
        assert!(matches!(
            Exact::parse_number("1/0"),
            Err(NumberParseError::ZeroDenominator(_))
        ));
    }

    #[test]
    fn bad_literals_are_rejected() {
        for bad in ["", "abc", "1.2.3", "1e", "--4", "1.-2"] {
            assert!(Exact::parse_number(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn float_backend_rounds_once() {
        let x = f64::parse_number("0.1").unwrap();
        assert_eq!(x, 0.1);
        let x = f64::parse_number("1/3").unwrap();
        assert!((x - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_equality_ignores_tolerance() {
        let a = Exact::from_ratio(1, 3);
        let b = Exact::from_ratio(1, 3) + Exact::from_ratio(1, 1_000_000_000_000);
        assert!(!a.approx_eq(&b, 1.0));
        assert!(a.approx_eq(&a.clone(), 0.0));
    }

    #[test]
    fn float_equality_is_relative() {
        assert!(1.0f64.approx_eq(&(1.0 + 5e-10), 1e-9));
        assert!(!1.0f64.approx_eq(&(1.0 + 5e-9), 1e-9));
        // scale picks up the magnitude of the operands
        assert!(1e6f64.approx_eq(&(1e6 + 1e-4), 1e-9));
    }
}
