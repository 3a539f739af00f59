//! Coefficient rings for truncated series: exact rationals and `f64`.
//!
//! [`Rational`] keeps values that fit in `i64/i64` unboxed and only falls back
//! to `BigRational` on overflow. Contour and hard-core weights are small
//! integers, so almost all cluster-sum arithmetic stays on the fast path.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Arithmetic needed by series, cluster sums and Newton identities.
pub trait Coeff: Clone + fmt::Debug + PartialEq + Send + Sync + 'static {
    /// True for the exact backend.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_i128(v: i128) -> Self;
    fn from_ratio(num: i64, den: i64) -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn mul_i64(&self, k: i64) -> Self;
    fn div_i64(&self, k: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn to_json(&self) -> serde_json::Value;
    fn from_json(v: &serde_json::Value) -> Result<Self>;

    fn add_assign(&mut self, other: &Self) {
        *self = self.add(other);
    }
}

impl Coeff for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_i128(v: i128) -> Self {
        v as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn mul_i64(&self, k: i64) -> Self {
        self * k as f64
    }
    fn div_i64(&self, k: i64) -> Self {
        self / k as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn to_json(&self) -> serde_json::Value {
        serde_json::json!(self)
    }
    fn from_json(v: &serde_json::Value) -> Result<Self> {
        v.as_f64()
            .ok_or_else(|| Error::validation(format!("expected a float coefficient, got {v}")))
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
}

/// Exact rational number, always stored in lowest terms with positive denominator.
#[derive(Clone)]
pub struct Rational(Repr);

#[derive(Clone)]
enum Repr {
    Small(i64, i64),
    Big(Box<BigRational>),
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Self::from_i128_pair(num as i128, den as i128)
    }

    pub fn from_big(r: BigRational) -> Self {
        let n = r.numer().to_i64();
        let d = r.denom().to_i64();
        match (n, d) {
            (Some(n), Some(d)) => Rational(Repr::Small(n, d)),
            _ => Rational(Repr::Big(Box::new(r))),
        }
    }

    pub fn to_big(&self) -> BigRational {
        match &self.0 {
            Repr::Small(n, d) => BigRational::new_raw(BigInt::from(*n), BigInt::from(*d)),
            Repr::Big(b) => (**b).clone(),
        }
    }

    pub fn numer(&self) -> BigInt {
        match &self.0 {
            Repr::Small(n, _) => BigInt::from(*n),
            Repr::Big(b) => b.numer().clone(),
        }
    }

    pub fn denom(&self) -> BigInt {
        match &self.0 {
            Repr::Small(_, d) => BigInt::from(*d),
            Repr::Big(b) => b.denom().clone(),
        }
    }

    pub fn is_integer(&self) -> bool {
        match &self.0 {
            Repr::Small(_, d) => *d == 1,
            Repr::Big(b) => b.is_integer(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match &self.0 {
            Repr::Small(n, _) => *n < 0,
            Repr::Big(b) => b.is_negative(),
        }
    }

    /// Parses a decimal literal such as `0.05` or `1e-3` exactly.
    pub fn from_decimal_str(s: &str) -> Result<Self> {
        let bad = || Error::validation(format!("not a decimal number: {s:?}"));
        let s = s.trim();
        let (mantissa, exp) = match s.find(['e', 'E']) {
            Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
            None => (s, 0),
        };
        let (neg, mantissa) = match mantissa.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int_part, frac_part) = match mantissa.find('.') {
            Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        if !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let mut num: BigInt = digits.parse().map_err(|_| bad())?;
        if neg {
            num = -num;
        }
        let shift = exp - frac_part.len() as i32;
        let ten = BigInt::from(10);
        let r = if shift >= 0 {
            BigRational::from_integer(num * num_traits::pow(ten, shift as usize))
        } else {
            BigRational::new(num, num_traits::pow(ten, (-shift) as usize))
        };
        Ok(Self::from_big(r))
    }

    fn from_i128_pair(mut n: i128, mut d: i128) -> Self {
        if d < 0 {
            n = -n;
            d = -d;
        }
        let g = n.gcd(&d);
        if g > 1 {
            n /= g;
            d /= g;
        }
        match (i64::try_from(n), i64::try_from(d)) {
            (Ok(n), Ok(d)) => Rational(Repr::Small(n, d)),
            _ => Rational(Repr::Big(Box::new(BigRational::new_raw(
                BigInt::from(n),
                BigInt::from(d),
            )))),
        }
    }

    fn big_op(&self, other: &Self, f: impl Fn(&BigRational, &BigRational) -> BigRational) -> Self {
        Self::from_big(f(&self.to_big(), &other.to_big()))
    }
}

impl Coeff for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Rational(Repr::Small(0, 1))
    }
    fn one() -> Self {
        Rational(Repr::Small(1, 1))
    }
    fn from_i64(v: i64) -> Self {
        Rational(Repr::Small(v, 1))
    }
    fn from_i128(v: i128) -> Self {
        Self::from_i128_pair(v, 1)
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(num, den)
    }
    fn is_zero(&self) -> bool {
        matches!(self.0, Repr::Small(0, _))
    }

    fn add(&self, other: &Self) -> Self {
        if let (Repr::Small(a, b), Repr::Small(c, d)) = (&self.0, &other.0) {
            let (a, b, c, d) = (*a as i128, *b as i128, *c as i128, *d as i128);
            if b == d {
                return Self::from_i128_pair(a + c, b);
            }
            if let Some(n) = (a * d).checked_add(c * b) {
                return Self::from_i128_pair(n, b * d);
            }
        }
        self.big_op(other, |x, y| x + y)
    }

    fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    fn mul(&self, other: &Self) -> Self {
        if let (Repr::Small(a, b), Repr::Small(c, d)) = (&self.0, &other.0) {
            let (a, b, c, d) = (*a as i128, *b as i128, *c as i128, *d as i128);
            if b == 1 && d == 1 {
                return Self::from_i128_pair(a * c, 1);
            }
            let g1 = a.gcd(&d).max(1);
            let g2 = c.gcd(&b).max(1);
            let n = (a / g1).checked_mul(c / g2);
            let m = (b / g2).checked_mul(d / g1);
            if let (Some(n), Some(m)) = (n, m) {
                return Self::from_i128_pair(n, m);
            }
        }
        self.big_op(other, |x, y| x * y)
    }

    fn neg(&self) -> Self {
        match &self.0 {
            Repr::Small(n, d) => Self::from_i128_pair(-(*n as i128), *d as i128),
            Repr::Big(b) => Self::from_big(-(**b).clone()),
        }
    }

    fn mul_i64(&self, k: i64) -> Self {
        self.mul(&Rational::from_i64(k))
    }

    fn div_i64(&self, k: i64) -> Self {
        assert!(k != 0, "division by zero");
        self.mul(&Rational::new(1, k))
    }

    fn to_f64(&self) -> f64 {
        match &self.0 {
            Repr::Small(n, d) => *n as f64 / *d as f64,
            Repr::Big(b) => b.to_f64().unwrap_or(f64::NAN),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::Value::String(self.to_string())
    }

    fn from_json(v: &serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::String(s) => s.parse(),
            serde_json::Value::Number(n) if n.is_i64() => Ok(Rational::from_i64(n.as_i64().unwrap())),
            _ => Err(Error::validation(format!("expected \"num/den\" coefficient, got {v}"))),
        }
    }
}

impl PartialEq for Rational {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (Repr::Small(a, b), Repr::Small(c, d)) => a == c && b == d,
            (Repr::Big(x), Repr::Big(y)) => x == y,
            _ => false,
        }
    }
}

impl Eq for Rational {}

impl Hash for Rational {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match &self.0 {
            Repr::Small(n, d) => {
                0u8.hash(state);
                n.hash(state);
                d.hash(state);
            }
            Repr::Big(b) => {
                1u8.hash(state);
                b.hash(state);
            }
        }
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        if let (Repr::Small(a, b), Repr::Small(c, d)) = (&self.0, &other.0) {
            return (*a as i128 * *d as i128).cmp(&(*c as i128 * *b as i128));
        }
        self.to_big().cmp(&other.to_big())
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Small(n, d) => write!(f, "{n}/{d}"),
            Repr::Big(b) => write!(f, "{}/{}", b.numer(), b.denom()),
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Rational {
    type Err = Error;

    /// Accepts `"n"`, `"n/d"` or a decimal literal.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let bad = || Error::validation(format!("bad rational {s:?}"));
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            return Ok(Self::from_big(BigRational::new(n, d)));
        }
        Self::from_decimal_str(s)
    }
}

impl From<i64> for Rational {
    fn from(v: i64) -> Self {
        Rational::from_i64(v)
    }
}

impl Default for Rational {
    fn default() -> Self {
        Rational::zero()
    }
}

impl One for Rational {
    fn one() -> Self {
        <Rational as Coeff>::one()
    }
}

impl std::ops::Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Coeff::mul(&self, &rhs)
    }
}

impl std::ops::Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Coeff::add(&self, &rhs)
    }
}

impl std::ops::Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Coeff::sub(&self, &rhs)
    }
}

impl std::ops::Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        assert!(!rhs.is_zero(), "division by zero");
        self.big_op(&rhs, |x, y| x / y)
    }
}

impl std::ops::Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Coeff::neg(&self)
    }
}

impl std::iter::Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        iter.fold(Rational::zero(), |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_arithmetic_reduces() {
        let a = Rational::new(2, 4);
        assert_eq!(a.to_string(), "1/2");
        assert_eq!(a.add(&Rational::new(1, 3)).to_string(), "5/6");
        assert_eq!(Rational::new(3, -6).to_string(), "-1/2");
        assert_eq!(a.mul(&Rational::new(4, 3)).to_string(), "2/3");
    }

    #[test]
    fn overflow_promotes_to_big_and_back() {
        let big = Rational::from_i64(i64::MAX).mul(&Rational::from_i64(i64::MAX));
        assert!(matches!(big.0, Repr::Big(_)));
        let back = big.mul(&Rational::new(1, i64::MAX));
        assert_eq!(back, Rational::from_i64(i64::MAX));
        assert!(matches!(back.0, Repr::Small(..)));
    }

    #[test]
    fn parse_forms() {
        assert_eq!("3/9".parse::<Rational>().unwrap(), Rational::new(1, 3));
        assert_eq!("0.05".parse::<Rational>().unwrap(), Rational::new(1, 20));
        assert_eq!("1e-3".parse::<Rational>().unwrap(), Rational::new(1, 1000));
        assert_eq!("-2.5E1".parse::<Rational>().unwrap(), Rational::from_i64(-25));
        assert!("abc".parse::<Rational>().is_err());
    }

    #[test]
    fn ordering_matches_float() {
        let xs = [Rational::new(-1, 2), Rational::new(1, 3), Rational::new(2, 5)];
        for a in &xs {
            for b in &xs {
                assert_eq!(a.cmp(b), a.to_f64().partial_cmp(&b.to_f64()).unwrap());
            }
        }
    }
}
