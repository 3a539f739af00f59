//! Truncated power series in `z` and the Newton-identity conversions between
//! the coefficients of a polynomial and those of its logarithm.

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scalar::{Coeff, Rational};

/// Coefficients `c_0..=c_m` of a power series truncated at order `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSeries<S> {
    coeffs: Vec<S>,
}

pub type ExactSeries = TruncatedSeries<Rational>;
pub type FloatSeries = TruncatedSeries<f64>;

impl<S: Coeff> TruncatedSeries<S> {
    pub fn zero(order: usize) -> Self {
        TruncatedSeries { coeffs: vec![S::zero(); order + 1] }
    }

    pub fn one(order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = S::one();
        s
    }

    /// `c·z^k`, or the zero series when `k > order`.
    pub fn monomial(order: usize, k: usize, c: S) -> Self {
        let mut s = Self::zero(order);
        if k <= order {
            s.coeffs[k] = c;
        }
        s
    }

    /// Builds a series from coefficients, padding with zeros or truncating to `order`.
    pub fn from_coeffs(order: usize, mut coeffs: Vec<S>) -> Self {
        coeffs.resize(order + 1, S::zero());
        TruncatedSeries { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> S {
        self.coeffs.get(k).cloned().unwrap_or_else(S::zero)
    }

    pub fn set_coeff(&mut self, k: usize, c: S) {
        self.coeffs[k] = c;
    }

    pub fn into_coeffs(self) -> Vec<S> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Coeff::is_zero)
    }

    /// Index of the first non-zero coefficient, or `None` for the zero series.
    pub fn valuation(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| !c.is_zero())
    }

    /// Re-truncates (or zero-extends) to a new order.
    pub fn with_order(&self, order: usize) -> Self {
        Self::from_coeffs(order, self.coeffs.clone())
    }

    fn check_order(&self, other: &Self) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::validation(format!(
                "series orders differ: {} vs {}",
                self.order(),
                other.order()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.add(b)).collect();
        Ok(TruncatedSeries { coeffs })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.sub(b)).collect();
        Ok(TruncatedSeries { coeffs })
    }

    pub fn scale(&self, c: &S) -> Self {
        TruncatedSeries { coeffs: self.coeffs.iter().map(|a| a.mul(c)).collect() }
    }

    /// In-place `self += c·other`; orders must agree.
    pub fn add_scaled(&mut self, other: &Self, c: &S) {
        debug_assert_eq!(self.order(), other.order());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            if !b.is_zero() {
                a.add_assign(&b.mul(c));
            }
        }
    }

    /// Cauchy product truncated at the common order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_order(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        let m = self.order();
        let mut out = vec![S::zero(); m + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs[..=m - i].iter().enumerate() {
                if !b.is_zero() {
                    out[i + j].add_assign(&a.mul(b));
                }
            }
        }
        TruncatedSeries { coeffs: out }
    }

    /// Logarithm of a series with constant term 1.
    ///
    /// Solves `k e_k = Σ_{j=1..k} j p_j e_{k-j}` for `p_k`, the recurrence
    /// obtained by comparing coefficients in `Z' = Z · (log Z)'`.
    pub fn log_from_poly(&self) -> Result<Self> {
        if self.coeffs[0] != S::one() {
            return Err(Error::validation("log_from_poly needs constant term 1"));
        }
        let m = self.order();
        let e = &self.coeffs;
        let mut p = vec![S::zero(); m + 1];
        for k in 1..=m {
            let mut acc = S::zero();
            for j in 1..k {
                if !p[j].is_zero() && !e[k - j].is_zero() {
                    acc.add_assign(&p[j].mul(&e[k - j]).mul_i64(j as i64));
                }
            }
            p[k] = e[k].sub(&acc.div_i64(k as i64));
        }
        Ok(TruncatedSeries { coeffs: p })
    }

    /// Exponential of a series with constant term 0; inverse of [`Self::log_from_poly`].
    pub fn poly_from_log(&self) -> Result<Self> {
        if !self.coeffs[0].is_zero() {
            return Err(Error::validation("poly_from_log needs constant term 0"));
        }
        let m = self.order();
        let p = &self.coeffs;
        let mut e = vec![S::zero(); m + 1];
        e[0] = S::one();
        for k in 1..=m {
            let mut acc = S::zero();
            for j in 1..=k {
                if !p[j].is_zero() && !e[k - j].is_zero() {
                    acc.add_assign(&p[j].mul(&e[k - j]).mul_i64(j as i64));
                }
            }
            e[k] = acc.div_i64(k as i64);
        }
        Ok(TruncatedSeries { coeffs: e })
    }

    /// Horner evaluation at a complex point.
    pub fn evaluate(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c.to_f64())
    }

    pub fn evaluate_real(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c.to_f64())
    }

    /// Horner evaluation inside the coefficient ring.
    pub fn evaluate_exact(&self, z: &S) -> S {
        self.coeffs.iter().rev().fold(S::zero(), |acc, c| acc.mul(z).add(c))
    }

    pub fn to_float(&self) -> FloatSeries {
        TruncatedSeries { coeffs: self.coeffs.iter().map(Coeff::to_f64).collect() }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "order": self.order(),
            "coeffs": self.coeffs.iter().map(Coeff::to_json).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let order = v["order"]
            .as_u64()
            .ok_or_else(|| Error::validation("series JSON needs an integer \"order\""))? as usize;
        let raw = v["coeffs"]
            .as_array()
            .ok_or_else(|| Error::validation("series JSON needs a \"coeffs\" array"))?;
        if raw.len() != order + 1 {
            return Err(Error::validation(format!(
                "series of order {order} needs {} coefficients, got {}",
                order + 1,
                raw.len()
            )));
        }
        let coeffs = raw.iter().map(S::from_json).collect::<Result<Vec<_>>>()?;
        Ok(TruncatedSeries { coeffs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn exact(order: usize, cs: &[(i64, i64)]) -> ExactSeries {
        TruncatedSeries::from_coeffs(order, cs.iter().map(|&(n, d)| q(n, d)).collect())
    }

    #[test]
    fn products_truncate() {
        let a = exact(2, &[(1, 1), (1, 1)]);
        let b = exact(2, &[(1, 1), (-1, 1)]);
        assert_eq!(a.mul(&b).unwrap(), exact(2, &[(1, 1), (0, 1), (-1, 1)]));
        let c = exact(1, &[(1, 1), (1, 1)]);
        assert_eq!(c.mul(&c).unwrap(), exact(1, &[(1, 1), (2, 1)]));
        let z2 = ExactSeries::monomial(3, 2, q(1, 1));
        assert!(z2.mul(&z2).unwrap().is_zero());
    }

    #[test]
    fn mixed_orders_rejected() {
        let a = ExactSeries::one(2);
        let b = ExactSeries::one(3);
        assert!(a.mul(&b).is_err());
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn log_of_one_plus_z() {
        let p = exact(3, &[(1, 1), (1, 1)]).log_from_poly().unwrap();
        assert_eq!(p, exact(3, &[(0, 1), (1, 1), (-1, 2), (1, 3)]));
        assert!(ExactSeries::one(5).log_from_poly().unwrap().is_zero());
        let p2 = exact(3, &[(1, 1), (2, 1), (1, 1)]).log_from_poly().unwrap();
        assert_eq!(p2, exact(3, &[(0, 1), (2, 1), (-1, 1), (2, 3)]));
    }

    #[test]
    fn exp_inverts_log() {
        let p = exact(3, &[(0, 1), (1, 1), (-1, 2), (1, 3)]);
        assert_eq!(p.poly_from_log().unwrap(), exact(3, &[(1, 1), (1, 1)]));
        assert_eq!(ExactSeries::zero(4).poly_from_log().unwrap(), ExactSeries::one(4));
        // exp(3z) = Σ 3^k/k! z^k
        let e = exact(4, &[(0, 1), (3, 1)]).poly_from_log().unwrap();
        assert_eq!(e, exact(4, &[(1, 1), (3, 1), (9, 2), (9, 2), (27, 8)]));
    }

    #[test]
    fn log_requires_unit_constant() {
        assert!(exact(2, &[(2, 1)]).log_from_poly().is_err());
        assert!(exact(2, &[(1, 1)]).poly_from_log().is_err());
    }

    #[test]
    fn horner() {
        let s = exact(2, &[(1, 1), (1, 1), (1, 1)]);
        assert_eq!(s.evaluate(Complex64::new(1.0, 0.0)).re, 3.0);
        let partial = exact(3, &[(0, 1), (1, 1), (-1, 2), (1, 3)]);
        // 1/2 − 1/8 + 1/24 = 5/12, close to log(1.5)
        let v = partial.evaluate_real(0.5);
        assert!((v - 5.0 / 12.0).abs() < 1e-15);
        assert!((v - 1.5f64.ln()).abs() < 0.012);
        assert_eq!(s.evaluate_exact(&q(1, 2)), q(7, 4));
    }

    #[test]
    fn json_round_trip() {
        let s = exact(2, &[(1, 1), (-1, 2)]);
        let v = s.to_json();
        assert_eq!(v["coeffs"][1], "-1/2");
        assert_eq!(ExactSeries::from_json(&v).unwrap(), s);
        let f = FloatSeries::from_coeffs(1, vec![1.0, 0.25]);
        assert_eq!(FloatSeries::from_json(&f.to_json()).unwrap(), f);
    }
}
