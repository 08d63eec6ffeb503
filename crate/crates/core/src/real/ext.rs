use std::cmp::Ordering;
use std::fmt;

use rug::float::Constant;
use rug::ops::{NegAssign, PowAssign};
use rug::{Assign, Float, Integer, Rational};
use serde::{Serialize, Serializer};

use super::{Precision, Real};
use crate::error::{Error, Result};

/// Binary floating-point value with a run-time significand width.
///
/// Backed by MPFR; every operation is correctly rounded to nearest at the
/// width of the left operand.
#[derive(Clone, PartialEq)]
pub struct ExtReal(Float);

impl ExtReal {
    pub fn from_float(f: Float) -> Self {
        ExtReal(f)
    }

    pub fn as_float(&self) -> &Float {
        &self.0
    }

    pub fn into_float(self) -> Float {
        self.0
    }

    pub fn euler_gamma(prec: Precision) -> Self {
        ExtReal(Float::with_val(prec.bits(), Constant::Euler))
    }

    pub fn from_u128(x: u128, prec: Precision) -> Self {
        ExtReal(Float::with_val(prec.bits(), Integer::from(x)))
    }

    pub fn from_rational(r: &Rational, prec: Precision) -> Self {
        ExtReal(Float::with_val(prec.bits(), r))
    }

    /// Same value rounded to a different width.
    pub fn with_precision(&self, prec: Precision) -> Self {
        ExtReal(Float::with_val(prec.bits(), &self.0))
    }

    pub fn mul_u64(&mut self, v: u64) {
        self.0 *= v;
    }

    pub fn div_u64(&mut self, v: u64) {
        self.0 /= v;
    }

    /// Nearest integer, if representable.
    pub fn round_to_i128(&self) -> Option<i128> {
        self.0.to_integer().and_then(|i| i.to_i128())
    }
}

impl fmt::Debug for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.0.partial_cmp(&other.0)
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_decimal())
    }
}

impl Real for ExtReal {
    fn from_f64(x: f64, prec: Precision) -> Self {
        ExtReal(Float::with_val(prec.bits(), x))
    }

    fn from_i64(x: i64, prec: Precision) -> Self {
        ExtReal(Float::with_val(prec.bits(), x))
    }

    fn from_ratio(num: i128, den: i128, prec: Precision) -> Self {
        let r = Rational::from((Integer::from(num), Integer::from(den)));
        ExtReal(Float::with_val(prec.bits(), &r))
    }

    fn parse_decimal(s: &str, prec: Precision) -> Result<Self> {
        let p = Float::parse(s.trim()).map_err(|e| Error::Format(format!("bad decimal {s:?}: {e}")))?;
        Ok(ExtReal(Float::with_val(prec.bits(), p)))
    }

    fn pi(prec: Precision) -> Self {
        ExtReal(Float::with_val(prec.bits(), Constant::Pi))
    }

    fn ln2(prec: Precision) -> Self {
        ExtReal(Float::with_val(prec.bits(), Constant::Log2))
    }

    fn precision(&self) -> Precision {
        Precision::new(self.0.prec()).unwrap_or(Precision::DOUBLE)
    }

    fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    fn to_decimal(&self) -> String {
        let digits = self.precision().decimal_digits();
        self.0.to_string_radix(10, Some(digits))
    }

    #[inline]
    fn assign(&mut self, other: &Self) {
        self.0.assign(&other.0);
    }
    #[inline]
    fn add_assign(&mut self, other: &Self) {
        self.0 += &other.0;
    }
    #[inline]
    fn sub_assign(&mut self, other: &Self) {
        self.0 -= &other.0;
    }
    #[inline]
    fn mul_assign(&mut self, other: &Self) {
        self.0 *= &other.0;
    }
    #[inline]
    fn div_assign(&mut self, other: &Self) {
        self.0 /= &other.0;
    }
    #[inline]
    fn mul_add_assign(&mut self, a: &Self, b: &Self) {
        self.0 += &a.0 * &b.0;
    }
    #[inline]
    fn mul_sub_assign(&mut self, a: &Self, b: &Self) {
        self.0 -= &a.0 * &b.0;
    }
    fn neg_assign(&mut self) {
        self.0.neg_assign();
    }
    fn abs_assign(&mut self) {
        self.0.abs_mut();
    }
    fn sqrt_assign(&mut self) {
        self.0.sqrt_mut();
    }
    fn ln_assign(&mut self) {
        self.0.ln_mut();
    }
    fn log2_assign(&mut self) {
        self.0.log2_mut();
    }
    fn exp_assign(&mut self) {
        self.0.exp_mut();
    }
    fn powi_assign(&mut self, e: i32) {
        self.0.pow_assign(e);
    }
    fn sin_cos(&self) -> (Self, Self) {
        let (s, c) = self.0.clone().sin_cos(Float::new(self.0.prec()));
        (ExtReal(s), ExtReal(c))
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
    fn is_negative(&self) -> bool {
        self.0.is_sign_negative() && !self.0.is_zero()
    }

    // MPFR's fused multiply-add is much slower than a product into scratch
    // followed by a sum; the kernels below round twice per term.
    fn dot(x: &[Self], y: &[Self]) -> Self {
        let bits = x.first().map_or(Precision::DOUBLE.bits(), |v| v.0.prec());
        let mut acc = Float::new(bits);
        let mut tmp = Float::new(bits);
        for (a, b) in x.iter().zip(y) {
            tmp.assign(&a.0 * &b.0);
            acc += &tmp;
        }
        ExtReal(acc)
    }

    fn axpy(y: &mut [Self], a: &Self, x: &[Self]) {
        let mut tmp = Float::new(a.0.prec());
        for (yi, xi) in y.iter_mut().zip(x) {
            tmp.assign(&a.0 * &xi.0);
            yi.0 += &tmp;
        }
    }
}
