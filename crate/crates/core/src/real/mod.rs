//! Scalar arithmetic used throughout the crate.
//!
//! Every non-integer quantity is carried by a type implementing [`Real`]. Two
//! carriers exist: hardware `f64` (exactly 53 significand bits) and
//! [`ExtReal`], an MPFR-backed binary float whose significand width is chosen
//! at run time and whose every operation is correctly rounded at that width.
//!
//! Generic numerical kernels (the eigensolvers, density matrices, entropies)
//! are written once against [`Real`] using in-place operations so the MPFR
//! path never allocates inside inner loops.

mod ext;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub use ext::ExtReal;

/// Significand width in bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Precision(u32);

impl Precision {
    pub const DOUBLE: Precision = Precision(53);
    pub const QUAD: Precision = Precision(113);

    pub fn new(bits: u32) -> Result<Self> {
        if bits < 53 {
            return Err(domain(format!("precision must be at least 53 bits, got {bits}")));
        }
        if bits > 1 << 16 {
            return Err(domain(format!("precision of {bits} bits is unreasonably large")));
        }
        Ok(Precision(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// `2^(e - bits)`, the shape of every tolerance in the crate.
    pub fn ulp_scale(self, e: i32) -> f64 {
        (2.0f64).powi(e - self.0 as i32)
    }

    /// Number of decimal digits needed to round-trip a value of this width.
    pub fn decimal_digits(self) -> usize {
        (self.0 as f64 * std::f64::consts::LOG10_2).ceil() as usize + 1
    }

    pub fn doubled(self) -> Precision {
        Precision(self.0 * 2)
    }
}

impl Default for Precision {
    fn default() -> Self {
        Precision::QUAD
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} bits", self.0)
    }
}

/// Arithmetic carrier for all non-integer quantities.
///
/// Constructors take a [`Precision`]; `f64` ignores it. Binary operations keep
/// the precision of `self`.
pub trait Real: Clone + Send + Sync + PartialOrd + fmt::Debug + fmt::Display + 'static {
    fn from_f64(x: f64, prec: Precision) -> Self;
    fn from_i64(x: i64, prec: Precision) -> Self;
    /// `num / den`, correctly rounded.
    fn from_ratio(num: i128, den: i128, prec: Precision) -> Self;
    fn parse_decimal(s: &str, prec: Precision) -> Result<Self>;

    fn zero(prec: Precision) -> Self {
        Self::from_i64(0, prec)
    }
    fn one(prec: Precision) -> Self {
        Self::from_i64(1, prec)
    }
    fn pi(prec: Precision) -> Self;
    fn ln2(prec: Precision) -> Self;

    fn precision(&self) -> Precision;
    fn to_f64(&self) -> f64;
    /// Decimal string carrying the full significand.
    fn to_decimal(&self) -> String;

    fn assign(&mut self, other: &Self);
    fn add_assign(&mut self, other: &Self);
    fn sub_assign(&mut self, other: &Self);
    fn mul_assign(&mut self, other: &Self);
    fn div_assign(&mut self, other: &Self);
    /// `self += a * b`
    fn mul_add_assign(&mut self, a: &Self, b: &Self);
    /// `self -= a * b`
    fn mul_sub_assign(&mut self, a: &Self, b: &Self);
    fn neg_assign(&mut self);
    fn abs_assign(&mut self);
    fn sqrt_assign(&mut self);
    fn ln_assign(&mut self);
    fn log2_assign(&mut self);
    fn exp_assign(&mut self);
    fn powi_assign(&mut self, e: i32);
    /// `(sin self, cos self)`
    fn sin_cos(&self) -> (Self, Self);

    fn is_zero(&self) -> bool;
    fn is_negative(&self) -> bool;

    fn add(&self, other: &Self) -> Self {
        let mut r = self.clone();
        r.add_assign(other);
        r
    }
    fn sub(&self, other: &Self) -> Self {
        let mut r = self.clone();
        r.sub_assign(other);
        r
    }
    fn mul(&self, other: &Self) -> Self {
        let mut r = self.clone();
        r.mul_assign(other);
        r
    }
    fn div(&self, other: &Self) -> Self {
        let mut r = self.clone();
        r.div_assign(other);
        r
    }
    fn neg(&self) -> Self {
        let mut r = self.clone();
        r.neg_assign();
        r
    }
    fn abs(&self) -> Self {
        let mut r = self.clone();
        r.abs_assign();
        r
    }
    fn sqrt(&self) -> Self {
        let mut r = self.clone();
        r.sqrt_assign();
        r
    }
    fn ln(&self) -> Self {
        let mut r = self.clone();
        r.ln_assign();
        r
    }
    fn log2(&self) -> Self {
        let mut r = self.clone();
        r.log2_assign();
        r
    }
    fn exp(&self) -> Self {
        let mut r = self.clone();
        r.exp_assign();
        r
    }
    fn powi(&self, e: i32) -> Self {
        let mut r = self.clone();
        r.powi_assign(e);
        r
    }
    fn square(&self) -> Self {
        self.mul(self)
    }
    /// A value of the same precision as `self`.
    fn lift_f64(&self, x: f64) -> Self {
        Self::from_f64(x, self.precision())
    }
    fn lift_i64(&self, x: i64) -> Self {
        Self::from_i64(x, self.precision())
    }
    fn max_of(&self, other: &Self) -> Self {
        if other > self {
            other.clone()
        } else {
            self.clone()
        }
    }

    /// `sum x_i y_i`
    fn dot(x: &[Self], y: &[Self]) -> Self {
        let prec = x.first().map_or(Precision::DOUBLE, Real::precision);
        let mut acc = Self::zero(prec);
        for (a, b) in x.iter().zip(y) {
            acc.mul_add_assign(a, b);
        }
        acc
    }

    /// `y += a x`
    fn axpy(y: &mut [Self], a: &Self, x: &[Self]) {
        for (yi, xi) in y.iter_mut().zip(x) {
            yi.mul_add_assign(a, xi);
        }
    }
}

impl Real for f64 {
    fn from_f64(x: f64, _: Precision) -> Self {
        x
    }
    fn from_i64(x: i64, _: Precision) -> Self {
        x as f64
    }
    fn from_ratio(num: i128, den: i128, prec: Precision) -> Self {
        ExtReal::from_ratio(num, den, prec.max(Precision::QUAD)).to_f64()
    }
    fn parse_decimal(s: &str, _: Precision) -> Result<Self> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| crate::Error::Format(format!("bad decimal {s:?}: {e}")))
    }
    fn pi(_: Precision) -> Self {
        std::f64::consts::PI
    }
    fn ln2(_: Precision) -> Self {
        std::f64::consts::LN_2
    }
    fn precision(&self) -> Precision {
        Precision::DOUBLE
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn to_decimal(&self) -> String {
        format!("{:.16e}", self)
    }
    #[inline]
    fn assign(&mut self, other: &Self) {
        *self = *other;
    }
    #[inline]
    fn add_assign(&mut self, other: &Self) {
        *self += *other;
    }
    #[inline]
    fn sub_assign(&mut self, other: &Self) {
        *self -= *other;
    }
    #[inline]
    fn mul_assign(&mut self, other: &Self) {
        *self *= *other;
    }
    #[inline]
    fn div_assign(&mut self, other: &Self) {
        *self /= *other;
    }
    #[inline]
    fn mul_add_assign(&mut self, a: &Self, b: &Self) {
        *self += *a * *b;
    }
    #[inline]
    fn mul_sub_assign(&mut self, a: &Self, b: &Self) {
        *self -= *a * *b;
    }
    fn neg_assign(&mut self) {
        *self = -*self;
    }
    fn abs_assign(&mut self) {
        *self = f64::abs(*self);
    }
    fn sqrt_assign(&mut self) {
        *self = f64::sqrt(*self);
    }
    fn ln_assign(&mut self) {
        *self = f64::ln(*self);
    }
    fn log2_assign(&mut self) {
        *self = f64::log2(*self);
    }
    fn exp_assign(&mut self) {
        *self = f64::exp(*self);
    }
    fn powi_assign(&mut self, e: i32) {
        *self = f64::powi(*self, e);
    }
    fn sin_cos(&self) -> (Self, Self) {
        f64::sin_cos(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_negative(&self) -> bool {
        *self < 0.0
    }

    fn dot(x: &[f64], y: &[f64]) -> f64 {
        // Four independent partial sums let the loop vectorize; the order is
        // fixed so results stay bit-reproducible.
        let mut acc = [0.0f64; 4];
        let xc = x.chunks_exact(4);
        let yc = y.chunks_exact(4);
        let (xr, yr) = (xc.remainder(), yc.remainder());
        for (a, b) in xc.zip(yc) {
            acc[0] += a[0] * b[0];
            acc[1] += a[1] * b[1];
            acc[2] += a[2] * b[2];
            acc[3] += a[3] * b[3];
        }
        let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        for (a, b) in xr.iter().zip(yr) {
            s += a * b;
        }
        s
    }

    fn axpy(y: &mut [f64], a: &f64, x: &[f64]) {
        let a = *a;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a * xi;
        }
    }
}

/// Complex number over a [`Real`] carrier; just enough for exponential sums
/// and the FFT.
#[derive(Clone, Debug, PartialEq)]
pub struct Complex<T> {
    pub re: T,
    pub im: T,
}

impl<T: Real> Complex<T> {
    pub fn zero(prec: Precision) -> Self {
        Complex { re: T::zero(prec), im: T::zero(prec) }
    }

    /// `e^{2 pi i x}` for `x = num / den`, with the argument reduced exactly
    /// into `[0, 1)` before any rounding happens.
    pub fn unit_root(num: u128, den: u128, prec: Precision) -> Self {
        let r = num % den;
        // Fold into [-1/2, 1/2] so the trigonometric argument stays small.
        let (r, negate) = if 2 * r > den { (den - r, true) } else { (r, false) };
        let mut angle = T::pi(prec);
        angle.mul_assign(&T::from_ratio(2 * r as i128, den as i128, prec));
        let (mut s, c) = angle.sin_cos();
        if negate {
            s.neg_assign();
        }
        Complex { re: c, im: s }
    }

    pub fn norm_sqr(&self) -> T {
        let mut r = self.re.square();
        r.mul_add_assign(&self.im, &self.im);
        r
    }

    pub fn add_assign(&mut self, o: &Self) {
        self.re.add_assign(&o.re);
        self.im.add_assign(&o.im);
    }

    pub fn sub_assign(&mut self, o: &Self) {
        self.re.sub_assign(&o.re);
        self.im.sub_assign(&o.im);
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut re = self.re.mul(&o.re);
        re.mul_sub_assign(&self.im, &o.im);
        let mut im = self.re.mul(&o.im);
        im.mul_add_assign(&self.im, &o.re);
        Complex { re, im }
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Debug)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
    scratch: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new(prec: Precision) -> Self {
        CompensatedSum { sum: T::zero(prec), carry: T::zero(prec), scratch: T::zero(prec) }
    }

    pub fn add(&mut self, x: &T) {
        // t = sum + x
        self.scratch.assign(&self.sum);
        self.scratch.add_assign(x);
        if self.sum.abs() >= x.abs() {
            // carry += (sum - t) + x
            let mut d = self.sum.clone();
            d.sub_assign(&self.scratch);
            d.add_assign(x);
            self.carry.add_assign(&d);
        } else {
            let mut d = x.clone();
            d.sub_assign(&self.scratch);
            d.add_assign(&self.sum);
            self.carry.add_assign(&d);
        }
        self.sum.assign(&self.scratch);
    }

    pub fn value(&self) -> T {
        self.sum.add(&self.carry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_gate() {
        assert!(Precision::new(52).is_err());
        assert_eq!(Precision::new(113).unwrap(), Precision::QUAD);
        assert_eq!(Precision::QUAD.decimal_digits(), 36);
    }

    #[test]
    fn unit_root_quarter_turns() {
        let p = Precision::QUAD;
        let z: Complex<ExtReal> = Complex::unit_root(1, 4, p);
        assert!(z.re.abs().to_f64() < 1e-33);
        assert_eq!(z.im.to_f64(), 1.0);
        let z: Complex<ExtReal> = Complex::unit_root(7, 4, p);
        assert_eq!(z.im.to_f64(), -1.0);
        let z: Complex<f64> = Complex::unit_root(1, 3, Precision::DOUBLE);
        assert!((z.re + 0.5).abs() < 1e-15);
        assert!((z.im - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::<f64>::new(Precision::DOUBLE);
        s.add(&1e16);
        for _ in 0..10 {
            s.add(&1.0);
        }
        s.add(&-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn f64_dot_matches_naive() {
        let x: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = (0..37).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let naive: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((f64::dot(&x, &y) - naive).abs() < 1e-12);
    }
}
