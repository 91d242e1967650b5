//! Double-double arithmetic (about 106 significant bits).
//!
//! The constraint system for the perturbation mixes entries spanning more
//! than twenty decimal orders of magnitude, and the constraint rows at the
//! top vertex cancel terms of size 1e13 down to 1. Plain `f64` cannot hold
//! the coefficients accurately enough for that cancellation, so the solve and
//! the residual verification run in this type.
//!
//! Only the operations the solver needs are provided: the four field
//! operations, `sqrt`, `exp`, `sin`/`cos` and the hyperbolic pair.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };
    #[allow(clippy::approx_constant)]
    pub const PI: Self = Self {
        hi: 3.141_592_653_589_793,
        lo: 1.224_646_799_147_353_2e-16,
    };
    #[allow(clippy::approx_constant)]
    pub const LN2: Self = Self {
        hi: 0.693_147_180_559_945_3,
        lo: 2.319_046_813_846_299_6e-17,
    };

    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    /// Nearest `f64`.
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }

    /// Exact scaling by a power of two.
    pub fn ldexp(self, n: i32) -> Self {
        let f = 2f64.powi(n);
        Self {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    pub fn sqr(self) -> Self {
        self * self
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Self::ZERO;
        }
        let a = self.hi.sqrt();
        let a2 = Self::from_f64(a).sqr();
        let corr = (self - a2).hi / (2.0 * a);
        let (hi, lo) = two_sum(a, corr);
        Self { hi, lo }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Self::new(f64::INFINITY, 0.0);
        }
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        // x = n ln2 + r with |r| <= ln2 / 2, then exp(r) = exp(r / 4)^4.
        let n = (self.hi / Self::LN2.hi).round();
        let r = (self - Self::LN2.mul_f64(n)).ldexp(-2);
        let mut sum = Self::ONE;
        let mut term = Self::ONE;
        for i in 1..=30 {
            term = (term * r) / Self::from_f64(i as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..2 {
            sum = sum.sqr();
        }
        sum.ldexp(n as i32)
    }

    /// `(sin x, cos x)`.
    pub fn sin_cos(self) -> (Self, Self) {
        let half_pi = Self::PI.ldexp(-1);
        let n = (self.hi / half_pi.hi).round();
        let r = self - half_pi.mul_f64(n);
        let r2 = r.sqr();
        // Taylor series on |r| <= pi/4.
        let mut s = r;
        let mut c = Self::ONE;
        let mut ts = r;
        let mut tc = Self::ONE;
        for i in 1..=20 {
            let i = i as f64;
            ts = -(ts * r2) / Self::from_f64((2.0 * i) * (2.0 * i + 1.0));
            tc = -(tc * r2) / Self::from_f64((2.0 * i - 1.0) * (2.0 * i));
            s = s + ts;
            c = c + tc;
            if ts.hi.abs() < 1e-36 && tc.hi.abs() < 1e-36 {
                break;
            }
        }
        match (n as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }

    /// `(sinh x, cosh x)`.
    pub fn sinh_cosh(self) -> (Self, Self) {
        if self.hi.abs() < 0.5 {
            let r2 = self.sqr();
            let mut s = self;
            let mut c = Self::ONE;
            let mut ts = self;
            let mut tc = Self::ONE;
            for i in 1..=20 {
                let i = i as f64;
                ts = (ts * r2) / Self::from_f64((2.0 * i) * (2.0 * i + 1.0));
                tc = (tc * r2) / Self::from_f64((2.0 * i - 1.0) * (2.0 * i));
                s = s + ts;
                c = c + tc;
                if tc.hi.abs() < 1e-36 {
                    break;
                }
            }
            return (s, c);
        }
        let e = self.exp();
        let inv = Self::ONE / e;
        ((e - inv).ldexp(-1), (e + inv).ldexp(-1))
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let s2 = s2 + t1;
        let (s1, s2) = quick_two_sum(s1, s2);
        let s2 = s2 + t2;
        let (hi, lo) = quick_two_sum(s1, s2);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::from_f64(q3)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            o => o,
        }
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}{:+e}", self.hi, self.lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(x: f64) -> DoubleDouble {
        DoubleDouble::from_f64(x)
    }

    #[test]
    fn exp_matches_high_precision_reference() {
        // exp(50.27), split into hi/lo from a 50-digit reference
        let e = dd(50.27).exp();
        let exact = DoubleDouble::new(6.791779929969216e21, 98123.93257793535);
        assert!((e - exact).abs().hi / e.hi < 1e-28, "{e} vs {exact}");
    }

    #[test]
    fn cosh_matches_high_precision_reference() {
        // cosh(2 pi sqrt(192) / sqrt(3)), the largest entry of the canonical matrix
        let three = dd(3.0).sqrt();
        let arg = DoubleDouble::PI.mul_f64(2.0) * dd(192.0).sqrt() / three;
        let (_, c) = arg.sinh_cosh();
        let exact = DoubleDouble::new(3.380583487390931e21, -7164.310331106775);
        assert!((c - exact).abs().hi / c.hi < 1e-28, "{c} vs {exact}");
    }

    #[test]
    fn exp_log_roundtrip_small() {
        // exp(ln2) = 2
        let two = DoubleDouble::LN2.exp();
        assert!((two - dd(2.0)).abs().hi < 1e-30);
        let one = dd(0.0).exp();
        assert_eq!(one, DoubleDouble::ONE);
    }

    #[test]
    fn trig_identities() {
        for &x in &[0.3, 1.7, -2.9, 11.0, 43.98] {
            let (s, c) = dd(x).sin_cos();
            let one = s.sqr() + c.sqr();
            assert!((one - DoubleDouble::ONE).abs().hi < 1e-30, "x={x}");
            assert!((s.to_f64() - x.sin()).abs() < 1e-15);
            assert!((c.to_f64() - x.cos()).abs() < 1e-15);
        }
        // sin(6 pi) vanishes to double-double accuracy
        let (s, c) = DoubleDouble::PI.mul_f64(6.0).sin_cos();
        assert!(s.abs().hi < 1e-30);
        assert!((c - DoubleDouble::ONE).abs().hi < 1e-30);
    }

    #[test]
    fn hyperbolic_identity() {
        for &x in &[0.01, 0.4, 3.0, 25.0, 50.2] {
            let (s, c) = dd(x).sinh_cosh();
            let e = dd(x).exp();
            assert!(((c + s) - e).abs().hi < 1e-30 * e.hi, "x={x}");
            let one = c.sqr() - s.sqr();
            assert!((one - DoubleDouble::ONE).abs().hi < 1e-29 * c.hi * c.hi, "x={x}");
        }
    }

    #[test]
    fn sqrt_squares_back() {
        for &x in &[3.0, 32.0, 192.0, 0.5] {
            let r = dd(x).sqrt();
            assert!((r.sqr() - dd(x)).abs().hi < 1e-30 * x);
        }
    }
}
