//! Number types the geometric kernels are generic over.
//!
//! Every metric model is written once against [`Scalar`] and evaluated with
//! plain `f64`, forward-mode [`Dual`] numbers, or truncated Taylor
//! [`Series`](crate::series::Series), which is how exact derivatives and
//! jets are obtained without symbolic algebra.

use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, Mul, Neg, Sub};

pub trait Scalar:
    Clone + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    /// A constant living in the same algebra as `self`.
    fn lift(&self, c: f64) -> Self;
    /// The real part (constant term).
    fn value(&self) -> f64;
    fn scale(&self, c: f64) -> Self;
    fn shift(&self, c: f64) -> Self;
    fn recip(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, k: i32) -> Self;

    fn zero_like(&self) -> Self {
        self.lift(0.0)
    }
    fn div(&self, other: &Self) -> Self {
        self.clone() * other.recip()
    }
    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> f64 {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn scale(&self, c: f64) -> f64 {
        self * c
    }
    fn shift(&self, c: f64) -> f64 {
        self + c
    }
    fn recip(&self) -> f64 {
        1.0 / self
    }
    fn sqrt(&self) -> f64 {
        libm::sqrt(*self)
    }
    fn powi(&self, k: i32) -> f64 {
        libm::pow(*self, k as f64)
    }
}

/// Forward-mode dual number with a runtime number of directions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual<S> {
    pub v: S,
    pub d: Vec<S>,
}

impl<S: Scalar> Dual<S> {
    pub fn constant(v: S, dirs: usize) -> Self {
        let z = v.zero_like();
        Dual { v, d: alloc::vec![z; dirs] }
    }

    /// `v` seeded with unit derivative in direction `i`.
    pub fn variable(v: S, dirs: usize, i: usize) -> Self {
        let mut out = Self::constant(v, dirs);
        out.d[i] = out.v.lift(1.0);
        out
    }

    fn chain(&self, v: S, dv: S) -> Self {
        Dual { v, d: self.d.iter().map(|x| x.clone() * dv.clone()).collect() }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { v: self.v + o.v, d: self.d.into_iter().zip(o.d).map(|(a, b)| a + b).collect() }
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual { v: self.v - o.v, d: self.d.into_iter().zip(o.d).map(|(a, b)| a - b).collect() }
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    // product rule
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, o: Self) -> Self {
        let d =
            self.d.iter().zip(o.d.iter()).map(|(a, b)| a.clone() * o.v.clone() + self.v.clone() * b.clone()).collect();
        Dual { v: self.v * o.v, d }
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { v: -self.v, d: self.d.into_iter().map(|a| -a).collect() }
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn lift(&self, c: f64) -> Self {
        Dual::constant(self.v.lift(c), self.d.len())
    }
    fn value(&self) -> f64 {
        self.v.value()
    }
    fn scale(&self, c: f64) -> Self {
        Dual { v: self.v.scale(c), d: self.d.iter().map(|a| a.scale(c)).collect() }
    }
    fn shift(&self, c: f64) -> Self {
        Dual { v: self.v.shift(c), d: self.d.clone() }
    }
    fn recip(&self) -> Self {
        let inv = self.v.recip();
        let dv = -(inv.clone() * inv.clone());
        self.chain(inv, dv)
    }
    fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        let dv = s.recip().scale(0.5);
        self.chain(s, dv)
    }
    fn powi(&self, k: i32) -> Self {
        if k == 0 {
            return self.lift(1.0);
        }
        let pm1 = self.v.powi(k - 1);
        let p = pm1.clone() * self.v.clone();
        self.chain(p, pm1.scale(k as f64))
    }
}

/// Generalized binomial coefficients `C(p, j)` for `j = 0..=m`.
pub(crate) fn binomial_series(p: f64, m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m + 1);
    let mut c = 1.0;
    for j in 0..=m {
        out.push(c);
        c *= (p - j as f64) / (j as f64 + 1.0);
    }
    out
}
