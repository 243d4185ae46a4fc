//! Truncated multivariate Taylor series.
//!
//! A [`Series`] stores the coefficients of all monomials up to the table's
//! maximal degree together with the degree up to which those coefficients are
//! trustworthy. Differentiation lowers that degree by one, which lets the
//! tensor calculus in [`crate::jets`] report exactly how many derivatives of a
//! derived quantity are still exact.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use crate::scalar::{binomial_series, Scalar};

pub const MAX_VARS: usize = 4;

pub type Exponent = [u8; MAX_VARS];

#[derive(Debug)]
pub struct MonomialTable {
    nvars: usize,
    order: usize,
    exps: Vec<Exponent>,
    degree_start: Vec<usize>,
    lookup: BTreeMap<Exponent, usize>,
    products: Vec<(u32, u32, u32)>,
    products_end: Vec<usize>,
    derivs: Vec<Vec<(u32, u32, f64)>>,
    parents: Vec<(u32, u8)>,
}

impl MonomialTable {
    pub fn new(nvars: usize, order: usize) -> Arc<Self> {
        assert!((1..=MAX_VARS).contains(&nvars), "1..=4 variables supported");
        let mut exps = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        for d in 0..=order {
            degree_start.push(exps.len());
            push_degree(nvars, d, 0, [0; MAX_VARS], &mut exps);
        }
        degree_start.push(exps.len());
        let lookup: BTreeMap<Exponent, usize> = exps.iter().enumerate().map(|(i, e)| (*e, i)).collect();

        let degree = |e: &Exponent| e.iter().map(|&v| v as usize).sum::<usize>();
        let mut products = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if degree(a) + degree(b) > order {
                    continue;
                }
                let mut c = [0u8; MAX_VARS];
                for v in 0..MAX_VARS {
                    c[v] = a[v] + b[v];
                }
                products.push((i as u32, j as u32, lookup[&c] as u32));
            }
        }
        products.sort_by_key(|&(_, _, k)| k);
        let mut products_end = vec![0; order + 1];
        for d in 0..=order {
            products_end[d] = products.partition_point(|&(_, _, k)| (k as usize) < degree_start[d + 1]);
        }

        let derivs = (0..nvars)
            .map(|v| {
                exps.iter()
                    .enumerate()
                    .filter(|(_, e)| e[v] > 0)
                    .map(|(i, e)| {
                        let mut lower = *e;
                        lower[v] -= 1;
                        (i as u32, lookup[&lower] as u32, e[v] as f64)
                    })
                    .collect()
            })
            .collect();

        // each monomial is a lower one times a single variable; the graded
        // order guarantees the parent comes first
        let parents = exps
            .iter()
            .map(|e| match e.iter().position(|&p| p > 0) {
                None => (0, 0),
                Some(v) => {
                    let mut lower = *e;
                    lower[v] -= 1;
                    (lookup[&lower] as u32, v as u8)
                }
            })
            .collect();

        Arc::new(MonomialTable { nvars, order, exps, degree_start, lookup, products, products_end, derivs, parents })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn len(&self) -> usize {
        self.exps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }
    pub fn exponent(&self, i: usize) -> &Exponent {
        &self.exps[i]
    }
    pub fn degree_of(&self, i: usize) -> usize {
        self.exps[i].iter().map(|&v| v as usize).sum()
    }
    /// Number of monomials of degree at most `d`.
    pub fn count_upto(&self, d: usize) -> usize {
        self.degree_start[d.min(self.order) + 1]
    }
    pub fn index(&self, e: &Exponent) -> Option<usize> {
        self.lookup.get(e).copied()
    }

    /// Values of every monomial of degree `<= d` at `y`.
    pub fn monomials(&self, y: &[f64], d: usize, out: &mut Vec<f64>) {
        let m = self.count_upto(d);
        out.clear();
        out.resize(m, 0.0);
        out[0] = 1.0;
        for i in 1..m {
            let (p, v) = self.parents[i];
            out[i] = out[p as usize] * y[v as usize];
        }
    }
}

fn push_degree(nvars: usize, remaining: usize, var: usize, cur: Exponent, out: &mut Vec<Exponent>) {
    if var + 1 == nvars {
        let mut e = cur;
        e[var] = remaining as u8;
        out.push(e);
        return;
    }
    for p in (0..=remaining).rev() {
        let mut e = cur;
        e[var] = p as u8;
        push_degree(nvars, remaining - p, var + 1, e, out);
    }
}

#[derive(Clone, Debug)]
pub struct Series {
    table: Arc<MonomialTable>,
    order: usize,
    coeffs: Vec<f64>,
}

impl Series {
    pub fn constant(table: &Arc<MonomialTable>, c: f64) -> Self {
        let mut coeffs = vec![0.0; table.len()];
        coeffs[0] = c;
        Series { table: table.clone(), order: table.order, coeffs }
    }

    /// The coordinate function `x_v + offset`.
    pub fn variable(table: &Arc<MonomialTable>, v: usize, offset: f64) -> Self {
        let mut s = Self::constant(table, offset);
        if table.order >= 1 {
            let mut e = [0u8; MAX_VARS];
            e[v] = 1;
            s.coeffs[table.lookup[&e]] = 1.0;
        }
        s
    }

    pub fn from_coeffs(table: &Arc<MonomialTable>, order: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), table.len());
        let mut s = Series { table: table.clone(), order: order.min(table.order), coeffs };
        s.truncate_invalid();
        s
    }

    pub fn table(&self) -> &Arc<MonomialTable> {
        &self.table
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
    pub fn coeff(&self, e: &Exponent) -> f64 {
        self.table.index(e).map_or(0.0, |i| self.coeffs[i])
    }

    fn truncate_invalid(&mut self) {
        let n = self.table.count_upto(self.order);
        for c in &mut self.coeffs[n..] {
            *c = 0.0;
        }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = self.order.min(order);
        self.truncate_invalid();
        self
    }

    /// Partial derivative in variable `v`; the valid order drops by one.
    pub fn derivative(&self, v: usize) -> Self {
        assert!(self.order >= 1, "series exhausted: no valid derivative left");
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(src, dst, f) in &self.table.derivs[v] {
            coeffs[dst as usize] += f * self.coeffs[src as usize];
        }
        let mut s = Series { table: self.table.clone(), order: self.order - 1, coeffs };
        s.truncate_invalid();
        s
    }

    /// Homogeneous part of degree `d`.
    pub fn homogeneous(&self, d: usize) -> Self {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        if d <= self.table.order {
            let (a, b) = (self.table.degree_start[d], self.table.degree_start[d + 1]);
            coeffs[a..b].copy_from_slice(&self.coeffs[a..b]);
        }
        Series { table: self.table.clone(), order: self.order, coeffs }
    }

    /// Euler operator `Σ x_v ∂_v`: multiplies the degree-`d` part by `d`.
    pub fn euler(&self) -> Self {
        let mut out = self.clone();
        for d in 0..=self.table.order {
            let (a, b) = (self.table.degree_start[d], self.table.degree_start[d + 1]);
            for c in &mut out.coeffs[a..b] {
                *c *= d as f64;
            }
        }
        out
    }

    /// Largest degree carrying a coefficient above `tol` in magnitude.
    pub fn effective_degree(&self, tol: f64) -> usize {
        (0..=self.order)
            .rev()
            .find(|&d| {
                let (a, b) = (self.table.degree_start[d], self.table.degree_start[d + 1]);
                self.coeffs[a..b].iter().any(|c| c.abs() > tol)
            })
            .unwrap_or(0)
    }

    /// `x ↦ self(s·x)`: multiplies the degree-`d` part by `s^d`.
    pub fn dilate(&self, s: f64) -> Self {
        let mut out = self.clone();
        let mut f = 1.0;
        for d in 0..=self.table.order {
            let (a, b) = (self.table.degree_start[d], self.table.degree_start[d + 1]);
            for c in &mut out.coeffs[a..b] {
                *c *= f;
            }
            f *= s;
        }
        out
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let mut m = Vec::new();
        self.table.monomials(y, self.order, &mut m);
        self.dot(&m)
    }

    /// Evaluation against precomputed monomial values.
    pub fn dot(&self, monomials: &[f64]) -> f64 {
        let n = monomials.len().min(self.table.count_upto(self.order));
        self.coeffs[..n].iter().zip(&monomials[..n]).map(|(a, b)| a * b).sum()
    }

    /// Substitutes the series `args` (one per variable, sharing a table) into
    /// `self`.
    pub fn compose(&self, args: &[Series]) -> Series {
        let t = &args[0].table;
        let mut acc = Series::constant(t, 0.0);
        let mut powers: Vec<Vec<Series>> = args
            .iter()
            .map(|a| {
                let mut p = vec![Series::constant(t, 1.0)];
                for _ in 0..self.order {
                    let next = p.last().unwrap().clone() * a.clone();
                    p.push(next);
                }
                p
            })
            .collect();
        let n = self.table.count_upto(self.order);
        for i in 0..n {
            let c = self.coeffs[i];
            if c == 0.0 {
                continue;
            }
            let e = self.table.exps[i];
            let mut term = Series::constant(t, c);
            for v in 0..self.table.nvars {
                if e[v] > 0 {
                    term = term * powers[v][e[v] as usize].clone();
                }
            }
            acc = acc + term;
        }
        powers.clear();
        acc
    }

    /// `f(self)` for a univariate `f` given the Taylor coefficients of `f`
    /// about `self.value()`.
    fn compose_univariate(&self, taylor: &[f64]) -> Series {
        let mut u = self.clone();
        u.coeffs[0] = 0.0;
        let mut acc = Series::constant(&self.table, taylor[0]);
        acc.order = self.order;
        let mut p = Series::constant(&self.table, 1.0);
        for &c in &taylor[1..] {
            p = p * u.clone();
            if p.coeffs.iter().all(|&v| v == 0.0) {
                break;
            }
            acc = acc + p.scale(c);
        }
        acc.order = self.order;
        acc
    }

    fn real_power(&self, p: f64) -> Series {
        let a0 = self.coeffs[0];
        let m = self.order;
        let taylor: Vec<f64> =
            binomial_series(p, m).into_iter().enumerate().map(|(j, b)| b * libm::pow(a0, p - j as f64)).collect();
        self.compose_univariate(&taylor)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn binary(mut self, o: &Series, f: impl Fn(f64, f64) -> f64) -> Series {
        debug_assert!(Arc::ptr_eq(&self.table, &o.table));
        for (a, b) in self.coeffs.iter_mut().zip(&o.coeffs) {
            *a = f(*a, *b);
        }
        self.order = self.order.min(o.order);
        self.truncate_invalid();
        self
    }
}

impl Add for Series {
    type Output = Series;
    fn add(self, o: Series) -> Series {
        self.binary(&o, |a, b| a + b)
    }
}

impl Sub for Series {
    type Output = Series;
    fn sub(self, o: Series) -> Series {
        self.binary(&o, |a, b| a - b)
    }
}

impl Neg for Series {
    type Output = Series;
    fn neg(mut self) -> Series {
        for c in &mut self.coeffs {
            *c = -*c;
        }
        self
    }
}

impl Mul for Series {
    type Output = Series;
    fn mul(self, o: Series) -> Series {
        &self * &o
    }
}

impl<'a> Mul<&'a Series> for &'a Series {
    type Output = Series;
    fn mul(self, o: &Series) -> Series {
        debug_assert!(Arc::ptr_eq(&self.table, &o.table));
        let order = self.order.min(o.order);
        let mut coeffs = vec![0.0; self.coeffs.len()];
        let (a, b) = (&self.coeffs, &o.coeffs);
        for &(i, j, k) in &self.table.products[..self.table.products_end[order]] {
            coeffs[k as usize] += a[i as usize] * b[j as usize];
        }
        Series { table: self.table.clone(), order, coeffs }
    }
}

impl Scalar for Series {
    fn lift(&self, c: f64) -> Series {
        Series::constant(&self.table, c)
    }
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn scale(&self, c: f64) -> Series {
        let mut s = self.clone();
        for v in &mut s.coeffs {
            *v *= c;
        }
        s
    }
    fn shift(&self, c: f64) -> Series {
        let mut s = self.clone();
        s.coeffs[0] += c;
        s
    }
    fn recip(&self) -> Series {
        self.real_power(-1.0)
    }
    fn sqrt(&self) -> Series {
        self.real_power(0.5)
    }
    fn powi(&self, k: i32) -> Series {
        if k >= 0 {
            let mut acc = self.lift(1.0);
            acc.order = self.order;
            for _ in 0..k {
                acc = &acc * self;
            }
            acc
        } else {
            self.real_power(k as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_sizes_are_binomial() {
        let t = MonomialTable::new(3, 6);
        assert_eq!(t.len(), 84);
        assert_eq!(t.count_upto(2), 10);
        let t1 = MonomialTable::new(1, 5);
        assert_eq!(t1.len(), 6);
    }

    #[test]
    fn product_matches_pointwise() {
        let t = MonomialTable::new(2, 6);
        let x = Series::variable(&t, 0, 0.3);
        let y = Series::variable(&t, 1, -0.2);
        let f = (x.clone() * y.clone()).shift(1.0) * x.clone();
        let at = [0.1, 0.05];
        let exact = (1.0 + 0.4 * -0.15) * 0.4;
        assert!((f.eval(&at) - exact).abs() < 1e-15);
    }

    #[test]
    fn reciprocal_and_sqrt_match_closed_forms() {
        let t = MonomialTable::new(2, 12);
        let x = Series::variable(&t, 0, 0.0);
        let y = Series::variable(&t, 1, 0.0);
        let q = (x.clone() * x.clone() + y.clone() * y.clone()).shift(1.0);
        let at = [0.1, -0.07];
        let q0 = 1.0 + 0.01 + 0.0049;
        assert!((q.recip().eval(&at) - 1.0 / q0).abs() < 1e-11);
        assert!((q.sqrt().eval(&at) - libm::sqrt(q0)).abs() < 1e-11);
        assert!((q.powi(-3).eval(&at) - 1.0 / (q0 * q0 * q0)).abs() < 1e-10);
    }

    #[test]
    fn derivative_lowers_order_and_differentiates() {
        let t = MonomialTable::new(2, 4);
        let x = Series::variable(&t, 0, 1.0);
        let y = Series::variable(&t, 1, 0.0);
        let f = x.powi(3) * y.clone();
        let fx = f.derivative(0);
        assert_eq!(fx.order(), 3);
        // 3 x^2 y at (x, y) = (1 + 0.1, 0.2)
        assert!((fx.eval(&[0.1, 0.2]) - 3.0 * 1.21 * 0.2).abs() < 1e-14);
    }

    #[test]
    fn dilation_scales_homogeneous_parts() {
        let t = MonomialTable::new(1, 3);
        let x = Series::variable(&t, 0, 0.0);
        let f = x.powi(2).shift(1.0);
        assert!((f.dilate(0.5).eval(&[2.0]) - f.eval(&[1.0])).abs() < 1e-15);
    }

    #[test]
    fn composition_agrees_with_direct_evaluation() {
        let t = MonomialTable::new(2, 5);
        let x = Series::variable(&t, 0, 0.0);
        let y = Series::variable(&t, 1, 0.0);
        let f = x.clone() * y.clone() + x.powi(2);
        let inner = [x.clone() + y.clone(), (x.clone() * y.clone()).shift(0.0)];
        let g = f.compose(&inner);
        let at = [0.2, 0.3];
        let (u, v) = (0.5, 0.06);
        assert!((g.eval(&at) - (u * v + u * u)).abs() < 1e-14);
    }
}
