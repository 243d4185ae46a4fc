//! Coordinate presentations of an initial data set `(M, g, k)` near a point.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::series::{Exponent, MonomialTable, Series, MAX_VARS};

/// A polynomial in the shifted coordinates `x - center`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub center: Vec<f64>,
    pub terms: Vec<(f64, Exponent)>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly { center: vec![0.0; dim], terms: Vec::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Poly { center: vec![0.0; dim], terms: vec![(c, [0; MAX_VARS])] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.0 == 0.0)
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|(_, e)| e.iter().map(|&p| p as usize).sum()).max().unwrap_or(0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Poly { center: self.center.clone(), terms: self.terms.iter().map(|&(c, e)| (c * s, e)).collect() }
    }

    /// Product of two polynomials sharing a center.
    pub fn mul(&self, o: &Poly) -> Poly {
        assert_eq!(self.center, o.center);
        let mut terms = Vec::new();
        for &(a, ea) in &self.terms {
            for &(b, eb) in &o.terms {
                let mut e = ea;
                for v in 0..MAX_VARS {
                    e[v] += eb[v];
                }
                terms.push((a * b, e));
            }
        }
        Poly { center: self.center.clone(), terms }
    }

    /// `x ↦ p(M x)` for a polynomial centered at the origin, re-expanded in
    /// monomials.
    pub fn linear_substitute(&self, m: &[Vec<f64>]) -> Poly {
        assert!(self.center.iter().all(|&c| c == 0.0), "substitution needs an origin-centered polynomial");
        let dim = self.center.len();
        let linear: Vec<Poly> = (0..dim)
            .map(|v| Poly { center: vec![0.0; dim], terms: (0..dim).map(|w| (m[v][w], exp_unit(w))).collect() })
            .collect();
        let mut out = Poly::zero(dim);
        for &(c, e) in &self.terms {
            let mut t = Poly::constant(dim, c);
            for v in 0..dim {
                for _ in 0..e[v] {
                    t = t.mul(&linear[v]);
                }
            }
            out.terms.extend(t.terms);
        }
        out
    }

    pub fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let zero = x[0].zero_like();
        let shifted: Vec<S> = x.iter().zip(&self.center).map(|(xi, ci)| xi.shift(-ci)).collect();
        let maxp = self.terms.iter().flat_map(|(_, e)| e.iter().copied()).max().unwrap_or(0) as usize;
        let powers: Vec<Vec<S>> = shifted
            .iter()
            .map(|s| {
                let mut p = vec![s.lift(1.0)];
                for k in 1..=maxp {
                    let next = p[k - 1].clone() * s.clone();
                    p.push(next);
                }
                p
            })
            .collect();
        let mut acc = zero;
        for &(c, e) in &self.terms {
            if c == 0.0 {
                continue;
            }
            let mut term: Option<S> = None;
            for (v, &p) in e.iter().enumerate().take(x.len()) {
                if p > 0 {
                    let f = powers[v][p as usize].clone();
                    term = Some(match term {
                        None => f,
                        Some(t) => t * f,
                    });
                }
            }
            acc = match term {
                None => acc.shift(c),
                Some(t) => acc + t.scale(c),
            };
        }
        acc
    }
}

fn exp_unit(v: usize) -> Exponent {
    let mut e = [0; MAX_VARS];
    e[v] = 1;
    e
}

/// Closed-form metric families of the catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetricModel {
    Flat,
    /// `(1 + ψ) δ`.
    Conformal {
        psi: Poly,
    },
    /// Round sphere of radius `radius` in stereographic coordinates,
    /// `(1 + |x|²/(4a²))^{-2} δ`.
    Stereographic {
        radius: f64,
    },
    /// Spatial Schwarzschild slice `(1 + m/(2ρ))⁴ δ`, `ρ = |x|`.
    Schwarzschild {
        mass: f64,
    },
    /// `δ + h` with `h` given by its upper-triangular components.
    Perturbed {
        h: Vec<Poly>,
    },
}

/// Extrinsic tensor `k` given by polynomial upper-triangular components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KModel {
    pub components: Vec<Poly>,
}

impl KModel {
    pub fn zero(dim: usize) -> Self {
        KModel { components: vec![Poly::zero(dim); dim * (dim + 1) / 2] }
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Poly::is_zero)
    }

    pub fn scaled(&self, s: f64) -> Self {
        KModel { components: self.components.iter().map(|p| p.scaled(s)).collect() }
    }

    pub fn sum(&self, other: &KModel) -> Self {
        KModel {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| {
                    let mut terms = a.terms.clone();
                    // re-center b's terms only when the centers agree
                    assert_eq!(a.center, b.center, "k components must share a center to be added");
                    terms.extend(b.terms.iter().copied());
                    Poly { center: a.center.clone(), terms }
                })
                .collect(),
        }
    }
}

/// Index of the upper-triangular component `(i, j)`.
pub fn sym_index(dim: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * dim - a * (a + 1) / 2 + b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Backend {
    Analytic,
    /// Central 5-point tensor stencils; `steps[d-1]` is used for total
    /// derivative order `d`.
    FiniteDifference {
        steps: [f64; 4],
    },
}

impl Backend {
    pub fn finite_difference() -> Self {
        Backend::FiniteDifference { steps: [1e-3, 1e-3, 5e-3, 1e-2] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientChart {
    pub dim: usize,
    pub metric: MetricModel,
    pub k: KModel,
    /// Coordinates of the base point `p`.
    pub center: Vec<f64>,
    pub validity_radius: f64,
    pub catalog_id: Option<String>,
    pub backend: Backend,
}

/// Derivative orders the jets of `g` and `k` are taken to.
pub const G_ORDER: usize = 4;
pub const K_ORDER: usize = 3;

impl AmbientChart {
    pub fn new(dim: usize, metric: MetricModel, k: KModel, center: Vec<f64>, validity_radius: f64) -> Self {
        assert!((2..=MAX_VARS).contains(&dim), "chart dimension must be 2..=4");
        assert_eq!(center.len(), dim);
        assert_eq!(k.components.len(), dim * (dim + 1) / 2);
        AmbientChart { dim, metric, k, center, validity_radius, catalog_id: None, backend: Backend::Analytic }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.catalog_id = Some(id.into());
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_k(mut self, k: KModel) -> Self {
        self.k = k;
        self
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Self {
        self.center = center;
        self
    }

    /// The same data in coordinates `x' = Q x` for an orthogonal `Q`
    /// (origin-centered polynomial models only).
    pub fn rotated(&self, q: &[Vec<f64>]) -> AmbientChart {
        let n = self.dim;
        let qt: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| q[j][i]).collect()).collect();
        let pull = |p: &Poly| p.linear_substitute(&qt);
        let metric = match &self.metric {
            MetricModel::Conformal { psi } => MetricModel::Conformal { psi: pull(psi) },
            MetricModel::Perturbed { h } => MetricModel::Perturbed { h: tensor_pullback(n, h, q, &pull) },
            m @ (MetricModel::Flat | MetricModel::Stereographic { .. } | MetricModel::Schwarzschild { .. }) => {
                m.clone()
            }
        };
        let k = KModel { components: tensor_pullback(n, &self.k.components, q, &pull) };
        let center = (0..n).map(|i| (0..n).map(|j| q[i][j] * self.center[j]).sum()).collect();
        AmbientChart { metric, k, center, ..self.clone() }
    }

    /// Sphere dimension `n` of the leaves.
    pub fn n(&self) -> usize {
        self.dim - 1
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        let d = libm::sqrt(x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum());
        if d > self.validity_radius {
            return Err(Error::Domain { distance: d, radius: self.validity_radius });
        }
        Ok(())
    }

    /// Full `dim × dim` component matrix of `g` at a generic point.
    pub fn metric<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let n = self.dim;
        let one = x[0].lift(1.0);
        let zero = x[0].zero_like();
        let conformal =
            |f: S| -> Vec<S> { (0..n * n).map(|ij| if ij / n == ij % n { f.clone() } else { zero.clone() }).collect() };
        match &self.metric {
            MetricModel::Flat => conformal(one),
            MetricModel::Conformal { psi } => conformal(psi.eval(x).shift(1.0)),
            MetricModel::Stereographic { radius } => {
                let r2 = x.iter().fold(zero.clone(), |acc, xi| acc + xi.square());
                conformal(r2.scale(1.0 / (4.0 * radius * radius)).shift(1.0).powi(-2))
            }
            MetricModel::Schwarzschild { mass } => {
                let rho = x.iter().fold(zero.clone(), |acc, xi| acc + xi.square()).sqrt();
                conformal(rho.recip().scale(mass / 2.0).shift(1.0).powi(4))
            }
            MetricModel::Perturbed { h } => {
                let mut out = conformal(one);
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = out[i * n + j].clone() + h[sym_index(n, i, j)].eval(x);
                    }
                }
                out
            }
        }
    }

    pub fn k_tensor<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let n = self.dim;
        let vals: Vec<S> = self.k.components.iter().map(|p| p.eval(x)).collect();
        (0..n * n).map(|ij| vals[sym_index(n, ij / n, ij % n)].clone()).collect()
    }

    pub fn metric_at(&self, x: &[f64]) -> Vec<f64> {
        self.metric(x)
    }

    pub fn k_at(&self, x: &[f64]) -> Vec<f64> {
        self.k_tensor(x)
    }

    /// Errors unless `g(x)` is positive definite.
    pub fn check_metric(&self, x: &[f64]) -> Result<()> {
        let g = nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.metric_at(x));
        let ev = g.symmetric_eigenvalues();
        let min = ev.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if !(min > 0.0) {
            let mut at = [0.0; 4];
            at[..x.len()].copy_from_slice(x);
            return Err(Error::DegenerateMetric { at, min_eigenvalue: min });
        }
        Ok(())
    }

    /// Taylor polynomials of the components of `g` (`which = 0`) or `k`
    /// (`which = 1`) about `x0`, in the variables `u = x - x0`, from the
    /// configured backend.
    fn taylor(&self, x0: &[f64], order: usize, which: usize) -> Result<Vec<Series>> {
        let table = MonomialTable::new(self.dim, order);
        match &self.backend {
            Backend::Analytic => {
                let pt: Vec<Series> = (0..self.dim).map(|v| Series::variable(&table, v, x0[v])).collect();
                Ok(if which == 0 { self.metric(&pt) } else { self.k_tensor(&pt) })
            }
            Backend::FiniteDifference { steps } => {
                if order > 4 {
                    return Err(Error::Capability { requested: order, available: 4 });
                }
                Ok(self.fd_taylor(&table, x0, steps, which))
            }
        }
    }

    pub fn taylor_g(&self, x0: &[f64], order: usize) -> Result<Vec<Series>> {
        self.taylor(x0, order, 0)
    }

    pub fn taylor_k(&self, x0: &[f64], order: usize) -> Result<Vec<Series>> {
        self.taylor(x0, order, 1)
    }

    fn fd_taylor(&self, table: &Arc<MonomialTable>, x0: &[f64], steps: &[f64; 4], which: usize) -> Vec<Series> {
        let n = self.dim;
        let eval = |x: &[f64]| if which == 0 { self.metric_at(x) } else { self.k_at(x) };
        let npts = 5usize.pow(n as u32);
        let grid = |h: f64| -> Vec<Vec<f64>> {
            (0..npts)
                .map(|flat| {
                    let mut x = x0.to_vec();
                    let mut rem = flat;
                    for xv in x.iter_mut() {
                        *xv += h * ((rem % 5) as f64 - 2.0);
                        rem /= 5;
                    }
                    eval(&x)
                })
                .collect()
        };
        let mut grids: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
        let mut coeffs = vec![vec![0.0; table.len()]; n * n];
        for m in 0..table.len() {
            let e = table.exponent(m);
            let d = table.degree_of(m);
            if d > table.order() {
                continue;
            }
            let h = if d == 0 { steps[0] } else { steps[d - 1] };
            let gi = match grids.iter().position(|(s, _)| *s == h) {
                Some(i) => i,
                None => {
                    grids.push((h, grid(h)));
                    grids.len() - 1
                }
            };
            let vals = &grids[gi].1;
            let mut denom = 1.0;
            for v in 0..n {
                denom *= factorial(e[v] as usize) * libm::pow(h, e[v] as f64);
            }
            for (flat, val) in vals.iter().enumerate() {
                let mut w = 1.0;
                let mut rem = flat;
                for v in 0..n {
                    w *= STENCIL5[e[v] as usize][rem % 5];
                    rem /= 5;
                    if w == 0.0 {
                        break;
                    }
                }
                if w == 0.0 {
                    continue;
                }
                for c in 0..n * n {
                    coeffs[c][m] += w * val[c] / denom;
                }
            }
        }
        coeffs.into_iter().map(|c| Series::from_coeffs(table, table.order(), c)).collect()
    }
}

/// `T'_ij(x') = Σ Q_ia Q_jb T_ab(Qᵀ x')` on upper-triangular components.
fn tensor_pullback(n: usize, t: &[Poly], q: &[Vec<f64>], pull: &dyn Fn(&Poly) -> Poly) -> Vec<Poly> {
    let pulled: Vec<Poly> = t.iter().map(pull).collect();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut p = Poly::zero(n);
            for a in 0..n {
                for b in 0..n {
                    let w = q[i][a] * q[j][b];
                    if w != 0.0 {
                        p.terms.extend(pulled[sym_index(n, a, b)].scaled(w).terms);
                    }
                }
            }
            out.push(p);
        }
    }
    out
}

/// 5-point central stencils for derivative orders 0..=4 (unit step).
const STENCIL5: [[f64; 5]; 5] = [
    [0.0, 0.0, 1.0, 0.0, 0.0],
    [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
    [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
    [-0.5, 1.0, 0.0, -1.0, 0.5],
    [1.0, -4.0, 6.0, -4.0, 1.0],
];

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Built-in example charts and `k` fields.
pub mod catalog {
    use super::*;

    fn exp1(v: usize, p: u8) -> Exponent {
        let mut e = [0; MAX_VARS];
        e[v] = p;
        e
    }

    fn exp2(a: usize, b: usize) -> Exponent {
        let mut e = [0; MAX_VARS];
        e[a] += 1;
        e[b] += 1;
        e
    }

    pub fn flat(dim: usize) -> AmbientChart {
        AmbientChart::new(dim, MetricModel::Flat, KModel::zero(dim), vec![0.0; dim], 1.0).with_id("flat")
    }

    pub fn conformal(dim: usize, psi: Poly, validity_radius: f64) -> AmbientChart {
        AmbientChart::new(dim, MetricModel::Conformal { psi }, KModel::zero(dim), vec![0.0; dim], validity_radius)
            .with_id("conformal")
    }

    /// `S^{dim}` of radius `a` in stereographic coordinates about the point
    /// mapped to the origin.
    pub fn round_sphere(dim: usize, radius: f64) -> AmbientChart {
        AmbientChart::new(dim, MetricModel::Stereographic { radius }, KModel::zero(dim), vec![0.0; dim], radius)
            .with_id("round-sphere")
    }

    /// Spatial Schwarzschild slice (dim 3) with base point on the first axis at
    /// isotropic radius `rho`.
    pub fn schwarzschild(mass: f64, rho: f64) -> AmbientChart {
        AmbientChart::new(3, MetricModel::Schwarzschild { mass }, KModel::zero(3), vec![rho, 0.0, 0.0], 0.5 * rho)
            .with_id("schwarzschild")
    }

    /// Conformally flat `(1 + ψ)δ` with an even quartic `ψ`; the origin is a
    /// nondegenerate critical point of `Sc` with distinct Hessian eigenvalues.
    pub fn bump(dim: usize) -> AmbientChart {
        let mut terms = Vec::new();
        let quad = [0.10, 0.16, 0.22, 0.28];
        let quart = [0.05, -0.03, 0.04, 0.02];
        for v in 0..dim {
            terms.push((quad[v], exp1(v, 2)));
            terms.push((quart[v], exp1(v, 4)));
        }
        if dim >= 2 {
            let mut e = [0; MAX_VARS];
            e[0] = 2;
            e[1] = 2;
            terms.push((0.06, e));
        }
        let psi = Poly { center: vec![0.0; dim], terms };
        conformal(dim, psi, 1.0).with_id("bump")
    }

    /// Conformally flat chart with a cubic `ψ`, so that `∇Ric ≠ 0` at the
    /// origin.
    pub fn skew_bump(dim: usize) -> AmbientChart {
        let mut c = bump(dim);
        if let MetricModel::Conformal { psi } = &mut c.metric {
            psi.terms.push((0.08, exp1(0, 3)));
            if dim >= 2 {
                psi.terms.push((-0.05, {
                    let mut e = [0; MAX_VARS];
                    e[0] = 1;
                    e[1] = 2;
                    e
                }));
            }
            psi.terms.push((0.04, exp1(dim - 1, 3)));
            psi.terms.push((0.03, exp1(dim - 1, 1)));
        }
        c.with_id("skew-bump")
    }

    /// A symmetric generic coefficient used by the polynomial `k` presets.
    fn coefficient(i: usize, j: usize, m: usize, salt: f64) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        libm::sin(1.3 * (a + b + 1) as f64 + 0.7 * m as f64 + 0.4 * (a * b) as f64 + salt)
    }

    fn k_from(dim: usize, center: &[f64], f: impl Fn(usize, usize) -> Vec<(f64, Exponent)>) -> KModel {
        let mut components = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                components.push(Poly { center: center.to_vec(), terms: f(i, j) });
            }
        }
        KModel { components }
    }

    /// `k = c·δ`.
    pub fn k_constant(dim: usize, c: f64) -> KModel {
        k_from(dim, &vec![0.0; dim], |i, j| if i == j { vec![(c, [0; MAX_VARS])] } else { Vec::new() })
    }

    /// `k_ij = s Σ_m L_ijm (x - center)^m` plus a constant part `c0 δ`.
    pub fn k_linear(dim: usize, center: &[f64], s: f64, c0: f64) -> KModel {
        k_from(dim, center, |i, j| {
            let mut t: Vec<(f64, Exponent)> = (0..dim).map(|m| (s * coefficient(i, j, m, 0.0), exp1(m, 1))).collect();
            if i == j && c0 != 0.0 {
                t.push((c0, [0; MAX_VARS]));
            }
            t
        })
    }

    /// Homogeneous quadratic `k` vanishing to second order at `center`.
    pub fn k_quadratic(dim: usize, center: &[f64], s: f64) -> KModel {
        k_from(dim, center, |i, j| {
            let mut t = Vec::new();
            for a in 0..dim {
                for b in a..dim {
                    t.push((s * coefficient(i, j, a * dim + b, 0.9), exp2(a, b)));
                }
            }
            t
        })
    }

    /// Constant + linear + cubic `k`.
    pub fn k_cubic(dim: usize, center: &[f64], s: f64) -> KModel {
        k_from(dim, center, |i, j| {
            let mut t: Vec<(f64, Exponent)> =
                (0..dim).map(|m| (0.5 * s * coefficient(i, j, m, 2.1), exp1(m, 1))).collect();
            for a in 0..dim {
                let mut e = exp2(a, a);
                e[(a + 1) % dim] += 1;
                t.push((s * coefficient(i, j, a, 3.7), e));
                t.push((0.5 * s * coefficient(i, j, a + 5, 1.1), exp1(a, 3)));
            }
            if i == j {
                t.push((0.2 * s, [0; MAX_VARS]));
            }
            t
        })
    }
}
