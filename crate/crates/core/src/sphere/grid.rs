use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};

/// Product quadrature grid on `S^n` (`n ∈ {1, 2}`) with tabulated real
/// orthonormal harmonics and their angular derivatives.
///
/// Angular coordinates: `n = 1` uses `λ` with `x = (cos λ, sin λ)`; `n = 2`
/// uses `(θ, λ)` with `x = (sin θ cos λ, sin θ sin λ, cos θ)`.
#[derive(Debug)]
pub struct SphereGrid {
    n: usize,
    lmax: usize,
    points: Vec<f64>,
    angles: Vec<[f64; 2]>,
    weights: Vec<f64>,
    /// Degree of each basis function.
    degrees: Vec<usize>,
    /// `tables[d][j * nodes + i]`: basis `j` at node `i`. `d` indexes the
    /// derivative: value, `∂_θ`, `∂_λ`, `∂_θθ`, `∂_θλ`, `∂_λλ` for `n = 2` and
    /// value, `∂_λ`, `∂_λλ` for `n = 1`.
    tables: Vec<Vec<f64>>,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut t = libm::cos(PI * (i as f64 + 0.75) / (m as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

/// Fully normalized associated Legendre functions `P̄_l^m(cos θ)` with
/// `∫_{-1}^{1} P̄² dt = 1`, and their first and second `θ`-derivatives, for
/// `l ≤ lmax`. Indexed `[l][m]`.
fn legendre(lmax: usize, theta: f64) -> [Vec<Vec<f64>>; 3] {
    let (t, s) = (libm::cos(theta), libm::sin(theta));
    let mut p = vec![vec![0.0; lmax + 1]; lmax + 1];
    p[0][0] = libm::sqrt(0.5);
    for m in 1..=lmax {
        p[m][m] = libm::sqrt((2 * m + 1) as f64 / (2 * m) as f64) * s * p[m - 1][m - 1];
    }
    for m in 0..lmax {
        p[m + 1][m] = libm::sqrt((2 * m + 3) as f64) * t * p[m][m];
    }
    for m in 0..=lmax {
        for l in m + 2..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = libm::sqrt((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf));
            let b = libm::sqrt(((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0));
            p[l][m] = a * (t * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    let mut d1 = vec![vec![0.0; lmax + 1]; lmax + 1];
    let mut d2 = vec![vec![0.0; lmax + 1]; lmax + 1];
    for l in 0..=lmax {
        for m in 0..=l {
            let (lf, mf) = (l as f64, m as f64);
            let prev = if l > m {
                libm::sqrt((2.0 * lf + 1.0) * (lf - mf) * (lf + mf) / (2.0 * lf - 1.0)) * p[l - 1][m]
            } else {
                0.0
            };
            d1[l][m] = (lf * t * p[l][m] - prev) / s;
            d2[l][m] = -t / s * d1[l][m] - (lf * (lf + 1.0) - mf * mf / (s * s)) * p[l][m];
        }
    }
    [p, d1, d2]
}

impl SphereGrid {
    /// Default resolution: `L = 16`; `32 × 64` nodes on `S²`, `4L` on `S¹`.
    pub fn new(n: usize, lmax: usize) -> Result<Self> {
        match n {
            1 => Ok(Self::circle(lmax, 4 * lmax.max(1))),
            2 => Ok(Self::sphere2(lmax, 2 * lmax, 4 * lmax)),
            _ => Err(Error::InvalidInput(alloc::format!("sphere numerics support n = 1, 2 (got {n})"))),
        }
    }

    pub fn default_for(n: usize) -> Result<Self> {
        Self::new(n, 16)
    }

    fn circle(lmax: usize, m: usize) -> Self {
        let mut points = Vec::with_capacity(2 * m);
        let mut angles = Vec::with_capacity(m);
        for i in 0..m {
            let l = 2.0 * PI * i as f64 / m as f64;
            points.extend([libm::cos(l), libm::sin(l)]);
            angles.push([0.0, l]);
        }
        let weights = vec![2.0 * PI / m as f64; m];
        let mut degrees = vec![0];
        for k in 1..=lmax {
            degrees.extend([k, k]);
        }
        let nb = degrees.len();
        let mut tables = vec![vec![0.0; nb * m]; 3];
        let c0 = 1.0 / libm::sqrt(2.0 * PI);
        let c = 1.0 / libm::sqrt(PI);
        for (i, a) in angles.iter().enumerate() {
            let l = a[1];
            tables[0][i] = c0;
            for k in 1..=lmax {
                let kf = k as f64;
                let (cs, sn) = (libm::cos(kf * l), libm::sin(kf * l));
                let (jc, js) = (2 * k - 1, 2 * k);
                tables[0][jc * m + i] = c * cs;
                tables[0][js * m + i] = c * sn;
                tables[1][jc * m + i] = -c * kf * sn;
                tables[1][js * m + i] = c * kf * cs;
                tables[2][jc * m + i] = -c * kf * kf * cs;
                tables[2][js * m + i] = -c * kf * kf * sn;
            }
        }
        SphereGrid { n: 1, lmax, points, angles, weights, degrees, tables }
    }

    fn sphere2(lmax: usize, nt: usize, nl: usize) -> Self {
        let (tn, tw) = gauss_legendre(nt);
        let nn = nt * nl;
        let mut points = Vec::with_capacity(3 * nn);
        let mut angles = Vec::with_capacity(nn);
        let mut weights = Vec::with_capacity(nn);
        for (t, w) in tn.iter().zip(&tw) {
            let th = libm::acos(*t);
            for j in 0..nl {
                let l = 2.0 * PI * j as f64 / nl as f64;
                let s = libm::sin(th);
                points.extend([s * libm::cos(l), s * libm::sin(l), *t]);
                angles.push([th, l]);
                weights.push(w * 2.0 * PI / nl as f64);
            }
        }
        let mut degrees = Vec::new();
        for l in 0..=lmax {
            degrees.push(l);
            for _ in 1..=l {
                degrees.extend([l, l]);
            }
        }
        let nb = degrees.len();
        let mut tables = vec![vec![0.0; nb * nn]; 6];
        let c0 = 1.0 / libm::sqrt(2.0 * PI);
        let c = 1.0 / libm::sqrt(PI);
        for ti in 0..nt {
            let th = angles[ti * nl][0];
            let [p, d1, d2] = legendre(lmax, th);
            for jl in 0..nl {
                let i = ti * nl + jl;
                let lam = angles[i][1];
                let mut j = 0;
                for l in 0..=lmax {
                    let mut put = |j: usize, vals: [f64; 6]| {
                        for (d, v) in vals.iter().enumerate() {
                            tables[d][j * nn + i] = *v;
                        }
                    };
                    put(j, [c0 * p[l][0], c0 * d1[l][0], 0.0, c0 * d2[l][0], 0.0, 0.0]);
                    j += 1;
                    for m in 1..=l {
                        let mf = m as f64;
                        let (cs, sn) = (libm::cos(mf * lam), libm::sin(mf * lam));
                        let (a, b, e) = (c * p[l][m], c * d1[l][m], c * d2[l][m]);
                        put(j, [a * cs, b * cs, -mf * a * sn, e * cs, -mf * b * sn, -mf * mf * a * cs]);
                        put(j + 1, [a * sn, b * sn, mf * a * cs, e * sn, mf * b * cs, -mf * mf * a * sn]);
                        j += 2;
                    }
                }
            }
        }
        SphereGrid { n: 2, lmax, points, angles, weights, degrees, tables }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn basis_len(&self) -> usize {
        self.degrees.len()
    }

    /// Node `i` as a unit vector in `R^{n+1}`.
    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.n + 1;
        &self.points[i * d..(i + 1) * d]
    }

    /// `(θ, λ)` of node `i` (`θ = 0` on the circle).
    pub fn angles(&self, i: usize) -> [f64; 2] {
        self.angles[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self, j: usize) -> usize {
        self.degrees[j]
    }

    /// Number of derivative tables (including the values).
    pub fn derivative_tables(&self) -> usize {
        self.tables.len()
    }

    /// Row of table `d` for basis function `j`.
    pub fn basis(&self, d: usize, j: usize) -> &[f64] {
        let nn = self.len();
        &self.tables[d][j * nn..(j + 1) * nn]
    }

    /// `|S^n|`.
    pub fn area(&self) -> f64 {
        if self.n == 1 {
            2.0 * PI
        } else {
            4.0 * PI
        }
    }

    /// Basis indices of the degree-one harmonics, ordered so that entry `l`
    /// is proportional to `x^l`, together with the proportionality constants
    /// (`x^l = c_l Y_{j_l}`).
    pub fn kernel_basis(&self) -> [(usize, f64); 3] {
        let s = libm::sqrt(self.area() / (self.n + 1) as f64);
        if self.n == 1 {
            [(1, s), (2, s), (usize::MAX, 0.0)]
        } else {
            // l = 1 block: m = 0 (∝ z), cos (∝ x), sin (∝ y)
            [(2, s), (3, s), (1, s)]
        }
    }

    /// Values of every basis function at the point with angles `(θ, λ)`.
    pub fn basis_at(&self, angles: [f64; 2]) -> Vec<f64> {
        let lam = angles[1];
        let mut out = Vec::with_capacity(self.basis_len());
        let c0 = 1.0 / libm::sqrt(2.0 * PI);
        let c = 1.0 / libm::sqrt(PI);
        if self.n == 1 {
            out.push(c0);
            for k in 1..=self.lmax {
                let kf = k as f64;
                out.extend([c * libm::cos(kf * lam), c * libm::sin(kf * lam)]);
            }
            return out;
        }
        let [p, _, _] = legendre(self.lmax, angles[0]);
        for l in 0..=self.lmax {
            out.push(c0 * p[l][0]);
            for m in 1..=l {
                let mf = m as f64;
                out.extend([c * p[l][m] * libm::cos(mf * lam), c * p[l][m] * libm::sin(mf * lam)]);
            }
        }
        out
    }

    /// Weighted integral over the sphere.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}
