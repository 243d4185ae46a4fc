//! Levi-Civita tensor calculus on Taylor jets.
//!
//! All tensors are carried as truncated Taylor series about the evaluation
//! point, so every derived quantity (curvature, covariant derivatives,
//! obstruction forms) can itself be differentiated as long as its series has
//! valid order left.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::chart::{AmbientChart, G_ORDER, K_ORDER};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::series::Series;
use crate::tensor::Tensor;

/// Inverse of a symmetric positive definite matrix with entries in any
/// [`Scalar`] algebra (Gauss–Jordan without pivoting).
pub fn invert<S: Scalar>(m: &[S], n: usize) -> Vec<S> {
    let mut a: Vec<S> = m.to_vec();
    let mut inv: Vec<S> = (0..n * n).map(|ij| m[0].lift(if ij / n == ij % n { 1.0 } else { 0.0 })).collect();
    for col in 0..n {
        let p = a[col * n + col].recip();
        for j in 0..n {
            a[col * n + j] = a[col * n + j].clone() * p.clone();
            inv[col * n + j] = inv[col * n + j].clone() * p.clone();
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = a[row * n + col].clone();
            for j in 0..n {
                a[row * n + j] = a[row * n + j].clone() - f.clone() * a[col * n + j].clone();
                inv[row * n + j] = inv[row * n + j].clone() - f.clone() * inv[col * n + j].clone();
            }
        }
    }
    inv
}

/// Christoffel symbols `Γ^a_{bc}` (flattened `[a][b][c]`) from `g`, its
/// inverse and its partial derivatives `dg[c][a][b] = ∂_c g_ab`.
pub fn christoffel<S: Scalar>(ginv: &[S], dg: &[S], n: usize) -> Vec<S> {
    let zero = ginv[0].zero_like();
    let mut out = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut s = zero.clone();
                for d in 0..n {
                    let t = dg[b * n * n + d * n + c].clone() + dg[c * n * n + d * n + b].clone()
                        - dg[d * n * n + b * n + c].clone();
                    s = s + ginv[a * n + d].clone() * t;
                }
                out.push(s.scale(0.5));
            }
        }
    }
    out
}

/// Series-valued geometry of a chart about one point.
#[derive(Clone, Debug)]
pub struct SeriesGeometry {
    pub dim: usize,
    pub g: Tensor<Series>,
    pub ginv: Tensor<Series>,
    /// `Γ^a_{bc}` stored `[a][b][c]`.
    pub gamma: Tensor<Series>,
    pub k: Tensor<Series>,
}

impl SeriesGeometry {
    pub fn from_chart(chart: &AmbientChart, x: &[f64]) -> Result<Self> {
        chart.check_domain(x)?;
        chart.check_metric(x)?;
        let n = chart.dim;
        let g = chart.taylor_g(x, G_ORDER)?;
        let table = g[0].table().clone();
        let k_raw = chart.taylor_k(x, K_ORDER)?;
        // put k on the same table as g (orders are tracked per series)
        let k: Vec<Series> = k_raw
            .iter()
            .map(|s| {
                let mut coeffs = alloc::vec![0.0; table.len()];
                let kt = s.table();
                for i in 0..kt.len() {
                    if let Some(j) = table.index(kt.exponent(i)) {
                        coeffs[j] = s.coeffs()[i];
                    }
                }
                Series::from_coeffs(&table, s.order(), coeffs)
            })
            .collect();
        Ok(Self::from_series(n, g, k))
    }

    pub fn from_series(n: usize, g: Vec<Series>, k: Vec<Series>) -> Self {
        let ginv = invert(&g, n);
        let mut dg = Vec::with_capacity(n * n * n);
        for c in 0..n {
            for ab in 0..n * n {
                dg.push(g[ab].derivative(c));
            }
        }
        let gamma = christoffel(&ginv, &dg, n);
        SeriesGeometry {
            dim: n,
            g: Tensor { rank: 2, dim: n, data: g },
            ginv: Tensor { rank: 2, dim: n, data: ginv },
            gamma: Tensor { rank: 3, dim: n, data: gamma },
            k: Tensor { rank: 2, dim: n, data: k },
        }
    }

    fn zero(&self) -> Series {
        self.g.data[0].zero_like()
    }

    /// `∇T` of a fully covariant tensor; the new index comes first.
    pub fn covariant(&self, t: &Tensor<Series>) -> Tensor<Series> {
        let n = self.dim;
        let rank = t.rank;
        Tensor::from_fn(rank + 1, n, |idx| {
            let c = idx[0];
            let rest = &idx[1..];
            let mut s = t.at(rest).derivative(c);
            let mut j = rest.to_vec();
            for slot in 0..rank {
                for e in 0..n {
                    j[slot] = e;
                    let gm = self.gamma.at(&[e, c, rest[slot]]);
                    s = s - gm * t.at(&j);
                }
                j[slot] = rest[slot];
            }
            s
        })
    }

    /// `∇f` of a scalar series as a covector.
    pub fn gradient(&self, f: &Series) -> Tensor<Series> {
        Tensor::from_fn(1, self.dim, |i| f.derivative(i[0]))
    }

    /// `R^a_{bcd}` stored `[a][b][c][d]`.
    pub fn riemann_up(&self) -> Tensor<Series> {
        let n = self.dim;
        let gm = &self.gamma;
        Tensor::from_fn(4, n, |i| {
            let (a, b, c, d) = (i[0], i[1], i[2], i[3]);
            let mut s = gm.at(&[a, d, b]).derivative(c) - gm.at(&[a, c, b]).derivative(d);
            for e in 0..n {
                s = s + gm.at(&[a, c, e]) * gm.at(&[e, d, b]) - gm.at(&[a, d, e]) * gm.at(&[e, c, b]);
            }
            s
        })
    }

    pub fn ricci(&self, riem_up: &Tensor<Series>) -> Tensor<Series> {
        let n = self.dim;
        Tensor::from_fn(2, n, |i| (0..n).fold(self.zero(), |s, a| s + riem_up.at(&[a, i[0], a, i[1]]).clone()))
    }

    /// Full contraction `g^{ab} T_ab`.
    pub fn trace(&self, t: &Tensor<Series>) -> Series {
        let n = self.dim;
        let mut s = self.zero();
        for a in 0..n {
            for b in 0..n {
                s = s + self.ginv.at(&[a, b]) * t.at(&[a, b]);
            }
        }
        s
    }

    /// Contracts slot `i` with slot `j` of `t` using `g^{-1}`.
    pub fn contract(&self, t: &Tensor<Series>, i: usize, j: usize) -> Tensor<Series> {
        let n = self.dim;
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        Tensor::from_fn(t.rank - 2, n, |rest| {
            let mut full = Vec::with_capacity(t.rank);
            let mut it = rest.iter();
            for s in 0..t.rank {
                if s == lo || s == hi {
                    full.push(0);
                } else {
                    full.push(*it.next().unwrap());
                }
            }
            let mut s = self.zero();
            for a in 0..n {
                for b in 0..n {
                    full[lo] = a;
                    full[hi] = b;
                    s = s + self.ginv.at(&[a, b]) * t.at(&full);
                }
            }
            s
        })
    }

    /// `⟨A, B⟩` for two tensors of equal rank, all indices raised with `g`.
    pub fn inner(&self, a: &Tensor<Series>, b: &Tensor<Series>) -> Series {
        let n = self.dim;
        let rank = a.rank;
        // raise all indices of b one slot at a time
        let mut raised = b.clone();
        for slot in 0..rank {
            let prev = raised.clone();
            raised = Tensor::from_fn(rank, n, |idx| {
                let mut j = idx.to_vec();
                let mut s = self.zero();
                for e in 0..n {
                    j[slot] = e;
                    s = s + self.ginv.at(&[idx[slot], e]) * prev.at(&j);
                }
                s
            });
        }
        a.data.iter().zip(&raised.data).fold(self.zero(), |s, (x, y)| s + x * y)
    }
}

/// Values at a point of the curvature and `k`-derivative tensors.
///
/// Index conventions: `christoffel[a][b][c] = Γ^a_{bc}`; `riemann[a][b][c][d]
/// = R_{abcd}` with `Ric_{bd} = g^{ac} R_{abcd}`; covariant derivatives carry
/// the differentiation indices first (`cov_k[c][a][b] = ∇_c k_ab`,
/// `cov2_k[d][c][a][b] = ∇_d ∇_c k_ab`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureJet {
    pub point: Vec<f64>,
    pub metric: Tensor<f64>,
    pub metric_inv: Tensor<f64>,
    pub christoffel: Tensor<f64>,
    pub riemann: Tensor<f64>,
    pub ricci: Tensor<f64>,
    pub scalar: f64,
    pub grad_scalar: Tensor<f64>,
    pub hess_scalar: Tensor<f64>,
    /// `cov_ricci[k][i][j] = ∇_k Ric_ij`.
    pub cov_ricci: Tensor<f64>,
    pub k: Tensor<f64>,
    pub cov_k: Tensor<f64>,
    pub cov2_k: Tensor<f64>,
    pub cov3_k: Tensor<f64>,
    pub div_k: Tensor<f64>,
    pub tr_k: f64,
    pub grad_tr_k: Tensor<f64>,
}

/// Series-level curvature quantities shared by the jet and the obstruction
/// forms.
#[derive(Clone, Debug)]
pub struct CurvatureSeries {
    pub geom: SeriesGeometry,
    pub riemann_up: Tensor<Series>,
    pub ricci: Tensor<Series>,
    pub scalar: Series,
    pub cov_k: Tensor<Series>,
}

impl CurvatureSeries {
    pub fn new(geom: SeriesGeometry) -> Self {
        let riemann_up = geom.riemann_up();
        let ricci = geom.ricci(&riemann_up);
        let scalar = geom.trace(&ricci);
        let cov_k = geom.covariant(&geom.k);
        CurvatureSeries { geom, riemann_up, ricci, scalar, cov_k }
    }

    pub fn at(chart: &AmbientChart, x: &[f64]) -> Result<Self> {
        Ok(Self::new(SeriesGeometry::from_chart(chart, x)?))
    }

    pub fn jet(&self, point: &[f64]) -> Result<CurvatureJet> {
        let geom = &self.geom;
        let n = geom.dim;
        let val = |t: &Tensor<Series>| t.map(|s| s.value());
        let riem_low = Tensor::from_fn(4, n, |i| {
            (0..n).fold(0.0, |s, e| {
                s + geom.g.at(&[i[0], e]).value() * self.riemann_up.at(&[e, i[1], i[2], i[3]]).value()
            })
        });
        let grad_sc = geom.gradient(&self.scalar);
        let hess = geom.covariant(&grad_sc);
        let cov_ric = geom.covariant(&self.ricci);
        let cov2 = geom.covariant(&self.cov_k);
        let cov3 = geom.covariant(&cov2);
        let tr = geom.trace(&geom.k);
        let div = geom.contract(&self.cov_k, 0, 1);
        Ok(CurvatureJet {
            point: point.to_vec(),
            metric: val(&geom.g),
            metric_inv: val(&geom.ginv),
            christoffel: val(&geom.gamma),
            riemann: riem_low,
            ricci: val(&self.ricci),
            scalar: self.scalar.value(),
            grad_scalar: val(&grad_sc),
            hess_scalar: val(&hess),
            cov_ricci: val(&cov_ric),
            k: val(&geom.k),
            cov_k: val(&self.cov_k),
            cov2_k: val(&cov2),
            cov3_k: val(&cov3),
            div_k: val(&div),
            tr_k: tr.value(),
            grad_tr_k: val(&geom.gradient(&tr)),
        })
    }
}

pub fn curvature_jet(chart: &AmbientChart, x: &[f64]) -> Result<CurvatureJet> {
    CurvatureSeries::at(chart, x)?.jet(x)
}
