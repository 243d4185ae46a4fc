//! Taylor model of the exponential map at `c(τ)` and the rescaled data
//! `(g_{τ,r}, k_{τ,r})` on the unit-scale ball.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cell::OnceCell;

use crate::chart::AmbientChart;
use crate::error::{Error, Result};
use crate::geodesic::NormalFrame;
use crate::jets::{christoffel, invert};
use crate::scalar::{Dual, Scalar};
use crate::series::{MonomialTable, Series};

/// Degree bounds of the exponential-map model.
pub const MIN_DEGREE: usize = 6;
pub const MAX_DEGREE: usize = 18;

/// Smallest degree `D` with `(1.2 r / R)^{D−2} ≤ 1e−13`, clamped to
/// `[MIN_DEGREE, MAX_DEGREE]`.
pub fn degree_for(r: f64, validity: f64) -> usize {
    let q = (1.2 * r / validity).min(0.999);
    let need = libm::ceil(libm::log(1e-13) / libm::log(q)) as usize + 2;
    need.clamp(MIN_DEGREE, MAX_DEGREE)
}

/// `E(V) = exp_{c}(V^i e_i)` as a Taylor polynomial in `V`, with the metric
/// and `k` pulled back to these normal coordinates.
#[derive(Debug)]
pub struct ExpModel {
    pub dim: usize,
    pub frame: NormalFrame,
    pub table: Arc<MonomialTable>,
    /// Chart coordinates `E^a(V)`.
    pub exp: Vec<Series>,
    /// `G_ij(V) = g_ab(E) ∂_i E^a ∂_j E^b`, full `dim × dim`.
    pub metric: Vec<Series>,
    /// `K_ij(V) = k_ab(E) ∂_i E^a ∂_j E^b`.
    pub k: Vec<Series>,
}

impl ExpModel {
    /// Solves the geodesic equation degree by degree: along `t ↦ E(tV)` the
    /// equation reads `(𝓔² − 𝓔) E = −Γ(E)(𝓔E, 𝓔E)` with `𝓔` the Euler
    /// operator, which fixes the degree-`d` part from lower ones.
    pub fn build(chart: &AmbientChart, frame: NormalFrame, degree: usize) -> Result<Self> {
        let dim = chart.dim;
        chart.check_domain(&frame.point)?;
        chart.check_metric(&frame.point)?;
        let table = MonomialTable::new(dim, degree);
        let mut exp: Vec<Series> = (0..dim)
            .map(|a| {
                let mut s = Series::constant(&table, frame.point[a]);
                for i in 0..dim {
                    s = s + Series::variable(&table, i, 0.0).scale(frame.frame[i][a]);
                }
                s
            })
            .collect();
        for d in 2..=degree {
            let et: Vec<Series> = exp.iter().map(|s| s.clone().with_order(d)).collect();
            let w: Vec<Series> = et.iter().map(|s| s.euler()).collect();
            let xd: Vec<Dual<Series>> = (0..dim).map(|c| Dual::variable(et[c].clone(), dim, c)).collect();
            let g = chart.metric(&xd);
            let gv: Vec<Series> = g.iter().map(|x| x.v.clone()).collect();
            let ginv = invert(&gv, dim);
            let mut dg = Vec::with_capacity(dim * dim * dim);
            for c in 0..dim {
                for ab in 0..dim * dim {
                    dg.push(g[ab].d[c].clone());
                }
            }
            let gamma = christoffel(&ginv, &dg, dim);
            let ww: Vec<Series> = (0..dim * dim)
                .map(|bc| if bc / dim <= bc % dim { &w[bc / dim] * &w[bc % dim] } else { et[0].zero_like() })
                .collect();
            for a in 0..dim {
                let mut acc = et[0].zero_like();
                for b in 0..dim {
                    for c in b..dim {
                        let f = if b == c { 1.0 } else { 2.0 };
                        acc = acc + (&gamma[a * dim * dim + b * dim + c] * &ww[b * dim + c]).scale(f);
                    }
                }
                let part = acc.homogeneous(d).scale(-1.0 / (d * (d - 1)) as f64);
                exp[a] = exp[a].clone() + Series::from_coeffs(&table, degree, part.coeffs().to_vec());
            }
        }
        if exp.iter().any(|s| s.coeffs().iter().any(|c| !c.is_finite())) {
            return Err(Error::Integration("non-finite exponential-map coefficients".into()));
        }
        let de: Vec<Vec<Series>> = (0..dim).map(|i| (0..dim).map(|a| exp[a].derivative(i)).collect()).collect();
        let pull = |t: Vec<Series>| -> Vec<Series> {
            let mut out = alloc::vec![exp[0].zero_like(); dim * dim];
            for i in 0..dim {
                for j in i..dim {
                    let mut s = de[0][0].zero_like();
                    for a in 0..dim {
                        for b in 0..dim {
                            s = s + &(&t[a * dim + b] * &de[i][a]) * &de[j][b];
                        }
                    }
                    out[j * dim + i] = s.clone();
                    out[i * dim + j] = s;
                }
            }
            out
        };
        let metric = pull(chart.metric(&exp));
        let k = pull(chart.k_tensor(&exp));
        Ok(ExpModel { dim, frame, table, exp, metric, k })
    }

    pub fn degree(&self) -> usize {
        self.table.order()
    }
}

/// Second derivatives of a family of series, `[c][e][m]` flattened with
/// `c ≤ e` stored symmetrically.
fn second_derivatives(s: &[Series], dim: usize) -> Vec<Series> {
    let mut out = Vec::with_capacity(dim * dim * s.len());
    let first: Vec<Vec<Series>> = (0..dim).map(|c| s.iter().map(|x| x.derivative(c)).collect()).collect();
    for c in 0..dim {
        for e in 0..dim {
            for m in 0..s.len() {
                if e >= c {
                    out.push(first[c][m].derivative(e));
                } else {
                    out.push(out[(e * dim + c) * s.len() + m].clone());
                }
            }
        }
    }
    out
}

/// The rescaled data `g_{τ,r}(y) = G(r y)`, `k_{τ,r}(y) = r K(r y)` and the
/// leaf map `y ↦ E(r y)`, as polynomials in `y` on `B_2`.
#[derive(Debug)]
pub struct Rescaled {
    pub r: f64,
    pub model: Arc<ExpModel>,
    /// Monomial degree beyond which the dilated coefficients are negligible.
    pub eval_degree: usize,
    pub g: Vec<Series>,
    /// `dg[c * dim² + ab] = ∂_c g_ab`.
    pub dg: Vec<Series>,
    pub k: Vec<Series>,
    pub dk: Vec<Series>,
    pub pos: Vec<Series>,
    ddg: OnceCell<Vec<Series>>,
    dpos: OnceCell<(Vec<Series>, Vec<Series>)>,
}

/// Values of the rescaled data at one point.
#[derive(Clone, Debug)]
pub struct PointData {
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    pub k: Vec<f64>,
    pub dk: Vec<f64>,
}

impl Rescaled {
    pub fn new(model: Arc<ExpModel>, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidInput(alloc::format!("radius must be positive (got {r})")));
        }
        let dim = model.dim;
        let g: Vec<Series> = model.metric.iter().map(|s| s.dilate(r)).collect();
        let k: Vec<Series> = model.k.iter().map(|s| s.dilate(r).scale(r)).collect();
        let pos: Vec<Series> = model.exp.iter().map(|s| s.dilate(r)).collect();
        let diff =
            |v: &[Series]| -> Vec<Series> { (0..dim).flat_map(|c| v.iter().map(move |s| s.derivative(c))).collect() };
        let dg = diff(&g);
        let dk = diff(&k);
        let eval_degree = g.iter().map(|s| s.effective_degree(1e-18)).max().unwrap_or(0).max(2);
        Ok(Rescaled { r, model, eval_degree, g, dg, k, dk, pos, ddg: OnceCell::new(), dpos: OnceCell::new() })
    }

    pub fn dim(&self) -> usize {
        self.model.dim
    }

    pub fn monomials(&self, y: &[f64], out: &mut Vec<f64>) {
        self.model.table.monomials(y, (self.eval_degree + 1).min(self.model.degree()), out);
    }

    pub fn point(&self, mono: &[f64]) -> PointData {
        let dot = |v: &[Series]| v.iter().map(|s| s.dot(mono)).collect::<Vec<f64>>();
        PointData { g: dot(&self.g), dg: dot(&self.dg), k: dot(&self.k), dk: dot(&self.dk) }
    }

    /// `ddg[(c * dim + e) * dim² + ab] = ∂_c ∂_e g_ab`.
    pub fn ddg(&self) -> &[Series] {
        self.ddg.get_or_init(|| second_derivatives(&self.g, self.dim()))
    }

    /// `∂_i E^a(r y)` and `∂_i ∂_j E^a(r y)` (with respect to `y`).
    pub fn dpos(&self) -> &(Vec<Series>, Vec<Series>) {
        self.dpos.get_or_init(|| {
            let dim = self.dim();
            let d1 = (0..dim).flat_map(|c| self.pos.iter().map(move |s| s.derivative(c))).collect();
            (d1, second_derivatives(&self.pos, dim))
        })
    }

    pub fn eval(v: &[Series], mono: &[f64]) -> Vec<f64> {
        v.iter().map(|s| s.dot(mono)).collect()
    }

    /// Chart coordinates of the point `y` of the rescaled ball.
    pub fn position(&self, y: &[f64]) -> Vec<f64> {
        let mut m = Vec::new();
        self.model.table.monomials(y, self.model.degree(), &mut m);
        Self::eval(&self.pos, &m)
    }
}
