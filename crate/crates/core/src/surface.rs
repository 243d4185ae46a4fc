//! Perturbed geodesic spheres `S_{φ,τ,r}`: embedding, second fundamental
//! form, `H`, `P`, the residuals of the prescribed-curvature equations, the
//! lapse, recentering and leaf diagnostics.
//!
//! Everything is evaluated on the rescaled ball: in normal coordinates `y`
//! about `c(τ)` with `g_{τ,r}(y) = G(ry)` and `k_{τ,r}(y) = rK(ry)`, the leaf
//! is the graph `y = x(1 + sφ(x))` over `S^n` with `s = r²` (theorem
//! normalization) or `s = 1` (raw offset). Rescaled `H`, `P` equal `r·H_g`,
//! `r·P_g`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chart::AmbientChart;
use crate::error::{Error, Result};
use crate::geodesic::{geodesic_distance, NormalFrame};
use crate::jets::{christoffel, invert};
use crate::model::{degree_for, ExpModel, Rescaled};
use crate::scalar::{Dual, Scalar};
use crate::sphere::{SphereField, SphereGrid};

/// Embeddedness threshold on `‖sφ‖_{C¹}`.
pub const EMBEDDING_THRESHOLD: f64 = 0.5;

/// Which prescribed-curvature equation a leaf should satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `H² − P² = n²/r²`.
    Stcmc,
    /// `H + P = n/r`.
    CePlus,
    /// `H − P = n/r`.
    CeMinus,
}

impl Variant {
    /// Order in `r` of the kernel part of the residual.
    pub fn kernel_power(self) -> i32 {
        match self {
            Variant::Stcmc => 3,
            _ => 2,
        }
    }

    /// `±1` for the expansion variants, `0` for STCMC.
    pub fn sign(self) -> f64 {
        match self {
            Variant::Stcmc => 0.0,
            Variant::CePlus => 1.0,
            Variant::CeMinus => -1.0,
        }
    }

    /// Rescaled residual from rescaled `H`, `P`.
    pub fn residual<S: Scalar>(self, h: &S, p: &S, n: f64) -> S {
        match self {
            Variant::Stcmc => (h.square() - p.square()).shift(-n * n),
            Variant::CePlus => (h.clone() + p.clone()).shift(-n),
            Variant::CeMinus => (h.clone() - p.clone()).shift(-n),
        }
    }
}

/// Normalization of the graph offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Offset {
    /// Offset `r²φ`.
    Theorem,
    /// Offset `φ`.
    Raw,
}

impl Offset {
    pub fn scale(self, r: f64) -> f64 {
        match self {
            Offset::Theorem => r * r,
            Offset::Raw => 1.0,
        }
    }
}

/// Builds the rescaled data about `c(τ)` at radius `r`.
pub fn leaf_data(chart: &AmbientChart, r: f64, tau: &[f64]) -> Result<Arc<Rescaled>> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput(alloc::format!("radius must be positive (got {r})")));
    }
    if tau.len() != chart.dim {
        return Err(Error::InvalidInput(alloc::format!("τ has {} components, expected {}", tau.len(), chart.dim)));
    }
    let frame = NormalFrame::transported(chart, tau, 1e-13)?;
    let off: f64 = frame.point.iter().zip(&chart.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let room = chart.validity_radius - off;
    if room <= r {
        return Err(Error::Domain { distance: off + r, radius: chart.validity_radius });
    }
    let model = ExpModel::build(chart, frame, degree_for(r, room))?;
    Rescaled::new(Arc::new(model), r).map(Arc::new)
}

/// Index of the jet entry `∂_α φ` in the node jets.
fn first(n: usize, a: usize) -> usize {
    let _ = n;
    1 + a
}

/// Index of `∂_α∂_β φ`; also the position of `(α, β)` in second-derivative
/// lists shifted by `1 + n`.
fn second(n: usize, a: usize, b: usize) -> usize {
    1 + n + a + b
}

fn pair(a: usize, b: usize) -> usize {
    a + b
}

/// Position of a sphere node and its angular derivatives.
#[derive(Clone, Debug)]
struct SphereJet {
    x: Vec<f64>,
    xa: Vec<Vec<f64>>,
    xab: Vec<Vec<f64>>,
}

fn sphere_jet(n: usize, angles: [f64; 2]) -> SphereJet {
    let (ct, st) = (libm::cos(angles[0]), libm::sin(angles[0]));
    let (cl, sl) = (libm::cos(angles[1]), libm::sin(angles[1]));
    if n == 1 {
        let x = vec![cl, sl];
        return SphereJet { xa: vec![vec![-sl, cl]], xab: vec![vec![-cl, -sl]], x };
    }
    SphereJet {
        x: vec![st * cl, st * sl, ct],
        xa: vec![vec![ct * cl, ct * sl, -st], vec![-st * sl, st * cl, 0.0]],
        xab: vec![vec![-st * cl, -st * sl, -ct], vec![-ct * sl, ct * cl, 0.0], vec![-st * cl, -st * sl, 0.0]],
    }
}

fn angles_of(x: &[f64]) -> [f64; 2] {
    if x.len() == 2 {
        [0.0, libm::atan2(x[1], x[0])]
    } else {
        [libm::acos(x[2].clamp(-1.0, 1.0)), libm::atan2(x[1], x[0])]
    }
}

/// `y = x(1 + sφ)` and its first and second angular derivatives.
fn graph<S: Scalar>(n: usize, xj: &SphereJet, jet: &[S], s: f64) -> (Vec<S>, Vec<Vec<S>>, Vec<Vec<S>>) {
    let d = n + 1;
    let f = jet[0].scale(s).shift(1.0);
    let y = (0..d).map(|a| f.scale(xj.x[a])).collect();
    let ya = (0..n)
        .map(|al| (0..d).map(|a| f.scale(xj.xa[al][a]) + jet[first(n, al)].scale(s * xj.x[a])).collect())
        .collect();
    let mut yab = Vec::new();
    for al in 0..n {
        for be in al..n {
            let p = pair(al, be);
            yab.push(
                (0..d)
                    .map(|a| {
                        f.scale(xj.xab[p][a])
                            + jet[first(n, al)].scale(s * xj.xa[be][a])
                            + jet[first(n, be)].scale(s * xj.xa[al][a])
                            + jet[second(n, al, be)].scale(s * xj.x[a])
                    })
                    .collect(),
            );
        }
    }
    (y, ya, yab)
}

/// Extrinsic geometry at one node.
#[derive(Clone, Debug)]
struct Shape<S> {
    h: Vec<S>,
    hinv: Vec<S>,
    nu: Vec<S>,
    nu_low: Vec<S>,
    b: Vec<S>,
    mean: S,
    p: S,
}

/// `ν` is the outward unit normal; `B_αβ = −g(∇_α ∂_β X, ν)` so that the
/// round sphere has `H = +n/r`; `P = tr_g k − k(ν, ν)`.
fn shape<S: Scalar>(n: usize, ya: &[Vec<S>], yab: &[Vec<S>], g: &[S], dg: &[S], k: &[S]) -> Shape<S> {
    let d = n + 1;
    let ginv = invert(g, d);
    let omega: Vec<S> = if n == 2 {
        let (u, v) = (&ya[0], &ya[1]);
        vec![
            u[1].clone() * v[2].clone() - u[2].clone() * v[1].clone(),
            u[2].clone() * v[0].clone() - u[0].clone() * v[2].clone(),
            u[0].clone() * v[1].clone() - u[1].clone() * v[0].clone(),
        ]
    } else {
        vec![ya[0][1].clone(), -ya[0][0].clone()]
    };
    let zero = g[0].zero_like();
    let mut on2 = zero.clone();
    for a in 0..d {
        for b in 0..d {
            on2 = on2 + ginv[a * d + b].clone() * omega[a].clone() * omega[b].clone();
        }
    }
    let inv = on2.sqrt().recip();
    let nu_low: Vec<S> = omega.iter().map(|w| w.clone() * inv.clone()).collect();
    let nu: Vec<S> =
        (0..d).map(|a| (0..d).fold(zero.clone(), |s, b| s + ginv[a * d + b].clone() * nu_low[b].clone())).collect();
    let gamma = christoffel(&ginv, dg, d);
    let mut h = vec![zero.clone(); n * n];
    for al in 0..n {
        for be in 0..n {
            let mut s = zero.clone();
            for a in 0..d {
                for b in 0..d {
                    s = s + g[a * d + b].clone() * ya[al][a].clone() * ya[be][b].clone();
                }
            }
            h[al * n + be] = s;
        }
    }
    let hinv = invert(&h, n);
    let mut bf = vec![zero.clone(); n * n];
    for al in 0..n {
        for be in al..n {
            let mut s = zero.clone();
            for a in 0..d {
                let mut acc = yab[pair(al, be)][a].clone();
                for b in 0..d {
                    for c in 0..d {
                        acc = acc + gamma[a * d * d + b * d + c].clone() * ya[al][b].clone() * ya[be][c].clone();
                    }
                }
                s = s - nu_low[a].clone() * acc;
            }
            bf[be * n + al] = s.clone();
            bf[al * n + be] = s;
        }
    }
    let mean = (0..n * n).fold(zero.clone(), |s, i| s + hinv[i].clone() * bf[i].clone());
    let mut tr = zero.clone();
    let mut knn = zero.clone();
    for a in 0..d {
        for b in 0..d {
            tr = tr + ginv[a * d + b].clone() * k[a * d + b].clone();
            knn = knn + k[a * d + b].clone() * nu[a].clone() * nu[b].clone();
        }
    }
    Shape { h, hinv, nu, nu_low, b: bf, mean, p: tr - knn }
}

/// Lifts field values with gradients (`grads[c * m + i] = ∂_c f_i`) to duals
/// along the dual point `y`.
fn lift(vals: &[f64], grads: &[f64], y: &[Dual<f64>]) -> Vec<Dual<f64>> {
    let m = vals.len();
    let dirs = y[0].d.len();
    (0..m)
        .map(|i| {
            let mut d = vec![0.0; dirs];
            for (c, yc) in y.iter().enumerate() {
                let gci = grads[c * m + i];
                if gci != 0.0 {
                    for (dk, yk) in d.iter_mut().zip(&yc.d) {
                        *dk += gci * yk;
                    }
                }
            }
            Dual { v: vals[i], d }
        })
        .collect()
}

/// Geometry of the leaf at one grid node (rescaled quantities).
#[derive(Clone, Debug)]
pub struct NodeGeometry {
    /// `[φ, ∂φ…, ∂∂φ…]` at the node.
    pub jet: Vec<f64>,
    pub y: Vec<f64>,
    pub tangents: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub normal: Vec<f64>,
    pub normal_low: Vec<f64>,
    pub metric: Vec<f64>,
    pub metric_inv: Vec<f64>,
    pub b: Vec<f64>,
    pub mean: f64,
    pub p: f64,
    pub b_norm2: f64,
    /// Ambient chart coordinates of the node.
    pub position: Vec<f64>,
}

/// A leaf `S_{φ,τ,r}` sampled on the grid nodes.
#[derive(Clone, Debug)]
pub struct LeafEmbedding {
    pub r: f64,
    pub tau: Vec<f64>,
    pub phi: SphereField,
    pub offset: Offset,
    pub data: Arc<Rescaled>,
    pub nodes: Vec<NodeGeometry>,
}

/// `F_{φ,τ,r}`: builds the rescaled data and samples the leaf.
pub fn embed_leaf(
    chart: &AmbientChart,
    r: f64,
    tau: &[f64],
    phi: &SphereField,
    offset: Offset,
) -> Result<LeafEmbedding> {
    let data = leaf_data(chart, r, tau)?;
    LeafEmbedding::new(chart, data, phi.clone(), offset)
}

fn node_jets(phi: &SphereField) -> Vec<Vec<f64>> {
    let g = phi.grid();
    let tabs: Vec<Vec<f64>> = (0..g.derivative_tables()).map(|d| phi.derivative(d)).collect();
    (0..g.len()).map(|i| tabs.iter().map(|t| t[i]).collect()).collect()
}

impl LeafEmbedding {
    pub fn new(chart: &AmbientChart, data: Arc<Rescaled>, phi: SphereField, offset: Offset) -> Result<Self> {
        let grid = phi.grid().clone();
        let n = grid.n();
        if data.dim() != n + 1 {
            return Err(Error::InvalidInput(alloc::format!(
                "sphere dimension {n} does not match ambient dimension {}",
                data.dim()
            )));
        }
        let r = data.r;
        let s = offset.scale(r);
        let jets = node_jets(&phi);
        let mut c1 = 0.0f64;
        for (i, j) in jets.iter().enumerate() {
            let th = grid.angles(i)[0];
            let grad2 = if n == 1 { j[1] * j[1] } else { j[1] * j[1] + j[2] * j[2] / libm::pow(libm::sin(th), 2.0) };
            c1 = c1.max(s * (j[0].abs() + libm::sqrt(grad2)));
        }
        if c1 >= EMBEDDING_THRESHOLD {
            return Err(Error::Geometry(alloc::format!("‖sφ‖_C¹ = {c1:.3e} exceeds the embedding threshold")));
        }
        let mut mono = Vec::new();
        let mut nodes = Vec::with_capacity(grid.len());
        for (i, jet) in jets.into_iter().enumerate() {
            let xj = sphere_jet(n, grid.angles(i));
            let (y, ya, yab) = graph(n, &xj, &jet, s);
            data.monomials(&y, &mut mono);
            let pd = data.point(&mono);
            let sh = shape(n, &ya, &yab, &pd.g, &pd.dg, &pd.k);
            let det = if n == 1 { sh.h[0] } else { sh.h[0] * sh.h[3] - sh.h[1] * sh.h[2] };
            if !(det > 0.0) || !sh.mean.is_finite() {
                return Err(Error::Geometry(alloc::format!("degenerate induced metric at node {i}")));
            }
            let mut b2 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for e in 0..n {
                            b2 += sh.b[a * n + b] * sh.b[c * n + e] * sh.hinv[a * n + c] * sh.hinv[b * n + e];
                        }
                    }
                }
            }
            let position = data.position(&y);
            chart.check_domain(&position)?;
            nodes.push(NodeGeometry {
                jet,
                y,
                tangents: ya,
                second: yab,
                normal: sh.nu,
                normal_low: sh.nu_low,
                metric: sh.h,
                metric_inv: sh.hinv,
                b: sh.b,
                mean: sh.mean,
                p: sh.p,
                b_norm2: b2,
                position,
            });
        }
        Ok(LeafEmbedding { r, tau: data.model.frame.tau.clone(), phi, offset, data, nodes })
    }

    pub fn n(&self) -> usize {
        self.grid().n()
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        self.phi.grid()
    }

    fn field(&self, f: impl Fn(&NodeGeometry) -> f64) -> SphereField {
        SphereField::from_values(self.grid(), self.nodes.iter().map(f).collect())
    }

    /// `H_g` (unrescaled).
    pub fn mean_curvature(&self) -> SphereField {
        self.field(|g| g.mean / self.r)
    }

    /// `P_g = tr_g k − k(ν, ν)` (unrescaled).
    pub fn p_trace(&self) -> SphereField {
        self.field(|g| g.p / self.r)
    }

    /// Rescaled mean curvature `r·H_g`.
    pub fn rescaled_mean(&self) -> SphereField {
        self.field(|g| g.mean)
    }

    /// Rescaled residual: `r²(H_g² − P_g²) − n²` or `r(H_g ± P_g) − n`.
    pub fn residual(&self, variant: Variant) -> SphereField {
        let n = self.n() as f64;
        self.field(|g| variant.residual(&g.mean, &g.p, n))
    }

    /// `∂R_i/∂(jet_d φ)(x_i)` for every node: `out[d][i]`.
    pub fn residual_sensitivity(&self, variant: Variant) -> Vec<Vec<f64>> {
        let grid = self.grid();
        let n = grid.n();
        let nj = grid.derivative_tables();
        let s = self.offset.scale(self.r);
        let data = &self.data;
        let ddg = data.ddg();
        let mut mono = Vec::new();
        let mut out = vec![vec![0.0; grid.len()]; nj];
        for (i, node) in self.nodes.iter().enumerate() {
            let jet: Vec<Dual<f64>> = (0..nj).map(|d| Dual::variable(node.jet[d], nj, d)).collect();
            let xj = sphere_jet(n, grid.angles(i));
            let (y, ya, yab) = graph(n, &xj, &jet, s);
            data.monomials(&node.y, &mut mono);
            let pd = data.point(&mono);
            let g = lift(&pd.g, &pd.dg, &y);
            let dg = lift(&pd.dg, &Rescaled::eval(ddg, &mono), &y);
            let k = lift(&pd.k, &pd.dk, &y);
            let sh = shape(n, &ya, &yab, &g, &dg, &k);
            let res = variant.residual(&sh.mean, &sh.p, n as f64);
            for d in 0..nj {
                out[d][i] = res.d[d];
            }
        }
        out
    }

    /// First variation of rescaled `P²` along the graph direction `δ`:
    /// `2P·dP` with `w = sδx`,
    /// `dP = w·∂(tr k) − (w·∂k)(ν, ν) − 2k(ν, dν)`,
    /// `dν = −h^{αβ}⟨∇_β w, ν⟩ ∂_α y − Γ(w, ν)`.
    pub fn linearized_p_squared(&self, delta: &SphereField) -> SphereField {
        let grid = self.grid();
        let (n, d) = (grid.n(), grid.n() + 1);
        let s = self.offset.scale(self.r);
        let dj = node_jets(delta);
        let mut mono = Vec::new();
        let vals = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let xj = sphere_jet(n, grid.angles(i));
                self.data.monomials(&node.y, &mut mono);
                let pd = self.data.point(&mono);
                let ginv = invert(&pd.g, d);
                let gamma = christoffel(&ginv, &pd.dg, d);
                let w: Vec<f64> = (0..d).map(|a| s * dj[i][0] * xj.x[a]).collect();
                // ∂_c tr k
                let dtr = |c: usize| {
                    let mut t = 0.0;
                    for a in 0..d {
                        for b in 0..d {
                            t += ginv[a * d + b] * pd.dk[c * d * d + a * d + b];
                            for e in 0..d {
                                for f in 0..d {
                                    t -= ginv[a * d + e]
                                        * pd.dg[c * d * d + e * d + f]
                                        * ginv[f * d + b]
                                        * pd.k[a * d + b];
                                }
                            }
                        }
                    }
                    t
                };
                let mut dp = 0.0;
                for c in 0..d {
                    if w[c] == 0.0 {
                        continue;
                    }
                    dp += w[c] * dtr(c);
                    for a in 0..d {
                        for b in 0..d {
                            dp -= w[c] * pd.dk[c * d * d + a * d + b] * node.normal[a] * node.normal[b];
                        }
                    }
                }
                // ⟨∇_β w, ν⟩
                let nw: Vec<f64> = (0..n)
                    .map(|be| {
                        (0..d)
                            .map(|a| {
                                let mut v = s * (dj[i][first(n, be)] * xj.x[a] + dj[i][0] * xj.xa[be][a]);
                                for b in 0..d {
                                    for c in 0..d {
                                        v += gamma[a * d * d + b * d + c] * node.tangents[be][b] * w[c];
                                    }
                                }
                                node.normal_low[a] * v
                            })
                            .sum()
                    })
                    .collect();
                let mut dnu = vec![0.0; d];
                for a in 0..d {
                    for al in 0..n {
                        for be in 0..n {
                            dnu[a] -= node.metric_inv[al * n + be] * nw[be] * node.tangents[al][a];
                        }
                    }
                    for c in 0..d {
                        for e in 0..d {
                            dnu[a] -= gamma[a * d * d + c * d + e] * w[c] * node.normal[e];
                        }
                    }
                }
                for a in 0..d {
                    for b in 0..d {
                        dp -= 2.0 * pd.k[a * d + b] * node.normal[a] * dnu[b];
                    }
                }
                2.0 * node.p * dp
            })
            .collect();
        SphereField::from_values(grid, vals)
    }

    /// Lapse `α = 1 + (dτ^k/dr)⟨e_k, ν⟩`.
    pub fn lapse(&self, dtau_dr: &[f64]) -> SphereField {
        let d = self.n() + 1;
        let mut mono = Vec::new();
        let vals = self
            .nodes
            .iter()
            .map(|node| {
                self.data.monomials(&node.y, &mut mono);
                let g = Rescaled::eval(&self.data.g, &mono);
                let mut a = 1.0;
                for k in 0..d {
                    for b in 0..d {
                        a += dtau_dr[k] * g[k * d + b] * node.normal[b];
                    }
                }
                a
            })
            .collect();
        SphereField::from_values(self.grid(), vals)
    }

    /// `(H_g, P_g)` per node computed directly in the chart from `X = E(ry)`,
    /// independently of the rescaled metric.
    pub fn chart_route(&self, chart: &AmbientChart) -> Vec<(f64, f64)> {
        let (n, d) = (self.n(), self.n() + 1);
        let (d1, d2) = self.data.dpos();
        let mut mono = Vec::new();
        self.nodes
            .iter()
            .map(|node| {
                self.data.model.table.monomials(&node.y, self.data.model.degree(), &mut mono);
                let dp = Rescaled::eval(d1, &mono);
                let ddp = Rescaled::eval(d2, &mono);
                let xa: Vec<Vec<f64>> = (0..n)
                    .map(|al| (0..d).map(|a| (0..d).map(|c| dp[c * d + a] * node.tangents[al][c]).sum()).collect())
                    .collect();
                let mut xab = Vec::new();
                for al in 0..n {
                    for be in al..n {
                        xab.push(
                            (0..d)
                                .map(|a| {
                                    let mut v = 0.0;
                                    for c in 0..d {
                                        v += dp[c * d + a] * node.second[pair(al, be)][c];
                                        for e in 0..d {
                                            v += ddp[(c * d + e) * d + a] * node.tangents[al][c] * node.tangents[be][e];
                                        }
                                    }
                                    v
                                })
                                .collect(),
                        );
                    }
                }
                let x: Vec<Dual<f64>> = (0..d).map(|c| Dual::variable(node.position[c], d, c)).collect();
                let gd = chart.metric(&x);
                let g: Vec<f64> = gd.iter().map(|v| v.v).collect();
                let dg: Vec<f64> = (0..d).flat_map(|c| gd.iter().map(move |v| v.d[c])).collect();
                let k = chart.k_at(&node.position);
                let sh = shape(n, &xa, &xab, &g, &dg, &k);
                (sh.mean, sh.p)
            })
            .collect()
    }
}

/// Ricci tensor at a point from `g`, `∂g`, `∂∂g`.
fn ricci_at(g: &[f64], dg: &[f64], ddg: &[f64], d: usize) -> Vec<f64> {
    let m = d * d;
    let gd: Vec<Dual<f64>> = (0..m).map(|ab| Dual { v: g[ab], d: (0..d).map(|c| dg[c * m + ab]).collect() }).collect();
    let dgd: Vec<Dual<f64>> = (0..d * m)
        .map(|i| {
            let (c, ab) = (i / m, i % m);
            Dual { v: dg[i], d: (0..d).map(|e| ddg[(c * d + e) * m + ab]).collect() }
        })
        .collect();
    let ginv = invert(&gd, d);
    let gm = christoffel(&ginv, &dgd, d);
    let at = |a: usize, b: usize, c: usize| &gm[a * m + b * d + c];
    let mut ric = vec![0.0; m];
    for b in 0..d {
        for e in 0..d {
            let mut s = 0.0;
            for a in 0..d {
                s += at(a, e, b).d[a] - at(a, a, b).d[e];
                for f in 0..d {
                    s += at(a, a, f).v * at(f, e, b).v - at(a, e, f).v * at(f, a, b).v;
                }
            }
            ric[b * d + e] = s;
        }
    }
    ric
}

/// How the diameter was measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiameterKind {
    /// Max pairwise chord in normal coordinates, scaled by the metric bound.
    NormalChord,
    /// Geodesic distance between the farthest node pairs by shooting.
    Geodesic,
}

/// Leaf diagnostics in physical units.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeafDiagnostics {
    pub diam: f64,
    pub diam_kind: DiameterKind,
    pub diam_chord: f64,
    pub diam_geodesic: Option<f64>,
    pub sup_b: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub h_diam_min: f64,
    pub h_diam_max: f64,
    pub b_diam: f64,
    /// `λ₁(−Δ − |B|² − Ric(ν,ν))`; `None` when the eigenproblem failed.
    pub jacobi_lambda1: Option<f64>,
}

impl LeafEmbedding {
    /// Diameter, curvature bounds and the first Jacobi eigenvalue.
    pub fn diagnostics(&self, chart: &AmbientChart, geodesic_diam: bool) -> Result<LeafDiagnostics> {
        let r = self.r;
        let d = self.n() + 1;
        let mut mono = Vec::new();
        let mut lmax = 0.0f64;
        for node in &self.nodes {
            self.data.monomials(&node.y, &mut mono);
            let g = DMatrix::from_row_slice(d, d, &Rescaled::eval(&self.data.g, &mono));
            lmax = lmax.max(g.symmetric_eigenvalues().max());
        }
        let mut best = 0.0f64;
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, a) in self.nodes.iter().enumerate() {
            for (j, b) in self.nodes.iter().enumerate().skip(i + 1) {
                let c: f64 = a.y.iter().zip(&b.y).map(|(u, v)| (u - v) * (u - v)).sum();
                if c > best * 0.98 {
                    best = best.max(c);
                    pairs.push((c, i, j));
                }
            }
        }
        let diam_chord = r * libm::sqrt(best * lmax);
        let diam_geodesic = if geodesic_diam {
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut m = 0.0f64;
            for &(_, i, j) in pairs.iter().take(6) {
                m = m.max(geodesic_distance(chart, &self.nodes[i].position, &self.nodes[j].position, 1e-12)?);
            }
            Some(m)
        } else {
            None
        };
        let (diam, diam_kind) = match diam_geodesic {
            Some(g) => (g, DiameterKind::Geodesic),
            None => (diam_chord, DiameterKind::NormalChord),
        };
        let sup_b = self.nodes.iter().fold(0.0f64, |m, g| m.max(g.b_norm2.sqrt())) / r;
        let h_min = self.nodes.iter().fold(f64::INFINITY, |m, g| m.min(g.mean)) / r;
        let h_max = self.nodes.iter().fold(f64::NEG_INFINITY, |m, g| m.max(g.mean)) / r;
        Ok(LeafDiagnostics {
            diam,
            diam_kind,
            diam_chord,
            diam_geodesic,
            sup_b,
            h_min,
            h_max,
            h_diam_min: h_min * diam,
            h_diam_max: h_max * diam,
            b_diam: sup_b * diam,
            jacobi_lambda1: self.jacobi_lambda1().map(|l| l / (r * r)),
        })
    }

    /// Rescaled first eigenvalue of `−Δ − |B|² − Ric(ν,ν)` by a Galerkin
    /// method on the harmonic basis with the leaf's area form.
    pub fn jacobi_lambda1(&self) -> Option<f64> {
        let grid = self.grid();
        let (n, d) = (grid.n(), grid.n() + 1);
        let (nn, nb) = (grid.len(), grid.basis_len());
        let ddg = self.data.ddg();
        let mut mono = Vec::new();
        let mut area = vec![0.0; nn];
        let mut pot = vec![0.0; nn];
        for (i, node) in self.nodes.iter().enumerate() {
            let det =
                if n == 1 { node.metric[0] } else { node.metric[0] * node.metric[3] - node.metric[1] * node.metric[2] };
            let jac = if n == 1 { 1.0 } else { libm::sin(grid.angles(i)[0]) };
            area[i] = grid.weights()[i] * libm::sqrt(det) / jac;
            self.data.monomials(&node.y, &mut mono);
            let pd = self.data.point(&mono);
            let ric = ricci_at(&pd.g, &pd.dg, &Rescaled::eval(ddg, &mono), d);
            let mut rnn = 0.0;
            for a in 0..d {
                for b in 0..d {
                    rnn += ric[a * d + b] * node.normal[a] * node.normal[b];
                }
            }
            pot[i] = node.b_norm2 + rnn;
        }
        let table = |t: usize| DMatrix::from_fn(nb, nn, |j, i| grid.basis(t, j)[i]);
        let t0 = table(0);
        let scaled = |t: &DMatrix<f64>, f: &dyn Fn(usize) -> f64| {
            let mut m = t.clone();
            for (i, mut col) in m.column_iter_mut().enumerate() {
                col *= f(i);
            }
            m
        };
        let mass = scaled(&t0, &|i| area[i]) * t0.transpose();
        let mut stiff = -(scaled(&t0, &|i| area[i] * pot[i]) * t0.transpose());
        let ts: Vec<DMatrix<f64>> = (0..n).map(|a| table(first(n, a))).collect();
        for a in 0..n {
            for b in 0..n {
                stiff += scaled(&ts[a], &|i| area[i] * self.nodes[i].metric_inv[a * n + b]) * ts[b].transpose();
            }
        }
        let chol = mass.cholesky()?;
        let linv = chol.l().try_inverse()?;
        let c = &linv * stiff * linv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let ev = c.symmetric_eigenvalues();
        let m = ev.min();
        m.is_finite().then_some(m)
    }
}

/// A leaf re-expressed as a radial graph over directions at the base point.
#[derive(Clone, Debug)]
pub struct Recentered {
    /// `φ̄(y)`: distance from `p` along the direction `y` (grid nodes).
    pub phibar: SphereField,
    /// Largest mismatch `|exp_p(yφ̄(y)) − X|` over the nodes.
    pub roundtrip: f64,
}

/// `ψ = exp_p^{−1}(X)` via Newton on the exponential-map model at `p`.
fn log_map(model: &ExpModel, x: &[f64]) -> Result<Vec<f64>> {
    let d = model.dim;
    let fr = DMatrix::from_fn(d, d, |a, i| model.frame.frame[i][a]);
    let finv = fr.clone().try_inverse().ok_or_else(|| Error::Recentering("singular frame".into()))?;
    let rhs = nalgebra::DVector::from_fn(d, |a, _| x[a] - model.frame.point[a]);
    let mut v: Vec<f64> = (finv * rhs).iter().copied().collect();
    let de: Vec<Vec<_>> = (0..d).map(|i| (0..d).map(|a| model.exp[a].derivative(i)).collect()).collect();
    let mut mono = Vec::new();
    for _ in 0..50 {
        model.table.monomials(&v, model.degree(), &mut mono);
        let f = nalgebra::DVector::from_fn(d, |a, _| model.exp[a].dot(&mono) - x[a]);
        if f.amax() < 1e-14 {
            return Ok(v);
        }
        let j = DMatrix::from_fn(d, d, |a, i| de[i][a].dot(&mono));
        let step = j.lu().solve(&f).ok_or_else(|| Error::Recentering("singular exponential map".into()))?;
        for a in 0..d {
            v[a] -= step[a];
        }
    }
    Err(Error::Recentering("inverse exponential map did not converge".into()))
}

/// Recentering: `φ̄` with `exp_p(y·φ̄(y))` tracing the leaf.
pub fn recenter_leaf(chart: &AmbientChart, leaf: &LeafEmbedding) -> Result<Recentered> {
    let grid = leaf.grid().clone();
    let n = grid.n();
    let tau_norm = libm::sqrt(leaf.tau.iter().map(|t| t * t).sum());
    let reach = tau_norm + 2.0 * leaf.r;
    let frame = NormalFrame::at(chart, &chart.center)?;
    let model = ExpModel::build(chart, frame, degree_for(reach, chart.validity_radius))?;
    let s = leaf.offset.scale(leaf.r);
    let psi_at = |x: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let f = 1.0 + s * leaf.phi.eval_at(angles_of(x));
        let y: Vec<f64> = x.iter().map(|v| v * f).collect();
        let pos = leaf.data.position(&y);
        Ok((log_map(&model, &pos)?, pos))
    };
    let mut vals = Vec::with_capacity(grid.len());
    let mut roundtrip = 0.0f64;
    let mut mono = Vec::new();
    for j in 0..grid.len() {
        let u = grid.node(j);
        let mut x = u.to_vec();
        let mut converged = false;
        let mut psi = Vec::new();
        let mut pos = Vec::new();
        for _ in 0..200 {
            (psi, pos) = psi_at(&x)?;
            let len = libm::sqrt(psi.iter().map(|v| v * v).sum());
            if !(len > 1e-14 * leaf.r) {
                return Err(Error::Recentering(alloc::format!("a leaf point maps to the base point (node {j})")));
            }
            let mut err = 0.0f64;
            for a in 0..=n {
                let e = u[a] - psi[a] / len;
                err = err.max(e.abs());
                x[a] += e;
            }
            let xn = libm::sqrt(x.iter().map(|v| v * v).sum());
            x.iter_mut().for_each(|v| *v /= xn);
            if err < 1e-13 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Recentering(alloc::format!("direction map not invertible near node {j}")));
        }
        let len = libm::sqrt(psi.iter().map(|v| v * v).sum());
        let v: Vec<f64> = u.iter().map(|c| c * len).collect();
        model.table.monomials(&v, model.degree(), &mut mono);
        for a in 0..=n {
            roundtrip = roundtrip.max((model.exp[a].dot(&mono) - pos[a]).abs());
        }
        vals.push(len);
    }
    Ok(Recentered { phibar: SphereField::from_values(&grid, vals), roundtrip })
}

/// Radial fit of `H_g − n/r` on undeformed geodesic spheres against the
/// curvature terms `−⅓ Ric(x,x)` and `−¼ ∇Ric(x,x,x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub radii: Vec<f64>,
    /// Per node: fitted coefficients of `r¹ … r^degree`.
    pub coefficients: Vec<Vec<f64>>,
    pub ricci_term: Vec<f64>,
    pub cov_ricci_term: Vec<f64>,
    /// `max |c₁ − oracle₁| / max |oracle₁|` (absolute when the oracle vanishes).
    pub r1_error: f64,
    pub r2_error: f64,
    pub r1_scale: f64,
    pub r2_scale: f64,
}

/// Fits `Σ_{k=1}^{degree} a_k r^k` to `H_g − n/r` node by node over `radii`.
pub fn expansion_fit(
    chart: &AmbientChart,
    grid: &Arc<SphereGrid>,
    radii: &[f64],
    degree: usize,
) -> Result<ExpansionFit> {
    let dim = chart.dim;
    let n = (dim - 1) as f64;
    if radii.len() < degree || degree < 2 {
        return Err(Error::InvalidInput(alloc::format!(
            "{} radii cannot determine a degree-{degree} fit",
            radii.len()
        )));
    }
    let zero = vec![0.0; dim];
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let leaf = embed_leaf(chart, r, &zero, &SphereField::zeros(grid), Offset::Theorem)?;
        rows.push(leaf.mean_curvature().values().iter().map(|h| h - n / r).collect::<Vec<f64>>());
    }
    let a = DMatrix::from_fn(radii.len(), degree, |i, k| libm::pow(radii[i], (k + 1) as f64));
    let svd = a.svd(true, true);
    let coefficients: Vec<Vec<f64>> = (0..grid.len())
        .map(|node| {
            let b = nalgebra::DVector::from_fn(radii.len(), |i, _| rows[i][node]);
            svd.solve(&b, 1e-300).map(|c| c.iter().copied().collect()).unwrap_or_else(|_| vec![f64::NAN; degree])
        })
        .collect();
    let jet = crate::jets::curvature_jet(chart, &chart.center)?;
    let frame = NormalFrame::at(chart, &chart.center)?;
    let mut ricci_term = Vec::with_capacity(grid.len());
    let mut cov_ricci_term = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let e = frame.vector(grid.node(i));
        let (mut ric, mut dric) = (0.0, 0.0);
        for a in 0..dim {
            for b in 0..dim {
                ric += jet.ricci.at(&[a, b]) * e[a] * e[b];
                for c in 0..dim {
                    dric += jet.cov_ricci.at(&[c, a, b]) * e[a] * e[b] * e[c];
                }
            }
        }
        ricci_term.push(-ric / 3.0);
        cov_ricci_term.push(-dric / 4.0);
    }
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = |k: usize, o: &[f64]| coefficients.iter().zip(o).fold(0.0f64, |m, (c, x)| m.max((c[k] - x).abs()));
    let (r1_scale, r2_scale) = (sup(&ricci_term), sup(&cov_ricci_term));
    let rel = |e: f64, s: f64| if s > 1e-12 { e / s } else { e };
    Ok(ExpansionFit {
        radii: radii.to_vec(),
        r1_error: rel(err(0, &ricci_term), r1_scale),
        r2_error: rel(err(1, &cov_ricci_term), r2_scale),
        coefficients,
        ricci_term,
        cov_ricci_term,
        r1_scale,
        r2_scale,
    })
}
