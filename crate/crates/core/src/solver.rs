//! Lyapunov–Schmidt reduction as a numerical method: Newton on `(τ, φ)` per
//! radius with the kernel block matched against `τ`, continuation in `r`,
//! kernel-obstruction probes and the deformation factory.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chart::{AmbientChart, KModel};
use crate::error::{Error, Result};
use crate::model::Rescaled;
use crate::obstruction::{evaluate, FormOptions, ObstructionReport, Theorem, Verdict};
use crate::sphere::{sphere_area, SphereField, SphereGrid};
use crate::surface::{embed_leaf, leaf_data, LeafDiagnostics, LeafEmbedding, Offset, Variant};

/// How the `φ`-columns of the Newton Jacobian are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    /// Exact derivative of the node residuals in the `φ`-jet, assembled with
    /// the harmonic tables; `τ`-columns by central differences.
    Linearized,
    /// Central differences for every column.
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol_newton: f64,
    pub tol_kernel: f64,
    pub max_iters: usize,
    pub jacobian: JacobianMode,
    /// `τ` difference step as a fraction of the chart validity radius.
    pub tau_step: f64,
    /// Kernel-block condition number above which the reduction is declared
    /// obstructed.
    pub max_condition: f64,
    /// Contraction ratio above which the Jacobian is refreshed.
    pub reuse_ratio: f64,
    pub diagnostics: bool,
    pub geodesic_diam: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_newton: 1e-9,
            tol_kernel: 1e-10,
            max_iters: 40,
            jacobian: JacobianMode::Linearized,
            tau_step: 1e-3,
            max_condition: 1e8,
            reuse_ratio: 0.3,
            diagnostics: true,
            geodesic_diam: false,
        }
    }
}

/// Per-node output of a solved leaf.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeRecord {
    pub angles: [f64; 2],
    pub position: Vec<f64>,
    pub h_g: f64,
    pub p_g: f64,
    pub residual: f64,
    /// `⟨e_k, ν⟩` for each frame vector.
    pub normal_frame: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LeafState {
    pub r: f64,
    pub tau: Vec<f64>,
    /// `φ` in `K^⊥` (graph offset `r²φ`).
    pub phi: SphereField,
    pub residual_sup: f64,
    /// Sup of the normalized kernel projection of the residual.
    pub residual_kernel: f64,
    /// Number of Newton updates taken.
    pub newton_iters: usize,
    /// Residual sup-norm before each update and at the end.
    pub history: Vec<f64>,
    pub diagnostics: Option<LeafDiagnostics>,
    pub nodes: Vec<NodeRecord>,
}

impl LeafState {
    /// `min α` for a given `dτ/dr`.
    pub fn alpha_min(&self, dtau_dr: &[f64]) -> f64 {
        self.nodes
            .iter()
            .map(|n| 1.0 + n.normal_frame.iter().zip(dtau_dr).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}

/// The discretized reduced system at one radius.
///
/// Unknowns `u = [τ; c_j (j ∉ K)]`; equations `[∫R x^l / r^q; ⟨R, Y_j⟩ / r²]`
/// with `q` the kernel order of the variant.
pub struct LsSystem<'a> {
    pub chart: &'a AmbientChart,
    pub grid: Arc<SphereGrid>,
    pub variant: Variant,
    pub r: f64,
    pub offset: Offset,
    /// Absolute `τ` difference step.
    pub tau_step: f64,
    free: Vec<usize>,
    tables: Vec<DMatrix<f64>>,
    /// Rescaled data of the last `τ`, reused while only `φ` varies.
    cache: RefCell<Option<(Vec<f64>, Arc<Rescaled>)>>,
}

/// One evaluation of the reduced system.
pub struct Evaluation {
    pub leaf: LeafEmbedding,
    pub residual: SphereField,
    pub equations: DVector<f64>,
}

impl<'a> LsSystem<'a> {
    pub fn new(chart: &'a AmbientChart, grid: Arc<SphereGrid>, variant: Variant, r: f64) -> Result<Self> {
        if grid.n() + 1 != chart.dim {
            return Err(Error::InvalidInput(alloc::format!(
                "sphere dimension {} does not match chart dimension {}",
                grid.n(),
                chart.dim
            )));
        }
        let free = (0..grid.basis_len()).filter(|&j| grid.degree(j) != 1).collect();
        let (nn, nb) = (grid.len(), grid.basis_len());
        let tables =
            (0..grid.derivative_tables()).map(|d| DMatrix::from_fn(nb, nn, |j, i| grid.basis(d, j)[i])).collect();
        Ok(LsSystem {
            chart,
            grid,
            variant,
            r,
            offset: Offset::Theorem,
            tau_step: 1e-3 * chart.validity_radius,
            free,
            tables,
            cache: RefCell::new(None),
        })
    }

    pub fn dim(&self) -> usize {
        self.chart.dim
    }

    pub fn unknowns(&self) -> usize {
        self.dim() + self.free.len()
    }

    pub fn pack(&self, tau: &[f64], phi: &SphereField) -> DVector<f64> {
        let c = phi.coeffs();
        DVector::from_iterator(self.unknowns(), tau.iter().copied().chain(self.free.iter().map(|&j| c[j])))
    }

    pub fn unpack(&self, u: &DVector<f64>) -> (Vec<f64>, SphereField) {
        let d = self.dim();
        let mut c = vec![0.0; self.grid.basis_len()];
        for (k, &j) in self.free.iter().enumerate() {
            c[j] = u[d + k];
        }
        (u.rows(0, d).iter().copied().collect(), SphereField::from_coeffs(&self.grid, c))
    }

    fn equations(&self, residual: &SphereField) -> DVector<f64> {
        let q = self.variant.kernel_power();
        let kern = residual.kernel_moments();
        let c = residual.coeffs();
        let (rq, r2) = (libm::pow(self.r, q as f64), self.r * self.r);
        DVector::from_iterator(self.unknowns(), kern.iter().map(|v| v / rq).chain(self.free.iter().map(|&j| c[j] / r2)))
    }

    fn data(&self, tau: &[f64]) -> Result<Arc<Rescaled>> {
        if let Some((t, d)) = self.cache.borrow().as_ref() {
            if t.as_slice() == tau {
                return Ok(d.clone());
            }
        }
        let d = leaf_data(self.chart, self.r, tau)?;
        *self.cache.borrow_mut() = Some((tau.to_vec(), d.clone()));
        Ok(d)
    }

    pub fn evaluate(&self, u: &DVector<f64>) -> Result<Evaluation> {
        let (tau, phi) = self.unpack(u);
        let leaf = LeafEmbedding::new(self.chart, self.data(&tau)?, phi, self.offset)?;
        self.finish(leaf)
    }

    fn finish(&self, leaf: LeafEmbedding) -> Result<Evaluation> {
        let residual = leaf.residual(self.variant);
        if residual.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("non-finite residual".into()));
        }
        let equations = self.equations(&residual);
        Ok(Evaluation { leaf, residual, equations })
    }

    /// Evaluation with the same `φ` at a shifted `τ`.
    fn evaluate_tau(&self, tau: &[f64], phi: &SphereField) -> Result<DVector<f64>> {
        let data = leaf_data(self.chart, self.r, tau)?;
        Ok(self.finish(LeafEmbedding::new(self.chart, data, phi.clone(), self.offset)?)?.equations)
    }

    /// Test matrix: rows `x^l w / r^q` then `Y_j w / r²`.
    fn test_matrix(&self) -> DMatrix<f64> {
        let (d, nn) = (self.dim(), self.grid.len());
        let q = self.variant.kernel_power();
        let (rq, r2) = (libm::pow(self.r, q as f64), self.r * self.r);
        let w = self.grid.weights();
        DMatrix::from_fn(self.unknowns(), nn, |m, i| {
            if m < d {
                self.grid.node(i)[m] * w[i] / rq
            } else {
                self.tables[0][(self.free[m - d], i)] * w[i] / r2
            }
        })
    }

    pub fn jacobian(&self, u: &DVector<f64>, at: &Evaluation, mode: JacobianMode) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let m = self.unknowns();
        let (tau, phi) = self.unpack(u);
        let mut jac = DMatrix::zeros(m, m);
        let h = self.tau_step;
        for k in 0..d {
            let (mut tp, mut tm) = (tau.clone(), tau.clone());
            tp[k] += h;
            tm[k] -= h;
            let col = (self.evaluate_tau(&tp, &phi)? - self.evaluate_tau(&tm, &phi)?) / (2.0 * h);
            jac.set_column(k, &col);
        }
        match mode {
            JacobianMode::Linearized => {
                let sens = at.leaf.residual_sensitivity(self.variant);
                let nn = self.grid.len();
                let mut mt = DMatrix::zeros(nn, self.free.len());
                for (dd, s) in sens.iter().enumerate() {
                    for (k, &j) in self.free.iter().enumerate() {
                        for i in 0..nn {
                            mt[(i, k)] += s[i] * self.tables[dd][(j, i)];
                        }
                    }
                }
                let block = self.test_matrix() * mt;
                jac.view_mut((0, d), (m, self.free.len())).copy_from(&block);
            }
            JacobianMode::FiniteDifference => {
                let hp = 1e-6;
                for k in 0..self.free.len() {
                    let (mut up, mut um) = (u.clone(), u.clone());
                    up[d + k] += hp;
                    um[d + k] -= hp;
                    let col = (self.evaluate(&up)?.equations - self.evaluate(&um)?.equations) / (2.0 * hp);
                    jac.set_column(d + k, &col);
                }
            }
        }
        Ok(jac)
    }

    /// Condition number of the reduced kernel block
    /// `J_kτ − J_kφ J_φφ^{-1} J_φτ`.
    pub fn kernel_condition(&self, jac: &DMatrix<f64>) -> f64 {
        let d = self.dim();
        let nf = self.free.len();
        let jkt = jac.view((0, 0), (d, d)).into_owned();
        let jkp = jac.view((0, d), (d, nf)).into_owned();
        let jpt = jac.view((d, 0), (nf, d)).into_owned();
        let jpp = jac.view((d, d), (nf, nf)).into_owned();
        let Some(x) = jpp.lu().solve(&jpt) else { return f64::INFINITY };
        let s = jkt - jkp * x;
        let sv = s.svd(false, false).singular_values;
        let (mn, mx) = (sv.min(), sv.max());
        if mn > 0.0 {
            mx / mn
        } else {
            f64::INFINITY
        }
    }
}

/// Linear coefficient of the residual in `r²φ` at the round sphere:
/// `(H² − P²)_φ = 2nL`, `(H ± P)_φ = L`.
fn phi_gain(variant: Variant, n: usize) -> f64 {
    match variant {
        Variant::Stcmc => 2.0 * n as f64,
        _ => 1.0,
    }
}

/// First-order `φ` at `τ = 0`: `L φ = −π^⊥ R(r, 0, 0) / (c r²)`.
pub fn cold_start(chart: &AmbientChart, grid: &Arc<SphereGrid>, variant: Variant, r: f64) -> Result<SphereField> {
    let leaf = embed_leaf(chart, r, &vec![0.0; chart.dim], &SphereField::zeros(grid), Offset::Theorem)?;
    let res = leaf.residual(variant).project_kperp();
    let c = phi_gain(variant, grid.n());
    res.scaled(-1.0 / (c * r * r)).solve_l_tol(1e-8)
}

fn node_records(leaf: &LeafEmbedding, residual: &SphereField) -> Vec<NodeRecord> {
    let d = leaf.n() + 1;
    let unit: Vec<SphereField> = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            leaf.lapse(&e)
        })
        .collect();
    let grid = leaf.grid();
    leaf.nodes
        .iter()
        .enumerate()
        .map(|(i, node)| NodeRecord {
            angles: grid.angles(i),
            position: node.position.clone(),
            h_g: node.mean / leaf.r,
            p_g: node.p / leaf.r,
            residual: residual.values()[i],
            normal_frame: unit.iter().map(|f| f.values()[i] - 1.0).collect(),
        })
        .collect()
}

/// Solves the prescribed-curvature equation at radius `r`.
pub fn solve_leaf(
    chart: &AmbientChart,
    grid: &Arc<SphereGrid>,
    variant: Variant,
    r: f64,
    init: Option<(&[f64], &SphereField)>,
    opts: &SolverOptions,
) -> Result<LeafState> {
    let mut sys = LsSystem::new(chart, grid.clone(), variant, r)?;
    sys.tau_step = opts.tau_step * chart.validity_radius;
    let mut u = match init {
        Some((tau, phi)) => sys.pack(tau, phi),
        None => sys.pack(&vec![0.0; chart.dim], &cold_start(chart, grid, variant, r)?),
    };
    let mut ev = sys.evaluate(&u)?;
    let mut history = Vec::new();
    let mut jac: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> = None;
    let mut iters = 0;
    loop {
        let sup = ev.residual.sup();
        let kern = ev.residual.project_kernel().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        history.push(sup);
        if sup <= opts.tol_newton && kern <= opts.tol_kernel {
            break;
        }
        if iters >= opts.max_iters {
            return Err(Error::NonConvergence { iterations: iters, residual: sup });
        }
        let norm = ev.equations.norm();
        let mut accepted = None;
        for attempt in 0..2 {
            if jac.is_none() {
                let j = sys.jacobian(&u, &ev, opts.jacobian)?;
                let cond = sys.kernel_condition(&j);
                if cond > opts.max_condition {
                    return Err(Error::KernelObstruction { condition: cond });
                }
                jac = Some(j.lu());
            }
            let step = jac
                .as_ref()
                .and_then(|lu| lu.solve(&ev.equations))
                .ok_or(Error::KernelObstruction { condition: f64::INFINITY })?;
            let mut lambda = 1.0;
            for _ in 0..12 {
                let trial = &u - &step * lambda;
                if let Ok(next) = sys.evaluate(&trial) {
                    if next.equations.norm() < norm {
                        accepted = Some((trial, next));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if accepted.is_some() || attempt == 1 {
                break;
            }
            // stale Jacobian: rebuild once before giving up
            jac = None;
        }
        let Some((next_u, next)) = accepted else {
            return Err(Error::NonConvergence { iterations: iters, residual: sup });
        };
        if next.equations.norm() > opts.reuse_ratio * norm {
            jac = None;
        }
        u = next_u;
        ev = next;
        iters += 1;
    }
    let (tau, phi) = sys.unpack(&u);
    let diagnostics = if opts.diagnostics { Some(ev.leaf.diagnostics(chart, opts.geodesic_diam)?) } else { None };
    let residual_kernel = ev.residual.project_kernel().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(LeafState {
        r,
        tau,
        phi,
        residual_sup: ev.residual.sup(),
        residual_kernel,
        newton_iters: iters,
        history,
        diagnostics,
        nodes: node_records(&ev.leaf, &ev.residual),
    })
}

/// Continuation schedule.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Schedule {
    /// Largest radius as a fraction of the validity radius.
    pub r_max: f64,
    /// Smallest radius as a fraction of the validity radius.
    pub r_min: f64,
    pub ratio: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { r_max: 0.1, r_min: 1e-3, ratio: 0.8 }
    }
}

impl Schedule {
    /// Decreasing radii `r_max·R, ratio·r_max·R, …` down to `r_min·R`.
    pub fn radii(&self, validity: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut r = self.r_max;
        while r >= self.r_min * (1.0 - 1e-12) {
            out.push(r * validity);
            r *= self.ratio;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunVerdict {
    Foliation,
    ConcentrationOnly,
    Failed,
}

#[derive(Clone, Debug)]
pub struct FoliationRun {
    pub variant: Variant,
    pub radii: Vec<f64>,
    pub leaves: Vec<LeafState>,
    pub dtau_dr_at_0: Vec<f64>,
    /// `dτ/dr` at each converged leaf.
    pub dtau_dr: Vec<Vec<f64>>,
    pub alpha_min: f64,
    pub regularity_sup: f64,
    pub verdict: RunVerdict,
    pub failure: Option<String>,
}

/// Least-squares polynomial of degree `deg` through `(x_i, y_i)`;
/// coefficients from the constant term up.
pub fn poly_fit(x: &[f64], y: &[f64], deg: usize) -> Vec<f64> {
    let a = DMatrix::from_fn(x.len(), deg + 1, |i, k| libm::pow(x[i], k as f64));
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-300).map(|c| c.iter().copied().collect()).unwrap_or_else(|_| vec![f64::NAN; deg + 1])
}

/// Warm-started continuation from large to small `r`.
pub fn continue_foliation(
    chart: &AmbientChart,
    grid: &Arc<SphereGrid>,
    variant: Variant,
    radii: &[f64],
    opts: &SolverOptions,
) -> FoliationRun {
    let d = chart.dim;
    let mut leaves: Vec<LeafState> = Vec::new();
    let mut failure = None;
    for &r in radii {
        let guess = match leaves.len() {
            0 => None,
            1 => Some((leaves[0].tau.clone(), leaves[0].phi.clone())),
            m => {
                let (a, b) = (&leaves[m - 1], &leaves[m - 2]);
                let t = (r - a.r) / (a.r - b.r);
                let tau = (0..d).map(|k| a.tau[k] + t * (a.tau[k] - b.tau[k])).collect();
                Some((tau, a.phi.clone()))
            }
        };
        let res = match &guess {
            Some((tau, phi)) => solve_leaf(chart, grid, variant, r, Some((tau, phi)), opts),
            None => solve_leaf(chart, grid, variant, r, None, opts),
        };
        match res {
            Ok(s) => leaves.push(s),
            Err(e) => {
                failure = Some(alloc::format!("r = {r:.6e}: {e}"));
                break;
            }
        }
    }
    let rs: Vec<f64> = leaves.iter().map(|l| l.r).collect();
    let m = leaves.len();
    // quartic through all leaves: the linear coefficient is stable even
    // when τ is dominated by its r² term
    let dtau_dr_at_0 = if m >= 3 {
        (0..d)
            .map(|k| {
                let ys: Vec<f64> = leaves.iter().map(|l| l.tau[k]).collect();
                poly_fit(&rs, &ys, 4.min(m - 1))[1]
            })
            .collect()
    } else {
        vec![f64::NAN; d]
    };
    // local slope from a quadratic through the nearest three leaves
    let dtau_dr: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            if m < 2 {
                return vec![0.0; d];
            }
            let lo = i.saturating_sub(1).min(m.saturating_sub(3));
            let hi = (lo + 3).min(m);
            (0..d)
                .map(|k| {
                    let xs: Vec<f64> = rs[lo..hi].iter().map(|r| r - rs[i]).collect();
                    let ys: Vec<f64> = leaves[lo..hi].iter().map(|l| l.tau[k]).collect();
                    poly_fit(&xs, &ys, xs.len() - 1)[1]
                })
                .collect()
        })
        .collect();
    let alpha_min = leaves.iter().zip(&dtau_dr).map(|(l, t)| l.alpha_min(t)).fold(f64::INFINITY, f64::min);
    let regularity_sup = leaves.iter().filter_map(|l| l.diagnostics.as_ref().map(|d| d.b_diam)).fold(0.0f64, f64::max);
    let verdict = if failure.is_some() || leaves.is_empty() {
        RunVerdict::Failed
    } else if alpha_min > 0.0 {
        RunVerdict::Foliation
    } else {
        RunVerdict::ConcentrationOnly
    };
    FoliationRun {
        variant,
        radii: radii.to_vec(),
        leaves,
        dtau_dr_at_0,
        dtau_dr,
        alpha_min,
        regularity_sup,
        verdict,
        failure,
    }
}

/// Value at `0` of the polynomial interpolating `(x_i, y_i)` (Neville).
pub fn neville_at_zero(x: &[f64], y: &[f64]) -> f64 {
    let mut p = y.to_vec();
    let m = x.len();
    for k in 1..m {
        for i in 0..m - k {
            p[i] = (x[i + k] * p[i] - x[i] * p[i + 1]) / (x[i + k] - x[i]);
        }
    }
    p[0]
}

/// `|S^n|`-normalized closed forms of the kernel limits.
pub fn kernel_limit_closed_form(report: &ObstructionReport, variant: Variant) -> Vec<f64> {
    let n = (report.dim - 1) as f64;
    let area = sphere_area(report.dim - 1);
    match variant {
        Variant::Stcmc => {
            let c = -2.0 * area / ((n + 1.0) * (n + 3.0));
            report.frame_a_st().iter().map(|a| c * a).collect()
        }
        v => {
            let c = v.sign() * area / (n + 1.0);
            report.frame_a_ce().iter().map(|a| c * a).collect()
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProbeOptions {
    /// Largest probe radius as a fraction of the validity radius.
    pub r0: f64,
    /// Number of radii `r0, r0/2, …`.
    pub levels: usize,
    /// Relative tolerance for agreement with the closed form.
    pub match_tol: f64,
    /// Successive extrapolants differing by more than this (relative to
    /// `max(1, |E|)`) make the probe inconclusive.
    pub stability_tol: f64,
    /// Kernel limits below this are treated as zero.
    pub zero_tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { r0: 0.05, levels: 4, match_tol: 1e-3, stability_tol: 1e-2, zero_tol: 1e-8 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub variant: Variant,
    pub radii: Vec<f64>,
    /// `∫ R x^l / r^q` at each radius.
    pub kernel_values: Vec<Vec<f64>>,
    /// Three-point extrapolants over consecutive radius triples.
    pub extrapolants: Vec<Vec<f64>>,
    pub extrapolated_kernel_limit: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub relative_error: f64,
    #[serde(rename = "match")]
    pub matches: bool,
    pub inconclusive: bool,
    /// Largest gap between successive extrapolants.
    pub extrapolation_error: f64,
    /// A nonzero limit: no regularly centered foliation at `p`.
    pub nonexistence: bool,
    /// `sup |π^⊥ R| / r²` per radius (expansion variants).
    pub perp_growth: Vec<f64>,
    /// `∫ (P_g / r) x^l` per radius.
    pub p_kernel: Vec<Vec<f64>>,
    /// The first-order equation degenerates as `r → 0` (requires `k(p) = 0`).
    pub divergence: bool,
}

fn kernel_sample(
    chart: &AmbientChart,
    grid: &Arc<SphereGrid>,
    variant: Variant,
    r: f64,
) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let zero = vec![0.0; chart.dim];
    let phi = match variant {
        Variant::Stcmc => cold_start(chart, grid, variant, r)?,
        _ => SphereField::zeros(grid),
    };
    let leaf = embed_leaf(chart, r, &zero, &phi, Offset::Theorem)?;
    let res = leaf.residual(variant);
    let q = libm::pow(r, variant.kernel_power() as f64);
    let kern = res.kernel_moments().iter().map(|v| v / q).collect();
    let perp = res.project_kperp().sup() / (r * r);
    let pk = leaf.p_trace().scaled(1.0 / r).kernel_moments();
    Ok((kern, perp, pk))
}

/// Richardson-extrapolated kernel limit of the residual at `τ = 0` against
/// the closed form.
pub fn obstruction_probe(
    chart: &AmbientChart,
    grid: &Arc<SphereGrid>,
    variant: Variant,
    forms: &FormOptions,
    opts: &ProbeOptions,
) -> Result<ProbeRecord> {
    let d = chart.dim;
    let levels = opts.levels.max(3);
    let radii: Vec<f64> = (0..levels).map(|k| opts.r0 * chart.validity_radius / libm::pow(2.0, k as f64)).collect();
    #[cfg(feature = "parallel")]
    let samples: Vec<_> = {
        use rayon::prelude::*;
        radii.par_iter().map(|&r| kernel_sample(chart, grid, variant, r)).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let samples: Vec<_> = radii.iter().map(|&r| kernel_sample(chart, grid, variant, r)).collect::<Result<Vec<_>>>()?;
    let kernel_values: Vec<Vec<f64>> = samples.iter().map(|s| s.0.clone()).collect();
    let perp_growth: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let p_kernel: Vec<Vec<f64>> = samples.iter().map(|s| s.2.clone()).collect();
    let extrapolants: Vec<Vec<f64>> = (0..levels - 2)
        .map(|s| {
            (0..d)
                .map(|l| {
                    let ys: Vec<f64> = (s..s + 3).map(|i| kernel_values[i][l]).collect();
                    neville_at_zero(&radii[s..s + 3], &ys)
                })
                .collect()
        })
        .collect();
    let limit = extrapolants.last().unwrap().clone();
    let norm = |v: &[f64]| libm::sqrt(v.iter().map(|x| x * x).sum());
    let spread = extrapolants
        .windows(2)
        .map(|w| norm(&w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .fold(0.0f64, f64::max);
    let inconclusive = spread > opts.stability_tol * norm(&limit).max(1.0);
    // anything within a few extrapolation errors of zero counts as zero
    let zero = opts.zero_tol.max(10.0 * spread);
    let report = evaluate(chart, &chart.center, forms)?;
    let closed_form = kernel_limit_closed_form(&report, variant);
    let diff: Vec<f64> = limit.iter().zip(&closed_form).map(|(a, b)| a - b).collect();
    let scale = norm(&closed_form);
    let (relative_error, matches) = if scale > zero {
        let e = norm(&diff) / scale;
        (e, e <= opts.match_tol)
    } else {
        (norm(&diff), norm(&diff) <= zero)
    };
    let nonexistence = !inconclusive && norm(&limit) > zero;
    // successive halvings should not blow up the K^⊥ forcing
    let divergence = variant != Variant::Stcmc
        && perp_growth.windows(2).all(|w| w[1] > 1.5 * w[0])
        && perp_growth.last().copied().unwrap_or(0.0) > zero;
    Ok(ProbeRecord {
        variant,
        radii,
        kernel_values,
        extrapolants,
        extrapolated_kernel_limit: limit,
        closed_form,
        relative_error,
        matches,
        inconclusive,
        extrapolation_error: spread,
        nonexistence,
        perp_growth,
        p_kernel,
        divergence,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactoryRecord {
    pub epsilon: f64,
    pub base_point: Vec<f64>,
    pub point: Vec<f64>,
    pub displacement: f64,
    pub a_st_norm: f64,
    pub newton_iters: usize,
    pub verdict: Verdict,
}

/// `(g, εk)` with the base point moved to the zero `p(ε)` of `A_ST` near
/// `p′`, by Newton from `p′`.
pub fn factory_deform(
    base: &AmbientChart,
    p_prime: &[f64],
    k: &KModel,
    epsilon: f64,
    forms: &FormOptions,
) -> Result<(FactoryRecord, AmbientChart)> {
    let chart = base.clone().with_k(k.scaled(epsilon));
    let d = chart.dim;
    let mut p = p_prime.to_vec();
    let mut iters = 0;
    loop {
        chart.check_domain(&p)?;
        let rep = evaluate(&chart, &p, forms)?;
        let a = DVector::from_column_slice(&rep.a_st);
        if a.amax() <= 1e-10 || iters >= 30 {
            if a.amax() > 1e-10 {
                return Err(Error::NonConvergence { iterations: iters, residual: a.amax() });
            }
            let moved = chart.clone().with_center(p.clone());
            let rep = evaluate(&moved, &p, forms)?;
            let verdict = rep.verdict(Theorem::PriStcmc).clone();
            let displacement = libm::sqrt(p.iter().zip(p_prime).map(|(x, y)| (x - y) * (x - y)).sum());
            let record = FactoryRecord {
                epsilon,
                base_point: p_prime.to_vec(),
                point: p.clone(),
                displacement,
                a_st_norm: a.norm(),
                newton_iters: iters,
                verdict,
            };
            return Ok((record, moved));
        }
        let j = DMatrix::from_fn(d, d, |l, b| rep.partial_a_st[l][b]);
        let step = j.lu().solve(&a).ok_or(Error::KernelObstruction { condition: f64::INFINITY })?;
        for i in 0..d {
            p[i] -= step[i];
        }
        iters += 1;
    }
}

/// STCMC prediction `dτ/dr(0) = [c ∇A_ST]^{-1} Q` with `c = 2|S|/((n+1)(n+3))`
/// and `Q = lim ∫ D(r) x^l / r²`, `D` the raw-offset directional derivative
/// of the residual along `φ₀`.
pub fn stcmc_dtau_prediction(
    chart: &AmbientChart,
    grid: &Arc<SphereGrid>,
    forms: &FormOptions,
    radii: &[f64],
) -> Result<Vec<f64>> {
    let d = chart.dim;
    let n = (d - 1) as f64;
    let zero = vec![0.0; d];
    // φ₀ by extrapolating the cold starts
    let colds: Vec<SphereField> =
        radii.iter().map(|&r| cold_start(chart, grid, Variant::Stcmc, r)).collect::<Result<Vec<_>>>()?;
    let nb = grid.basis_len();
    let coeffs: Vec<f64> =
        (0..nb).map(|j| neville_at_zero(radii, &colds.iter().map(|c| c.coeffs()[j]).collect::<Vec<_>>())).collect();
    let phi0 = SphereField::from_coeffs(grid, coeffs);
    let h = 1e-4;
    let mut q = Vec::new();
    for &r in radii {
        let plus = embed_leaf(chart, r, &zero, &phi0.scaled(h), Offset::Raw)?.residual(Variant::Stcmc);
        let minus = embed_leaf(chart, r, &zero, &phi0.scaled(-h), Offset::Raw)?.residual(Variant::Stcmc);
        let dr = plus.sub(&minus).scaled(1.0 / (2.0 * h));
        q.push(dr.kernel_moments().iter().map(|v| v / (r * r)).collect::<Vec<f64>>());
    }
    let qlim: Vec<f64> = (0..d).map(|l| neville_at_zero(radii, &q.iter().map(|v| v[l]).collect::<Vec<_>>())).collect();
    let rep = evaluate(chart, &chart.center, forms)?;
    let c = 2.0 * sphere_area(d - 1) / ((n + 1.0) * (n + 3.0));
    let m = rep.frame_grad_a_st() * c;
    let sol = m.lu().solve(&DVector::from_vec(qlim)).ok_or(Error::KernelObstruction { condition: f64::INFINITY })?;
    Ok(sol.iter().copied().collect())
}

/// Expansion prediction `dτ/dr(0) = ∓(1/(n+3)) (∇A_CE)^{-1} Â^±`.
pub fn ce_dtau_prediction(report: &ObstructionReport, variant: Variant) -> Result<Vec<f64>> {
    let n = (report.dim - 1) as f64;
    let plus = variant == Variant::CePlus;
    let hat = DVector::from_vec(report.frame_hat(plus));
    let sol = report.frame_grad_a_ce().lu().solve(&hat).ok_or(Error::KernelObstruction { condition: f64::INFINITY })?;
    Ok(sol.iter().map(|v| -variant.sign() * v / (n + 3.0)).collect())
}

/// Largest deviation between the assembled and finite-difference Jacobian
/// columns at `(τ, φ)`, each column measured relative to `max(1, |col|_∞)`.
pub fn jacobian_check(
    chart: &AmbientChart,
    grid: &Arc<SphereGrid>,
    variant: Variant,
    r: f64,
    tau: &[f64],
    phi: &SphereField,
) -> Result<f64> {
    let sys = LsSystem::new(chart, grid.clone(), variant, r)?;
    let u = sys.pack(tau, phi);
    let at = sys.evaluate(&u)?;
    let lin = sys.jacobian(&u, &at, JacobianMode::Linearized)?;
    let fd = sys.jacobian(&u, &at, JacobianMode::FiniteDifference)?;
    let mut worst = 0.0f64;
    for c in sys.dim()..sys.unknowns() {
        let a = lin.column(c);
        let b = fd.column(c);
        worst = worst.max((a - b).amax() / b.amax().max(1.0));
    }
    Ok(worst)
}
