//! The local obstruction 1-forms and the hypothesis checks of the existence
//! theorems.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chart::AmbientChart;
use crate::error::Result;
use crate::geodesic::orthonormal_frame;
use crate::jets::{CurvatureJet, CurvatureSeries};
use crate::scalar::Scalar;
use crate::series::Series;
use crate::tensor::Tensor;

/// Which coefficient of `div k` enters `A_CE`.
///
/// `KernelConsistent` uses `2/(n+3)`, the coefficient produced by the moment
/// computation of the kernel projection of `∂_r P_g`; with it the CE kernel
/// limit equals `±|S^n|/(n+1) A_CE`. `AsPrinted` uses the bare `2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CeConvention {
    #[default]
    KernelConsistent,
    AsPrinted,
}

/// Parenthesization of the bracket in `Â_CE^±`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HatGrouping {
    /// Global factor `1/(3(n+3)(n+5))` on the whole bracket.
    #[default]
    Printed,
    /// The factor multiplies only the leading `Ric·∇tr k` term.
    LeadingTermOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormOptions {
    pub ce: CeConvention,
    pub hat: HatGrouping,
    /// The constant `C` of the STCMC and second CE smallness conditions.
    pub c_config: f64,
    /// Absolute tolerance for "vanishes at p" hypotheses (frame norms).
    pub zero_tol: f64,
    /// A matrix counts as invertible when its condition number is at most
    /// this.
    pub max_condition: f64,
}

impl Default for FormOptions {
    fn default() -> Self {
        FormOptions {
            ce: CeConvention::KernelConsistent,
            hat: HatGrouping::Printed,
            c_config: 1.0,
            zero_tol: 1e-8,
            max_condition: 1e8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    /// Existence of an STCMC foliation.
    PriStcmc,
    /// Existence of a CE foliation with `H ± P = n/r` from `A_CE`.
    PriCe { plus: bool },
    /// Existence of a CE foliation from `Â_CE^±` (generalizes CMC).
    SecCmc { plus: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub holds: bool,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub theorem: Theorem,
    pub conditions: Vec<Condition>,
    /// Left-hand side of the smallness inequality without the constant `C`.
    pub smallness_lhs: f64,
    pub c_config: f64,
    /// The `C` at which the smallness inequality saturates (`None` when the
    /// left-hand side vanishes).
    pub c_critical: Option<f64>,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub dim: usize,
    pub point: Vec<f64>,
    /// Orthonormal frame at `p` (rows are the frame vectors in chart
    /// components), used for all norms.
    pub frame: Vec<Vec<f64>>,
    pub a_st: Vec<f64>,
    /// `grad_a_st[l][β] = ∇_β A_ST,l`.
    pub grad_a_st: Vec<Vec<f64>>,
    /// Plain partial derivatives `∂_β A_ST,l` of the chart components.
    pub partial_a_st: Vec<Vec<f64>>,
    pub a_ce: Vec<f64>,
    pub grad_a_ce: Vec<Vec<f64>>,
    /// `hess_a_ce[l][β][γ] = ∇_γ ∇_β A_CE,l`.
    pub hess_a_ce: Vec<Vec<Vec<f64>>>,
    pub hat_a_ce_plus: Vec<f64>,
    pub hat_a_ce_minus: Vec<f64>,
    pub grad_hat_a_ce_plus: Vec<Vec<f64>>,
    pub grad_hat_a_ce_minus: Vec<Vec<f64>>,
    /// `t_hat[l][β] = T̂(e_l, e_β)`.
    pub t_hat: Vec<Vec<f64>>,
    pub k_norm: f64,
    pub grad_k_norm: f64,
    pub ric_norm: f64,
    pub cov2_k_norm: f64,
    pub cov3_k_norm: f64,
    pub options: FormOptions,
    pub verdicts: Vec<Verdict>,
    pub jet: CurvatureJet,
}

fn values1(t: &Tensor<Series>) -> Vec<f64> {
    t.data.iter().map(|s| s.value()).collect()
}

fn values2(t: &Tensor<Series>) -> Vec<Vec<f64>> {
    let n = t.dim;
    (0..n).map(|l| (0..n).map(|b| t.at(&[b, l]).value()).collect()).collect()
}

/// The Series-level 1-forms at a point, differentiable as far as the jets
/// allow.
pub struct FormSeries {
    pub curv: CurvatureSeries,
    pub a_st: Tensor<Series>,
    pub a_ce: Tensor<Series>,
    pub hat_plus: Tensor<Series>,
    pub hat_minus: Tensor<Series>,
}

impl FormSeries {
    pub fn at(chart: &AmbientChart, x: &[f64], opts: &FormOptions) -> Result<Self> {
        let curv = CurvatureSeries::at(chart, x)?;
        let geom = &curv.geom;
        let dim = geom.dim;
        let n = (dim - 1) as f64;
        let k = &geom.k;
        let zero = geom.g.data[0].lift(0.0);

        let tr = geom.trace(k);
        let k2 = geom.inner(k, k);
        let tr2_half = (&tr * &tr).scale(0.5);
        // T_li = k_lj g^{jm} k_mi and U_lj = tr k · k_lj
        let t_lk = Tensor::from_fn(2, dim, |i| {
            let mut s = zero.clone();
            for j in 0..dim {
                for m in 0..dim {
                    s = s + &(geom.ginv.at(&[j, m]) * k.at(&[i[0], j])) * k.at(&[m, i[1]]);
                }
            }
            s
        });
        let u = k.map(|s| s * &tr);
        let div_t = geom.contract(&geom.covariant(&t_lk), 0, 2);
        let div_u = geom.contract(&geom.covariant(&u), 0, 2);
        let div_k = geom.contract(&curv.cov_k, 0, 1);
        let c1 = (n + 1.0) * (n + 5.0) + 1.0;
        let a_st = Tensor::from_fn(1, dim, |l| {
            let l = l[0];
            let kpart = k2.derivative(l) + tr2_half.derivative(l).scale(c1) + div_t.at(&[l]).scale(4.0)
                - div_u.at(&[l]).scale(2.0 * (n + 4.0));
            curv.scalar.derivative(l).scale(n / 2.0) + kpart.scale(1.0 / (n + 5.0))
        });
        let div_coeff = match opts.ce {
            CeConvention::KernelConsistent => 2.0 / (n + 3.0),
            CeConvention::AsPrinted => 2.0,
        };
        let a_ce = Tensor::from_fn(1, dim, |l| {
            tr.derivative(l[0]).scale((n + 2.0) / (n + 3.0)) - div_k.at(&[l[0]]).scale(div_coeff)
        });

        // Ric^{rs}
        let ric_up = Tensor::from_fn(2, dim, |i| {
            let mut s = zero.clone();
            for a in 0..dim {
                for b in 0..dim {
                    s = s + &(geom.ginv.at(&[i[0], a]) * geom.ginv.at(&[i[1], b])) * curv.ricci.at(&[a, b]);
                }
            }
            s
        });
        let grad_tr = geom.gradient(&tr);
        let sc = &curv.scalar;
        let f1 = 2.0 * (n * n + 6.0 * n + 10.0) / (n + 3.0);
        let f4 = (n * n * n + 14.0 * n * n + 52.0 * n + 60.0) / (n * (n + 3.0));
        let pref = 1.0 / (3.0 * (n + 3.0) * (n + 5.0));
        let bracket_terms = |l: usize| -> [Series; 4] {
            let mut t1 = zero.clone();
            let mut t2 = zero.clone();
            let mut t3 = zero.clone();
            for r in 0..dim {
                for s in 0..dim {
                    t1 = t1 + &(curv.ricci.at(&[l, r]) * geom.ginv.at(&[r, s])) * grad_tr.at(&[s]);
                    t2 = t2 + ric_up.at(&[r, s]) * curv.cov_k.at(&[r, l, s]);
                    t3 = t3 + ric_up.at(&[r, s]) * curv.cov_k.at(&[l, r, s]);
                }
            }
            let t4 = sc * grad_tr.at(&[l]);
            [t1, t2, t3, t4]
        };
        let hat = |sign: f64| {
            Tensor::from_fn(1, dim, |l| {
                let l = l[0];
                let [t1, t2, t3, t4] = bracket_terms(l);
                let block = match opts.hat {
                    HatGrouping::Printed => (t1.scale(f1) - t2.scale(4.0) - t3.scale(2.0) - t4.scale(f4)).scale(pref),
                    HatGrouping::LeadingTermOnly => t1.scale(f1 * pref) - t2.scale(4.0) - t3.scale(2.0) - t4.scale(f4),
                };
                sc.derivative(l).scale(-0.5) + block.scale(sign)
            })
        };
        let hat_plus = hat(1.0);
        let hat_minus = hat(-1.0);
        Ok(FormSeries { curv, a_st, a_ce, hat_plus, hat_minus })
    }
}

/// `T̂_{lβ}` from values at the point.
fn t_hat(jet: &CurvatureJet) -> Vec<Vec<f64>> {
    let dim = jet.metric.dim;
    let n = (dim - 1) as f64;
    let gi = |a: usize, b: usize| *jet.metric_inv.at(&[a, b]);
    let ck = |c: usize, a: usize, b: usize| *jet.cov_k.at(&[c, a, b]);
    let mut grad_tr_up = vec![0.0; dim];
    for a in 0..dim {
        for b in 0..dim {
            grad_tr_up[a] += gi(a, b) * jet.grad_tr_k.at(&[b]);
        }
    }
    let mut out = vec![vec![0.0; dim]; dim];
    for l in 0..dim {
        for beta in 0..dim {
            // ⟨∇_β k, 2∇k(e_l,·) + ∇_l k⟩ with ∇k(e_l,·)_{ij} = ∇_j k_{li}
            let mut first = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    for a in 0..dim {
                        for b in 0..dim {
                            first += gi(i, a) * gi(j, b) * ck(beta, i, j) * (2.0 * ck(b, l, a) + ck(l, a, b));
                        }
                    }
                }
            }
            let mut mixed = 0.0;
            for i in 0..dim {
                mixed += ck(beta, l, i) * grad_tr_up[i];
            }
            let tr_l = *jet.grad_tr_k.at(&[l]);
            let tr_b = *jet.grad_tr_k.at(&[beta]);
            let second = (2.0 * n + 5.0) / ((n + 3.0) * (n + 3.0)) * (tr_l * tr_b + 2.0 * mixed);
            out[l][beta] = 4.0 / ((n + 3.0) * (n + 5.0)) * (first - second);
        }
    }
    out
}

fn frame_matrix(m: &[Vec<f64>], frame: &[Vec<f64>]) -> DMatrix<f64> {
    let dim = m.len();
    DMatrix::from_fn(dim, dim, |i, j| {
        let mut s = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                s += frame[i][a] * m[a][b] * frame[j][b];
            }
        }
        s
    })
}

fn frame_norm1(v: &[f64], frame: &[Vec<f64>]) -> f64 {
    libm::sqrt(frame.iter().map(|e| e.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().powi(2)).sum())
}

/// Smallest and largest singular values of a matrix given in frame
/// components.
fn singular_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    let mn = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let mx = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    (mn, mx)
}

impl ObstructionReport {
    pub fn frame_a_st(&self) -> Vec<f64> {
        self.frame.iter().map(|e| e.iter().zip(&self.a_st).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn frame_a_ce(&self) -> Vec<f64> {
        self.frame.iter().map(|e| e.iter().zip(&self.a_ce).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn frame_hat(&self, plus: bool) -> Vec<f64> {
        let h = if plus { &self.hat_a_ce_plus } else { &self.hat_a_ce_minus };
        self.frame.iter().map(|e| e.iter().zip(h).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn frame_grad_a_st(&self) -> DMatrix<f64> {
        frame_matrix(&self.grad_a_st, &self.frame)
    }

    pub fn frame_grad_a_ce(&self) -> DMatrix<f64> {
        frame_matrix(&self.grad_a_ce, &self.frame)
    }
}

pub fn evaluate(chart: &AmbientChart, p: &[f64], opts: &FormOptions) -> Result<ObstructionReport> {
    let fs = FormSeries::at(chart, p, opts)?;
    let geom = &fs.curv.geom;
    let dim = geom.dim;
    let jet = fs.curv.jet(p)?;
    let g_at: Vec<f64> = jet.metric.data.clone();
    let frame = orthonormal_frame(&g_at, dim);

    let grad = |t: &Tensor<Series>| values2(&geom.covariant(t));
    let partial = |t: &Tensor<Series>| -> Vec<Vec<f64>> {
        (0..dim).map(|l| (0..dim).map(|b| t.at(&[l]).derivative(b).value()).collect()).collect()
    };
    let grad_ce_t = geom.covariant(&fs.a_ce);
    let hess_t = geom.covariant(&grad_ce_t);
    let hess_a_ce = (0..dim)
        .map(|l| (0..dim).map(|b| (0..dim).map(|c| hess_t.at(&[c, b, l]).value()).collect()).collect())
        .collect();

    let fr = |t: &Tensor<f64>| t.in_frame(&frame).frobenius();
    let mut report = ObstructionReport {
        dim,
        point: p.to_vec(),
        frame: frame.clone(),
        a_st: values1(&fs.a_st),
        grad_a_st: grad(&fs.a_st),
        partial_a_st: partial(&fs.a_st),
        a_ce: values1(&fs.a_ce),
        grad_a_ce: values2(&grad_ce_t),
        hess_a_ce,
        hat_a_ce_plus: values1(&fs.hat_plus),
        hat_a_ce_minus: values1(&fs.hat_minus),
        grad_hat_a_ce_plus: grad(&fs.hat_plus),
        grad_hat_a_ce_minus: grad(&fs.hat_minus),
        t_hat: t_hat(&jet),
        k_norm: fr(&jet.k),
        grad_k_norm: fr(&jet.cov_k),
        ric_norm: fr(&jet.ricci),
        cov2_k_norm: fr(&jet.cov2_k),
        cov3_k_norm: fr(&jet.cov3_k),
        options: *opts,
        verdicts: Vec::new(),
        jet,
    };
    report.verdicts = [
        Theorem::PriStcmc,
        Theorem::PriCe { plus: true },
        Theorem::PriCe { plus: false },
        Theorem::SecCmc { plus: true },
        Theorem::SecCmc { plus: false },
    ]
    .iter()
    .map(|&t| check_theorem_hypotheses(&report, t, opts.c_config))
    .collect();
    Ok(report)
}

fn cond(name: &str, holds: bool, value: f64) -> Condition {
    Condition { name: name.into(), holds, value }
}

pub fn check_theorem_hypotheses(report: &ObstructionReport, theorem: Theorem, c_config: f64) -> Verdict {
    let o = &report.options;
    let frame = &report.frame;
    let invertible = |m: &DMatrix<f64>| -> (bool, f64, f64) {
        let (mn, mx) = singular_range(m);
        let condition = if mn > 0.0 { mx / mn } else { f64::INFINITY };
        (condition <= o.max_condition, condition, if mn > 0.0 { 1.0 / mn } else { f64::INFINITY })
    };
    let mut conditions = Vec::new();
    let (lhs, uses_c) = match theorem {
        Theorem::PriStcmc => {
            let a = frame_norm1(&report.a_st, frame);
            conditions.push(cond("a_st_vanishes", a <= o.zero_tol, a));
            let (ok, c, inv) = invertible(&report.frame_grad_a_st());
            conditions.push(cond("grad_a_st_invertible", ok, c));
            let lhs = inv * (report.k_norm * report.k_norm + report.ric_norm) * report.k_norm * report.grad_k_norm;
            (if ok { lhs } else { f64::INFINITY }, true)
        }
        Theorem::PriCe { plus } => {
            let a = frame_norm1(&report.a_ce, frame);
            conditions.push(cond("a_ce_vanishes", a <= o.zero_tol, a));
            let (ok, c, inv) = invertible(&report.frame_grad_a_ce());
            conditions.push(cond("grad_a_ce_invertible", ok, c));
            conditions.push(cond("k_vanishes", report.k_norm <= o.zero_tol, report.k_norm));
            let n = (report.dim - 1) as f64;
            let hat = frame_norm1(if plus { &report.hat_a_ce_plus } else { &report.hat_a_ce_minus }, frame);
            (if ok { inv * hat / (n + 3.0) } else { f64::INFINITY }, false)
        }
        Theorem::SecCmc { plus } => {
            let a = frame_norm1(&report.a_ce, frame);
            conditions.push(cond("a_ce_vanishes", a <= o.zero_tol, a));
            let hat = frame_norm1(if plus { &report.hat_a_ce_plus } else { &report.hat_a_ce_minus }, frame);
            conditions.push(cond("hat_a_ce_vanishes", hat <= o.zero_tol, hat));
            conditions.push(cond("k_vanishes", report.k_norm <= o.zero_tol, report.k_norm));
            let g = report.frame_grad_a_ce().norm();
            conditions.push(cond("grad_a_ce_vanishes", g <= o.zero_tol, g));
            let h = {
                let mut s = 0.0;
                let d = report.dim;
                for l in 0..d {
                    for b in 0..d {
                        for c in 0..d {
                            let mut v = 0.0;
                            for x in 0..d {
                                for y in 0..d {
                                    for z in 0..d {
                                        v += frame[l][x] * frame[b][y] * frame[c][z] * report.hess_a_ce[x][y][z];
                                    }
                                }
                            }
                            s += v * v;
                        }
                    }
                }
                libm::sqrt(s)
            };
            conditions.push(cond("hess_a_ce_vanishes", h <= o.zero_tol, h));
            let gh = if plus { &report.grad_hat_a_ce_plus } else { &report.grad_hat_a_ce_minus };
            let sum: Vec<Vec<f64>> =
                gh.iter().zip(&report.t_hat).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
            let (ok, c, inv) = invertible(&frame_matrix(&sum, frame));
            conditions.push(cond("grad_hat_plus_t_hat_invertible", ok, c));
            let lhs = inv
                * (report.grad_k_norm * (report.ric_norm + report.grad_k_norm + report.cov2_k_norm)
                    + report.cov3_k_norm);
            (if ok { lhs } else { f64::INFINITY }, true)
        }
    };
    let c_eff = if uses_c { c_config } else { 1.0 };
    let small = c_eff * lhs < 1.0;
    conditions.push(cond("smallness", small, c_eff * lhs));
    let c_critical = if lhs > 0.0 && lhs.is_finite() { Some(1.0 / lhs) } else { None };
    Verdict {
        theorem,
        holds: conditions.iter().all(|c| c.holds),
        conditions,
        smallness_lhs: lhs,
        c_config: c_eff,
        c_critical,
    }
}

impl ObstructionReport {
    pub fn verdict(&self, theorem: Theorem) -> &Verdict {
        self.verdicts.iter().find(|v| v.theorem == theorem).expect("all theorems are evaluated")
    }
}
