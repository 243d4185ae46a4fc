//! Geodesics, parallel transport and Riemannian normal frames.

use alloc::vec;
use alloc::vec::Vec;

use crate::chart::AmbientChart;
use crate::error::{Error, Result};
use crate::jets::{christoffel, invert};
use crate::scalar::Dual;

/// Gram–Schmidt on the coordinate basis: rows `e_a` (chart components) with
/// `g(e_a, e_b) = δ_ab`. `g` is the flattened component matrix.
pub fn orthonormal_frame(g: &[f64], n: usize) -> Vec<Vec<f64>> {
    let ip = |u: &[f64], v: &[f64]| {
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += g[a * n + b] * u[a] * v[b];
            }
        }
        s
    };
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        for e in &frame {
            let c = ip(&v, e);
            for a in 0..n {
                v[a] -= c * e[a];
            }
        }
        let norm = libm::sqrt(ip(&v, &v));
        frame.push(v.iter().map(|x| x / norm).collect());
    }
    frame
}

/// `Γ^a_{bc}` at a point, flattened `[a][b][c]`.
pub fn christoffel_at(chart: &AmbientChart, x: &[f64]) -> Vec<f64> {
    let n = chart.dim;
    let xd: Vec<Dual<f64>> = (0..n).map(|i| Dual::variable(x[i], n, i)).collect();
    let g = chart.metric(&xd);
    let gv: Vec<f64> = g.iter().map(|d| d.v).collect();
    let ginv = invert(&gv, n);
    let mut dg = Vec::with_capacity(n * n * n);
    for c in 0..n {
        for ab in 0..n * n {
            dg.push(g[ab].d[c]);
        }
    }
    christoffel(&ginv, &dg, n)
}

/// Geodesic state with transported vectors.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Vectors parallel transported along the curve.
    pub transported: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Geodesic {
    pub end: FlowState,
    /// Richardson estimate of the position error at the end point.
    pub error: f64,
    pub steps: usize,
}

fn deriv(chart: &AmbientChart, s: &FlowState) -> FlowState {
    let n = chart.dim;
    let gm = christoffel_at(chart, &s.x);
    let acc = |u: &[f64], w: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|a| {
                let mut t = 0.0;
                for b in 0..n {
                    for c in 0..n {
                        t += gm[a * n * n + b * n + c] * u[b] * w[c];
                    }
                }
                -t
            })
            .collect()
    };
    FlowState { x: s.v.clone(), v: acc(&s.v, &s.v), transported: s.transported.iter().map(|w| acc(&s.v, w)).collect() }
}

fn axpy(s: &FlowState, h: f64, d: &FlowState) -> FlowState {
    let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + h * y).collect::<Vec<f64>>();
    FlowState {
        x: f(&s.x, &d.x),
        v: f(&s.v, &d.v),
        transported: s.transported.iter().zip(&d.transported).map(|(a, b)| f(a, b)).collect(),
    }
}

fn rk4(chart: &AmbientChart, start: &FlowState, t: f64, steps: usize) -> Result<FlowState> {
    let h = t / steps as f64;
    let mut s = start.clone();
    for _ in 0..steps {
        chart.check_domain(&s.x)?;
        let k1 = deriv(chart, &s);
        let k2 = deriv(chart, &axpy(&s, h / 2.0, &k1));
        let k3 = deriv(chart, &axpy(&s, h / 2.0, &k2));
        let k4 = deriv(chart, &axpy(&s, h, &k3));
        let mut next = axpy(&s, h / 6.0, &k1);
        next = axpy(&next, h / 3.0, &k2);
        next = axpy(&next, h / 3.0, &k3);
        s = axpy(&next, h / 6.0, &k4);
    }
    if s.x.iter().chain(&s.v).any(|v| !v.is_finite()) {
        return Err(Error::Integration("non-finite geodesic state".into()));
    }
    chart.check_domain(&s.x)?;
    Ok(s)
}

/// Flows `(x, v, transported)` for unit parameter time `t` with RK4, refining
/// until the Richardson error estimate is below `tol`.
pub fn geodesic_flow(
    chart: &AmbientChart,
    x: &[f64],
    v: &[f64],
    transported: &[Vec<f64>],
    t: f64,
    tol: f64,
) -> Result<Geodesic> {
    let start = FlowState { x: x.to_vec(), v: v.to_vec(), transported: transported.to_vec() };
    let mut steps = 8;
    let mut coarse = rk4(chart, &start, t, steps)?;
    loop {
        let fine = rk4(chart, &start, t, 2 * steps)?;
        let diff = coarse.x.iter().zip(&fine.x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let error = diff / 15.0;
        steps *= 2;
        if error <= tol || steps >= 1 << 14 {
            if error > tol {
                return Err(Error::Integration(alloc::format!("geodesic error {error:e} above {tol:e}")));
            }
            return Ok(Geodesic { end: fine, error, steps });
        }
        coarse = fine;
    }
}

/// Riemannian normal coordinates about a point: an orthonormal frame there
/// identifies `y ∈ R^dim` with `exp(Σ y^a e_a)`.
///
/// Built either directly at a point, or as `c(τ) = exp_p(τ^i e_i)` with the
/// frame at `p` parallel transported along `t ↦ c(tτ)`.
#[derive(Clone, Debug)]
pub struct NormalFrame {
    pub tau: Vec<f64>,
    pub point: Vec<f64>,
    pub frame: Vec<Vec<f64>>,
}

impl NormalFrame {
    pub fn at(chart: &AmbientChart, p: &[f64]) -> Result<Self> {
        chart.check_domain(p)?;
        chart.check_metric(p)?;
        let frame = orthonormal_frame(&chart.metric_at(p), chart.dim);
        Ok(NormalFrame { tau: vec![0.0; chart.dim], point: p.to_vec(), frame })
    }

    /// The frame at `c(τ)` for the chart's base point.
    pub fn transported(chart: &AmbientChart, tau: &[f64], tol: f64) -> Result<Self> {
        let base = NormalFrame::at(chart, &chart.center)?;
        if tau.iter().all(|t| *t == 0.0) {
            return Ok(base);
        }
        let g = geodesic_flow(chart, &base.point, &base.vector(tau), &base.frame, 1.0, tol)?;
        Ok(NormalFrame { tau: tau.to_vec(), point: g.end.x, frame: g.end.transported })
    }

    /// Chart components of `Σ y^a e_a`.
    pub fn vector(&self, y: &[f64]) -> Vec<f64> {
        let n = self.point.len();
        (0..n).map(|b| (0..n).map(|a| y[a] * self.frame[a][b]).sum()).collect()
    }

    pub fn exp(&self, chart: &AmbientChart, y: &[f64], tol: f64) -> Result<Vec<f64>> {
        Ok(geodesic_flow(chart, &self.point, &self.vector(y), &[], 1.0, tol)?.end.x)
    }
}

/// Riemannian distance between two nearby points by geodesic shooting.
pub fn geodesic_distance(chart: &AmbientChart, a: &[f64], b: &[f64], tol: f64) -> Result<f64> {
    let n = a.len();
    let mut v: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let shoot = |v: &[f64]| -> Result<Vec<f64>> { Ok(geodesic_flow(chart, a, v, &[], 1.0, tol)?.end.x) };
    for _ in 0..30 {
        let end = shoot(&v)?;
        let f: Vec<f64> = end.iter().zip(b).map(|(x, y)| x - y).collect();
        if f.iter().all(|x| x.abs() <= 1e-11 * scale) {
            let g = chart.metric_at(a);
            let mut d2 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    d2 += g[i * n + j] * v[i] * v[j];
                }
            }
            return Ok(libm::sqrt(d2));
        }
        let h = 1e-6 * scale;
        let mut jac = nalgebra::DMatrix::zeros(n, n);
        for j in 0..n {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[j] += h;
            vm[j] -= h;
            let (ep, em) = (shoot(&vp)?, shoot(&vm)?);
            for i in 0..n {
                jac[(i, j)] = (ep[i] - em[i]) / (2.0 * h);
            }
        }
        let step = jac
            .lu()
            .solve(&nalgebra::DVector::from_vec(f))
            .ok_or_else(|| Error::Integration("singular shooting Jacobian".into()))?;
        for i in 0..n {
            v[i] -= step[i];
        }
    }
    Err(Error::Integration("geodesic shooting did not converge".into()))
}
