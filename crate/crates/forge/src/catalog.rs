//! Chart instantiation from the `[chart]` and `[k]` sections.

use foliation_core::chart::{catalog, AmbientChart, Backend, KModel, Poly};
use foliation_core::series::{Exponent, MAX_VARS};

use crate::config::{ChartConfig, Config, KConfig};
use crate::error::{ForgeError, Result};

fn bad(msg: String) -> ForgeError {
    ForgeError::Config(msg)
}

/// The metric chart with its catalog base point (no `k`, no point override).
pub fn base_chart(c: &ChartConfig) -> Result<AmbientChart> {
    if !(2..=MAX_VARS).contains(&c.dim) {
        return Err(bad(format!("chart.dim must be in 2..={MAX_VARS} (got {})", c.dim)));
    }
    let chart = match c.id.as_str() {
        "flat" => catalog::flat(c.dim),
        "round-sphere" => {
            if !(c.radius > 0.0) {
                return Err(bad(format!("chart.radius must be positive (got {})", c.radius)));
            }
            catalog::round_sphere(c.dim, c.radius)
        }
        "schwarzschild" => {
            if c.dim != 3 {
                return Err(bad("schwarzschild requires chart.dim = 3".into()));
            }
            if !(c.rho > 0.0 && c.mass >= 0.0) {
                return Err(bad(format!("schwarzschild needs rho > 0, mass ≥ 0 (got {}, {})", c.rho, c.mass)));
            }
            catalog::schwarzschild(c.mass, c.rho)
        }
        "bump" => catalog::bump(c.dim),
        "skew-bump" => catalog::skew_bump(c.dim),
        "conformal" => {
            let mut terms = Vec::with_capacity(c.psi.len());
            for t in &c.psi {
                if t.len() != c.dim + 1 {
                    return Err(bad(format!("chart.psi terms need {} entries (got {t:?})", c.dim + 1)));
                }
                let mut e: Exponent = [0; MAX_VARS];
                for (slot, &v) in e.iter_mut().zip(&t[1..]) {
                    if v < 0.0 || v.fract() != 0.0 || v > 8.0 {
                        return Err(bad(format!("chart.psi exponent {v} is not a small non-negative integer")));
                    }
                    *slot = v as u8;
                }
                terms.push((t[0], e));
            }
            if !(c.validity > 0.0) {
                return Err(bad(format!("chart.validity must be positive (got {})", c.validity)));
            }
            catalog::conformal(c.dim, Poly { center: vec![0.0; c.dim], terms }, c.validity)
        }
        other => return Err(bad(format!("unknown chart.id `{other}`"))),
    };
    let chart = match c.backend.as_str() {
        "analytic" => chart,
        "finite-difference" => chart.with_backend(Backend::finite_difference()),
        other => return Err(bad(format!("unknown chart.backend `{other}`"))),
    };
    Ok(chart)
}

pub fn k_model(k: &KConfig, dim: usize, point: &[f64]) -> Result<KModel> {
    let center = if k.center.is_empty() { point.to_vec() } else { k.center.clone() };
    if center.len() != dim {
        return Err(bad(format!("k.center has {} entries, chart.dim is {dim}", center.len())));
    }
    Ok(match k.kind.as_str() {
        "zero" => KModel::zero(dim),
        "constant" => catalog::k_constant(dim, k.scale),
        "linear" => catalog::k_linear(dim, &center, k.scale, k.c0),
        "quadratic" => catalog::k_quadratic(dim, &center, k.scale),
        "cubic" => catalog::k_cubic(dim, &center, k.scale),
        other => return Err(bad(format!("unknown k.kind `{other}`"))),
    })
}

/// The base point selected by the config.
pub fn point(cfg: &Config, base: &AmbientChart) -> Result<Vec<f64>> {
    if cfg.chart.point.is_empty() {
        return Ok(base.center.clone());
    }
    if cfg.chart.point.len() != base.dim {
        return Err(bad(format!("chart.point has {} entries, chart.dim is {}", cfg.chart.point.len(), base.dim)));
    }
    Ok(cfg.chart.point.clone())
}

/// The full chart `(g, k)` centered at the configured point; moving the
/// point shrinks the validity ball so it stays inside the catalog one.
pub fn build(cfg: &Config) -> Result<AmbientChart> {
    let base = base_chart(&cfg.chart)?;
    let p = point(cfg, &base)?;
    base.check_domain(&p)?;
    let shift: f64 = p.iter().zip(&base.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let k = k_model(&cfg.k, base.dim, &p)?;
    let mut chart = base.with_k(k).with_center(p);
    chart.validity_radius -= shift;
    if !(chart.validity_radius > 0.0) {
        return Err(bad("chart.point lies on the boundary of the catalog validity ball".into()));
    }
    Ok(chart)
}
