//! The seven subcommands. Each returns a deterministic JSON payload, an exit
//! status and optional CSV tables.

use std::sync::Arc;

use foliation_core::chart::AmbientChart;
use foliation_core::obstruction::evaluate;
use foliation_core::solver::{
    ce_dtau_prediction, continue_foliation, factory_deform, obstruction_probe, solve_leaf, stcmc_dtau_prediction,
    FoliationRun, LeafState, RunVerdict,
};
use foliation_core::sphere::{moment, moment_quadrature, SphereGrid};
use foliation_core::surface::{expansion_fit, Variant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::catalog;
use crate::config::Config;
use crate::error::{ForgeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Forms,
    Moments,
    Expand,
    Leaf,
    Foliate,
    Probe,
    Factory,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Forms => "forms",
            Command::Moments => "moments",
            Command::Expand => "expand",
            Command::Leaf => "leaf",
            Command::Foliate => "foliate",
            Command::Probe => "probe",
            Command::Factory => "factory",
        }
    }
}

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Success,
    /// The computation is sound but theorem hypotheses or a verdict fail.
    HypothesisFailure,
    NumericalFailure,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::HypothesisFailure => 2,
            Status::NumericalFailure => 3,
        }
    }
}

/// A CSV table: file name, header, rows.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub struct Outcome {
    pub payload: Value,
    pub status: Status,
    pub tables: Vec<Table>,
    /// The config with resolved defaults (e.g. the catalog point).
    pub effective: Config,
}

fn grid(n: usize, lmax: usize) -> Result<Arc<SphereGrid>> {
    Ok(Arc::new(SphereGrid::new(n, lmax)?))
}

fn resolve(cfg: &Config, chart: &AmbientChart) -> Config {
    let mut eff = cfg.clone();
    eff.chart.point = chart.center.clone();
    if eff.k.center.is_empty() && eff.k.kind != "zero" {
        eff.k.center = chart.center.clone();
    }
    eff
}

pub fn run(command: Command, cfg: &Config) -> Result<Outcome> {
    match command {
        Command::Moments => moments(cfg),
        _ => {
            let chart = catalog::build(cfg)?;
            let effective = resolve(cfg, &chart);
            let (payload, status, tables) = match command {
                Command::Forms => forms(cfg, &chart)?,
                Command::Expand => expand(cfg, &chart)?,
                Command::Leaf => leaf(cfg, &chart)?,
                Command::Foliate => foliate(cfg, &chart)?,
                Command::Probe => probe(cfg, &chart)?,
                Command::Factory => factory(cfg, &chart)?,
                Command::Moments => unreachable!(),
            };
            Ok(Outcome { payload, status, tables, effective })
        }
    }
}

type Parts = (Value, Status, Vec<Table>);

fn forms(cfg: &Config, chart: &AmbientChart) -> Result<Parts> {
    let report = evaluate(chart, &chart.center, &cfg.forms.options())?;
    let holds = report.verdict(cfg.forms.theorem.theorem()).holds;
    let status = if holds { Status::Success } else { Status::HypothesisFailure };
    let payload = json!({
        "theorem": cfg.forms.theorem,
        "holds": holds,
        "frame_a_st": report.frame_a_st(),
        "frame_a_ce": report.frame_a_ce(),
        "frame_hat_a_ce_plus": report.frame_hat(true),
        "frame_hat_a_ce_minus": report.frame_hat(false),
        "report": report,
    });
    Ok((payload, status, Vec::new()))
}

fn moments(cfg: &Config) -> Result<Outcome> {
    let m = &cfg.moments;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for &n in &m.dims {
        let g = SphereGrid::new(n, m.lmax)?;
        for order in 0..=m.max_order {
            let count = (n + 1).pow(order as u32);
            for code in 0..count {
                let mut idx = Vec::with_capacity(order);
                let mut c = code;
                for _ in 0..order {
                    idx.push(c % (n + 1));
                    c /= n + 1;
                }
                idx.reverse();
                let exact = moment(n, &idx)?;
                let quad = moment_quadrature(&g, &idx);
                worst = worst.max((exact - quad).abs());
                rows.push(json!({ "n": n, "indices": idx, "closed_form": exact, "quadrature": quad, "abs_diff": (exact - quad).abs() }));
            }
        }
    }
    let status = if worst <= 1e-12 { Status::Success } else { Status::NumericalFailure };
    let payload = json!({ "max_abs_diff": worst, "rows": rows });
    Ok(Outcome { payload, status, tables: Vec::new(), effective: cfg.clone() })
}

fn expand(cfg: &Config, chart: &AmbientChart) -> Result<Parts> {
    let e = &cfg.expand;
    let g = grid(chart.n(), e.lmax)?;
    let radii: Vec<f64> = (1..=e.count).map(|k| k as f64 * e.step * chart.validity_radius).collect();
    let fit = expansion_fit(chart, &g, &radii, e.degree)?;
    let header = ["theta", "lambda"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=e.degree).map(|k| format!("c{k}")))
        .chain(["ricci_term".to_string(), "cov_ricci_term".to_string()])
        .collect();
    let rows = (0..g.len())
        .map(|i| {
            let a = g.angles(i);
            let mut row = vec![a[0], a[1]];
            row.extend(&fit.coefficients[i]);
            row.push(fit.ricci_term[i]);
            row.push(fit.cov_ricci_term[i]);
            row
        })
        .collect();
    let payload = serde_json::to_value(&fit)?;
    Ok((payload, Status::Success, vec![Table { name: "expand.csv".into(), header, rows }]))
}

fn leaf_header(dim: usize) -> Vec<String> {
    let mut h = vec!["theta".to_string(), "lambda".to_string()];
    h.extend((0..dim).map(|i| format!("x{i}")));
    h.extend(["H_g", "P_g", "residual", "alpha"].iter().map(|s| s.to_string()));
    h
}

fn leaf_table(name: String, leaf: &LeafState, dtau_dr: &[f64]) -> Table {
    let rows = leaf
        .nodes
        .iter()
        .map(|n| {
            let alpha = 1.0 + n.normal_frame.iter().zip(dtau_dr).map(|(a, b)| a * b).sum::<f64>();
            let mut row = vec![n.angles[0], n.angles[1]];
            row.extend(&n.position);
            row.extend([n.h_g, n.p_g, n.residual, alpha]);
            row
        })
        .collect();
    Table { name, header: leaf_header(leaf.tau.len()), rows }
}

fn leaf_json(leaf: &LeafState) -> Value {
    json!({
        "r": leaf.r,
        "tau": leaf.tau,
        "phi_coefficients": leaf.phi.coeffs(),
        "residual_sup": leaf.residual_sup,
        "residual_kernel": leaf.residual_kernel,
        "newton_iters": leaf.newton_iters,
        "history": leaf.history,
        "diagnostics": leaf.diagnostics,
    })
}

fn leaf(cfg: &Config, chart: &AmbientChart) -> Result<Parts> {
    let g = grid(chart.n(), cfg.sphere.lmax)?;
    let r = cfg.leaf.r * chart.validity_radius;
    match solve_leaf(chart, &g, cfg.solver.variant, r, None, &cfg.solver.options()) {
        Ok(s) => {
            let zero = vec![0.0; chart.dim];
            let tables = if cfg.leaf.csv { vec![leaf_table("leaf.csv".into(), &s, &zero)] } else { Vec::new() };
            Ok((
                json!({ "variant": cfg.solver.variant, "converged": true, "leaf": leaf_json(&s) }),
                Status::Success,
                tables,
            ))
        }
        Err(e) => Ok((
            json!({ "variant": cfg.solver.variant, "converged": false, "error": e.to_string() }),
            Status::NumericalFailure,
            Vec::new(),
        )),
    }
}

fn prediction(cfg: &Config, chart: &AmbientChart, g: &Arc<SphereGrid>, variant: Variant) -> Value {
    let forms = cfg.forms.options();
    let res = match variant {
        Variant::Stcmc => {
            let radii: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|f| f * chart.validity_radius).collect();
            stcmc_dtau_prediction(chart, g, &forms, &radii)
        }
        v => evaluate(chart, &chart.center, &forms).and_then(|rep| ce_dtau_prediction(&rep, v)),
    };
    match res {
        Ok(v) => json!(v),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn run_json(run: &FoliationRun) -> Value {
    json!({
        "variant": run.variant,
        "radii": run.radii,
        "verdict": run.verdict,
        "failure": run.failure,
        "dtau_dr_at_0": run.dtau_dr_at_0,
        "alpha_min": run.alpha_min,
        "regularity_sup": run.regularity_sup,
        "leaves": run.leaves.iter().zip(&run.dtau_dr).map(|(l, t)| {
            let mut v = leaf_json(l);
            v["dtau_dr"] = json!(t);
            v["alpha_min"] = json!(l.alpha_min(t));
            v
        }).collect::<Vec<_>>(),
    })
}

fn foliate(cfg: &Config, chart: &AmbientChart) -> Result<Parts> {
    let g = grid(chart.n(), cfg.sphere.lmax)?;
    let radii = cfg.solver.schedule().radii(chart.validity_radius);
    if radii.is_empty() {
        return Err(ForgeError::Config("solver schedule is empty (r_max < r_min)".into()));
    }
    let variant = cfg.solver.variant;
    let run = continue_foliation(chart, &g, variant, &radii, &cfg.solver.options());
    let status = match run.verdict {
        RunVerdict::Foliation => Status::Success,
        RunVerdict::ConcentrationOnly => Status::HypothesisFailure,
        RunVerdict::Failed => Status::NumericalFailure,
    };
    let mut payload = run_json(&run);
    payload["dtau_dr_prediction"] = prediction(cfg, chart, &g, variant);
    let tables = if cfg.leaf.csv {
        run.leaves
            .iter()
            .zip(&run.dtau_dr)
            .enumerate()
            .map(|(i, (l, t))| leaf_table(format!("leaf_{i:03}.csv"), l, t))
            .collect()
    } else {
        Vec::new()
    };
    Ok((payload, status, tables))
}

fn probe(cfg: &Config, chart: &AmbientChart) -> Result<Parts> {
    let g = grid(chart.n(), cfg.sphere.lmax)?;
    let forms = cfg.forms.options();
    let opts = cfg.probe.options();
    let records: Vec<_> =
        cfg.probe.variants.par_iter().map(|&v| (v, obstruction_probe(chart, &g, v, &forms, &opts))).collect();
    let mut status = Status::Success;
    let mut out = Vec::new();
    for (v, rec) in records {
        match rec {
            Ok(p) => {
                if p.inconclusive {
                    status = status.max(Status::NumericalFailure);
                } else if p.nonexistence || p.divergence {
                    status = status.max(Status::HypothesisFailure);
                }
                out.push(serde_json::to_value(&p)?);
            }
            Err(e) => {
                status = Status::NumericalFailure;
                out.push(json!({ "variant": v, "error": e.to_string() }));
            }
        }
    }
    Ok((json!({ "probes": out }), status, Vec::new()))
}

fn factory(cfg: &Config, chart: &AmbientChart) -> Result<Parts> {
    let base = catalog::base_chart(&cfg.chart)?;
    let mut base = base.with_center(chart.center.clone());
    base.validity_radius = chart.validity_radius;
    let k = chart.k.clone();
    let forms = cfg.forms.options();
    let g = grid(chart.n(), cfg.sphere.lmax)?;
    let opts = cfg.solver.options();
    let rows: Vec<Value> = cfg
        .factory
        .epsilons
        .par_iter()
        .map(|&eps| match factory_deform(&base, &chart.center, &k, eps, &forms) {
            Ok((rec, moved)) => {
                let mut row = serde_json::to_value(&rec).unwrap_or(Value::Null);
                if cfg.factory.solve {
                    let r = cfg.factory.r * moved.validity_radius;
                    row["leaf"] = match solve_leaf(&moved, &g, Variant::Stcmc, r, None, &opts) {
                        Ok(s) => json!({ "r": s.r, "converged": true, "residual_sup": s.residual_sup, "tau": s.tau, "newton_iters": s.newton_iters }),
                        Err(e) => json!({ "r": r, "converged": false, "error": e.to_string() }),
                    };
                }
                row
            }
            Err(e) => json!({ "epsilon": eps, "error": e.to_string() }),
        })
        .collect();
    let mut status = Status::Success;
    for row in &rows {
        if row.get("error").is_some() || row["leaf"]["converged"] == json!(false) {
            status = Status::NumericalFailure;
        } else if row["verdict"]["holds"] == json!(false) {
            status = status.max(Status::HypothesisFailure);
        }
    }
    // consecutive displacement ratios: 4 when |p(ε) − p′| = O(ε²) and ε doubles
    let disp: Vec<Option<f64>> = rows.iter().map(|r| r["displacement"].as_f64()).collect();
    let ratios: Vec<Value> = disp
        .windows(2)
        .zip(cfg.factory.epsilons.windows(2))
        .map(|(d, e)| match (d[0], d[1]) {
            (Some(a), Some(b)) if a > 0.0 => json!({ "from": e[0], "to": e[1], "ratio": b / a }),
            _ => json!({ "from": e[0], "to": e[1], "ratio": null }),
        })
        .collect();
    Ok((json!({ "rows": rows, "displacement_ratios": ratios }), status, Vec::new()))
}
