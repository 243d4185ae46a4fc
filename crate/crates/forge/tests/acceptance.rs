//! End-to-end acceptance: one PASS/FAIL line per criterion, then a single
//! assertion over all of them. Lines bypass the test harness capture so
//! they appear in plain `cargo test` output.

use std::io::Write;
use std::sync::Arc;

use foliation_core::chart::{catalog, AmbientChart};
use foliation_core::obstruction::{evaluate, FormOptions, Theorem};
use foliation_core::solver::*;
use foliation_core::sphere::{SphereField, SphereGrid};
use foliation_core::surface::{embed_leaf, expansion_fit, Offset, Variant};
use foliation_forge::{run, Command, Config, Status};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

const O: [f64; 3] = [0.0; 3];

type Verdict = Result<(bool, String), String>;
type Check<'a> = (usize, &'a str, Box<dyn Fn() -> Verdict + Sync>);

fn grid(n: usize, l: usize) -> Arc<SphereGrid> {
    Arc::new(SphereGrid::new(n, l).unwrap())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn quiet() -> SolverOptions {
    SolverOptions { diagnostics: false, ..Default::default() }
}

fn decade() -> Vec<f64> {
    // the 0.8 ladder first passes below 0.01 at 0.0086
    Schedule { r_max: 0.1, r_min: 0.008, ratio: 0.8 }.radii(1.0)
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn moments() -> Verdict {
    let mut cfg = Config::default();
    cfg.moments.dims = vec![1, 2];
    let out = run(Command::Moments, &cfg).map_err(s)?;
    let worst = out.payload["max_abs_diff"].as_f64().ok_or("missing max_abs_diff")?;
    let rows = out.payload["rows"].as_array().map_or(0, |r| r.len());
    Ok((
        out.status == Status::Success && worst <= 1e-12,
        format!("{rows} moments, max |closed − quadrature| = {worst:.2e}"),
    ))
}

fn expansion() -> Verdict {
    let mut ok = true;
    let mut msg = Vec::new();
    for (name, chart) in [
        ("schwarzschild", catalog::schwarzschild(1.0, 4.0)),
        ("bump", catalog::bump(3)),
        ("skew-bump", catalog::skew_bump(3)),
    ] {
        let radii: Vec<f64> = (1..=6).map(|k| 0.02 * k as f64 * chart.validity_radius).collect();
        let fit = expansion_fit(&chart, &grid(2, 4), &radii, 4).map_err(s)?;
        ok &= fit.r1_error <= 0.01 && fit.r2_error <= 0.05;
        msg.push(format!(
            "{name}: r¹ err {:.1e} (scale {:.1e}), r² err {:.1e} (scale {:.1e})",
            fit.r1_error, fit.r1_scale, fit.r2_error, fit.r2_scale
        ));
    }
    Ok((ok, msg.join("; ")))
}

fn cmc_run() -> FoliationRun {
    let chart = catalog::bump(3);
    continue_foliation(&chart, &grid(2, 8), Variant::Stcmc, &decade(), &SolverOptions::default())
}

fn cmc(run: &FoliationRun) -> Verdict {
    let worst = run.leaves.iter().fold(0.0f64, |m, l| m.max(l.residual_sup));
    let d = norm(&run.dtau_dr_at_0);
    let span = run.radii.first().zip(run.radii.last()).map_or(0.0, |(a, b)| a / b);
    let ok = run.verdict == RunVerdict::Foliation
        && run.leaves.len() == run.radii.len()
        && span >= 10.0 - 1e-9
        && worst <= 1e-9
        && d <= 1e-3;
    Ok((
        ok,
        format!(
            "{} leaves over r ∈ [{:.3}, {:.3}], verdict {:?}, max residual {worst:.1e}, |dτ/dr(0)| {d:.1e}",
            run.leaves.len(),
            run.radii.last().unwrap_or(&0.0),
            run.radii.first().unwrap_or(&0.0),
            run.verdict
        ),
    ))
}

fn stcmc_charts() -> Vec<(&'static str, AmbientChart)> {
    vec![
        ("skew+cubic", catalog::skew_bump(3).with_k(catalog::k_cubic(3, &O, 0.3))),
        ("skew+linear", catalog::skew_bump(3).with_k(catalog::k_linear(3, &O, 0.4, 0.2))),
        ("bump+quadratic", catalog::bump(3).with_k(catalog::k_quadratic(3, &[0.1, 0.0, -0.1], 0.5))),
        (
            "schwarzschild+linear",
            catalog::schwarzschild(1.0, 4.0).with_k(catalog::k_linear(3, &[4.0, 0.0, 0.0], 0.05, 0.02)),
        ),
    ]
}

fn stcmc_probe() -> Verdict {
    let g = grid(2, 8);
    let forms = FormOptions::default();
    let recs: Vec<_> = stcmc_charts()
        .into_par_iter()
        .map(|(name, c)| (name, obstruction_probe(&c, &g, Variant::Stcmc, &forms, &ProbeOptions::default())))
        .collect();
    let mut ok = true;
    let mut nonzero = 0;
    let mut worst = 0.0f64;
    for (name, p) in recs {
        let p = p.map_err(|e| format!("{name}: {e}"))?;
        let a = norm(&p.closed_form) > 1e-6;
        nonzero += a as usize;
        worst = worst.max(p.relative_error);
        ok &= p.matches && !p.inconclusive && p.relative_error <= 1e-3 && p.nonexistence == a;
    }
    Ok((
        ok && nonzero >= 3,
        format!("{nonzero} charts with A_ST ≠ 0, all reported as nonexistence; worst relative error {worst:.1e}"),
    ))
}

fn ce_probe() -> Verdict {
    let g = grid(2, 8);
    let forms = FormOptions::default();
    let opts = ProbeOptions::default();
    let vanishing = [
        ("skew+linear(k(p)=0)", catalog::skew_bump(3).with_k(catalog::k_linear(3, &O, 0.3, 0.0))),
        (
            "schwarzschild+linear(k(p)=0)",
            catalog::schwarzschild(1.0, 4.0).with_k(catalog::k_linear(3, &[4.0, 0.0, 0.0], 0.05, 0.0)),
        ),
    ];
    let nonzero = [("skew+cubic", catalog::skew_bump(3).with_k(catalog::k_cubic(3, &O, 0.3)))];
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut diverging = 0;
    for v in [Variant::CePlus, Variant::CeMinus] {
        for (name, c) in &vanishing {
            let p = obstruction_probe(c, &g, v, &forms, &opts).map_err(|e| format!("{name}: {e}"))?;
            worst = worst.max(p.relative_error);
            ok &= p.matches && !p.inconclusive && p.relative_error <= 1e-3 && !p.divergence;
        }
        for (name, c) in &nonzero {
            let p = obstruction_probe(c, &g, v, &forms, &opts).map_err(|e| format!("{name}: {e}"))?;
            ok &= p.divergence;
            diverging += p.divergence as usize;
        }
    }
    Ok((ok, format!("k(p)=0 charts match with worst relative error {worst:.1e}; divergence flagged on {diverging}/2 k(p)≠0 probes")))
}

fn dtau() -> Verdict {
    let g = grid(2, 10);
    let forms = FormOptions::default();
    let mut ok = true;
    let mut msg = Vec::new();
    // STCMC on the factory chart: τ moves at second order, the prediction vanishes
    let (_, chart) = factory_deform(&catalog::bump(3), &O, &catalog::k_cubic(3, &O, 1.0), 1.0, &forms).map_err(s)?;
    let run = continue_foliation(&chart, &g, Variant::Stcmc, &decade(), &quiet());
    let pred = stcmc_dtau_prediction(&chart, &g, &forms, &[0.02, 0.01, 0.005]).map_err(s)?;
    let slope = run.leaves.iter().map(|l| norm(&l.tau) / l.r).fold(0.0, f64::max);
    let dev = norm(&diff(&run.dtau_dr_at_0, &pred));
    ok &= run.verdict == RunVerdict::Foliation && slope > 0.0 && dev <= 0.1 * slope;
    msg.push(format!("stcmc |fit − closed| {dev:.1e} vs chord slope {slope:.1e}"));
    // CE on a chart meeting the CE hypotheses
    let chart = catalog::skew_bump(3).with_k(catalog::k_quadratic(3, &O, 0.5));
    let rep = evaluate(&chart, &O, &forms).map_err(s)?;
    for (v, plus) in [(Variant::CePlus, true), (Variant::CeMinus, false)] {
        ok &= rep.verdict(Theorem::PriCe { plus }).holds;
        let run = continue_foliation(&chart, &g, v, &decade(), &quiet());
        let pred = ce_dtau_prediction(&rep, v).map_err(s)?;
        let rel = norm(&diff(&run.dtau_dr_at_0, &pred)) / norm(&pred);
        ok &= run.verdict == RunVerdict::Foliation && rel <= 0.1;
        msg.push(format!("{v:?} relative error {rel:.1e}"));
    }
    Ok((ok, msg.join("; ")))
}

fn diagnostics(run: &FoliationRun) -> Verdict {
    let n = 2.0f64;
    let (mut lam, mut lo, mut hi, mut b) = (f64::NEG_INFINITY, f64::INFINITY, 0.0f64, 0.0f64);
    for l in &run.leaves {
        let d = l.diagnostics.as_ref().ok_or("diagnostics missing")?;
        lam = lam.max(d.jacobi_lambda1.unwrap_or(f64::INFINITY));
        lo = lo.min(d.h_diam_min);
        hi = hi.max(d.h_diam_max);
        b = b.max(d.b_diam);
    }
    let c = 10.0;
    let ok = !run.leaves.is_empty() && lam < 0.0 && lo >= 1.0 / c && hi <= c && b <= 4.0 * n.sqrt();
    Ok((ok, format!("max λ₁ {lam:.3}, H·diam ∈ [{lo:.3}, {hi:.3}], max sup|B|·diam {b:.3}")))
}

fn factory() -> Verdict {
    let mut cfg = Config::default();
    cfg.chart.id = "bump".into();
    cfg.k.kind = "cubic".into();
    cfg.k.scale = 1.0;
    cfg.sphere.lmax = 10;
    cfg.factory.epsilons = vec![0.0, 0.05, 0.1];
    let out = run(Command::Factory, &cfg).map_err(s)?;
    let rows = out.payload["rows"].as_array().ok_or("missing rows")?;
    let mut ok = out.status == Status::Success && rows.len() == 3;
    let mut a = 0.0f64;
    for r in rows {
        a = a.max(r["a_st_norm"].as_f64().unwrap_or(f64::INFINITY));
        ok &= r["leaf"]["converged"] == serde_json::json!(true);
    }
    let ratio = out.payload["displacement_ratios"][1]["ratio"].as_f64().unwrap_or(f64::NAN);
    ok &= a <= 1e-10 && (4.0 / 1.5..=4.0 * 1.5).contains(&ratio);
    Ok((ok, format!("max |A_ST| {a:.1e}, displacement ratio {ratio:.3}, leaves converged on every deformation")))
}

fn linearization() -> Verdict {
    let charts = stcmc_charts();
    let g = grid(2, 6);
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let chart = &charts[rng.gen_range(0..charts.len())].1;
        let r = rng.gen_range(0.02..0.12);
        let tau: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.02..0.02)).collect();
        let mut field = |amp: f64| {
            let c = (0..g.basis_len())
                .map(|j| amp * rng.gen_range(-1.0..1.0) / (1.0 + g.degree(j) as f64).powi(3))
                .collect();
            SphereField::from_coeffs(&g, c)
        };
        let phi = field(0.01);
        let delta = field(0.5);
        let p2 = |f: &SphereField| -> Result<Vec<f64>, String> {
            let l = embed_leaf(chart, r, &tau, f, Offset::Raw).map_err(s)?;
            Ok(l.nodes.iter().map(|n| n.p * n.p).collect())
        };
        let leaf = embed_leaf(chart, r, &tau, &phi, Offset::Raw).map_err(s)?;
        let lin = leaf.linearized_p_squared(&delta);
        let plus = p2(&phi.add(&delta.scaled(h)))?;
        let minus = p2(&phi.sub(&delta.scaled(h)))?;
        for (i, l) in lin.values().iter().enumerate() {
            worst = worst.max((l - (plus[i] - minus[i]) / (2.0 * h)).abs());
        }
    }
    let chart = &charts[0].1;
    let g = grid(2, 5);
    let phi = SphereField::from_fn(&g, |x| 0.1 * x[0] * x[1] + 0.05 * x[2] * x[2]).project_kperp();
    let mut jac = 0.0f64;
    for v in [Variant::Stcmc, Variant::CePlus, Variant::CeMinus] {
        jac = jac.max(jacobian_check(chart, &g, v, 0.03, &[0.01, -0.02, 0.005], &phi).map_err(s)?);
    }
    Ok((
        worst <= 1e-6 && jac <= 1e-5,
        format!("linearized P² vs FD {worst:.1e} over 10 random leaves; Jacobian columns vs FD {jac:.1e}"),
    ))
}

#[test]
fn acceptance_criteria() {
    let run = cmc_run();
    let (c3, c7) = (cmc(&run), diagnostics(&run));
    drop(run);
    let checks: Vec<Check> = vec![
        (1, "sphere moments vs quadrature", Box::new(moments)),
        (2, "mean curvature expansion coefficients", Box::new(expansion)),
        (3, "CMC continuation over a decade", Box::new(move || c3.clone())),
        (4, "STCMC obstruction probe", Box::new(stcmc_probe)),
        (5, "CE obstruction probe", Box::new(ce_probe)),
        (6, "dτ/dr(0) vs closed forms", Box::new(dtau)),
        (7, "leaf diagnostics", Box::new(move || c7.clone())),
        (8, "factory deformation", Box::new(factory)),
        (9, "linearization checks", Box::new(linearization)),
    ];
    let results: Vec<(usize, &str, Verdict)> = checks.par_iter().map(|(i, name, f)| (*i, *name, f())).collect();
    let mut out = std::io::stdout().lock();
    let mut failed = Vec::new();
    for (i, name, v) in &results {
        let (pass, detail) = match v {
            Ok((p, d)) => (*p, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed.push(*i);
        }
        let _ = writeln!(out, "\ncriterion {i} [{name}]: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
