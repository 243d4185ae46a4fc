// the rescaled data is shared single-threaded here
#![allow(clippy::arc_with_non_send_sync)]

use std::sync::Arc;

use foliation_core::chart::{catalog, AmbientChart};
use foliation_core::geodesic::{geodesic_distance, NormalFrame};
use foliation_core::jets::curvature_jet;
use foliation_core::model::{degree_for, ExpModel, Rescaled};
use foliation_core::sphere::{SphereField, SphereGrid};
use foliation_core::surface::{embed_leaf, recenter_leaf, LeafEmbedding, Offset, Variant};

fn grid(n: usize, l: usize) -> Arc<SphereGrid> {
    Arc::new(SphereGrid::new(n, l).unwrap())
}

fn zero(g: &Arc<SphereGrid>) -> SphereField {
    SphereField::zeros(g)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// A smooth test perturbation with content in several degrees.
fn wobble(g: &Arc<SphereGrid>, amp: f64) -> SphereField {
    let c = (0..g.basis_len()).map(|j| amp * ((j * 5 + 2) as f64).sin() / (1.0 + g.degree(j) as f64).powi(3)).collect();
    SphereField::from_coeffs(g, c)
}

#[test]
fn flat_round_sphere() {
    for n in [1, 2] {
        let g = grid(n, 8);
        let r = 0.3;
        let leaf = embed_leaf(&catalog::flat(n + 1), r, &vec![0.0; n + 1], &zero(&g), Offset::Theorem).unwrap();
        for (i, node) in leaf.nodes.iter().enumerate() {
            let x = g.node(i);
            assert!(max_diff(&node.position, &x.iter().map(|v| r * v).collect::<Vec<_>>()) < 1e-15);
            assert!(max_diff(&node.normal, x) < 1e-14);
            assert!(max_diff(&node.b, &node.metric) < 1e-13);
            let t: f64 =
                node.tangents.iter().map(|t| t.iter().zip(&node.normal).map(|(a, b)| a * b).sum::<f64>().abs()).sum();
            assert!(t < 1e-14);
        }
        let h = leaf.mean_curvature();
        assert!(h.values().iter().all(|v| (v - n as f64 / r).abs() < 1e-10));
        for v in [Variant::Stcmc, Variant::CePlus, Variant::CeMinus] {
            assert!(leaf.residual(v).sup() < 1e-12);
        }
    }
}

#[test]
fn raw_constant_offset_is_a_larger_sphere() {
    let g = grid(2, 6);
    let c = 0.2;
    let r = 0.1;
    let phi = SphereField::from_fn(&g, |_| c);
    let leaf = embed_leaf(&catalog::flat(3), r, &[0.0; 3], &phi, Offset::Raw).unwrap();
    for node in &leaf.nodes {
        let len: f64 = node.position.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((len - r * (1.0 + c)).abs() < 1e-14);
    }
    assert!(leaf.mean_curvature().values().iter().all(|h| (h - 2.0 / (r * (1.0 + c))).abs() < 1e-10));
}

#[test]
fn schwarzschild_geodesic_sphere_has_constant_distance() {
    let chart = catalog::schwarzschild(1.0, 4.0);
    let g = grid(2, 3);
    let r = 0.3;
    let leaf = embed_leaf(&chart, r, &[0.0; 3], &zero(&g), Offset::Theorem).unwrap();
    for node in leaf.nodes.iter().step_by(5) {
        let d = geodesic_distance(&chart, &chart.center, &node.position, 1e-13).unwrap();
        assert!((d - r).abs() < 1e-8, "{d}");
    }
}

#[test]
fn p_trace_and_ce_residual_for_constant_k() {
    let c = 0.3;
    let r = 0.05;
    for n in [1, 2] {
        let g = grid(n, 6);
        let chart = catalog::flat(n + 1).with_k(catalog::k_constant(n + 1, c));
        let leaf = embed_leaf(&chart, r, &vec![0.0; n + 1], &zero(&g), Offset::Theorem).unwrap();
        assert!(leaf.p_trace().values().iter().all(|p| (p - n as f64 * c).abs() < 1e-12));
        let res = leaf.residual(Variant::CePlus);
        assert!(res.values().iter().all(|v| (v - r * n as f64 * c).abs() < 1e-12));
        let flat = embed_leaf(&catalog::flat(n + 1), r, &vec![0.0; n + 1], &zero(&g), Offset::Theorem).unwrap();
        assert!(flat.p_trace().sup() == 0.0);
    }
}

fn busy_chart() -> AmbientChart {
    catalog::skew_bump(3).with_k(catalog::k_cubic(3, &[0.0; 3], 0.5))
}

#[test]
fn rescaled_and_chart_routes_agree() {
    let chart = busy_chart();
    let g = grid(2, 10);
    let r = 0.12;
    let leaf = embed_leaf(&chart, r, &[0.02, -0.01, 0.015], &wobble(&g, 0.8), Offset::Theorem).unwrap();
    let direct = leaf.chart_route(&chart);
    let n = 2.0;
    for (node, (h, p)) in leaf.nodes.iter().zip(&direct) {
        assert!((node.mean - r * h).abs() < 1e-9);
        assert!((node.p - r * p).abs() < 1e-10);
        let lhs = Variant::Stcmc.residual(&node.mean, &node.p, n);
        let rhs = r * r * (h * h - p * p) - n * n;
        assert!((lhs - rhs).abs() < 1e-9);
    }
}

fn rotation_x_pi_then_z(m: usize, nl: usize) -> [[f64; 3]; 3] {
    let a = 2.0 * std::f64::consts::PI * m as f64 / nl as f64;
    let (c, s) = (a.cos(), a.sin());
    let rz = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
    let rx = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    let mut q = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            q[i][j] = (0..3).map(|k| rz[i][k] * rx[k][j]).sum();
        }
    }
    q
}

#[test]
fn residual_is_invariant_under_relabeling() {
    let chart = busy_chart();
    let l = 8;
    let g = grid(2, l);
    let r = 0.1;
    let q = rotation_x_pi_then_z(3, 4 * l);
    let apply = |x: &[f64]| -> Vec<f64> { (0..3).map(|i| (0..3).map(|j| q[i][j] * x[j]).sum()).collect() };
    let f = |x: &[f64]| 0.3 * x[0] * x[1] - 0.5 * x[2] * x[2] * x[0] + 0.2 * x[1].powi(4);
    let phi = SphereField::from_fn(&g, f);
    let phi_q = SphereField::from_fn(&g, |x| f(&apply(x)));
    let base = NormalFrame::at(&chart, &chart.center).unwrap();
    // e'_i = Σ_j Q_ji e_j
    let rotated = NormalFrame {
        tau: base.tau.clone(),
        point: base.point.clone(),
        frame: (0..3).map(|i| (0..3).map(|a| (0..3).map(|j| q[j][i] * base.frame[j][a]).sum()).collect()).collect(),
    };
    let deg = degree_for(r, chart.validity_radius);
    let d1 = Arc::new(Rescaled::new(Arc::new(ExpModel::build(&chart, base, deg).unwrap()), r).unwrap());
    let d2 = Arc::new(Rescaled::new(Arc::new(ExpModel::build(&chart, rotated, deg).unwrap()), r).unwrap());
    let l1 = LeafEmbedding::new(&chart, d1, phi, Offset::Theorem).unwrap();
    let l2 = LeafEmbedding::new(&chart, d2, phi_q, Offset::Theorem).unwrap();
    for v in [Variant::Stcmc, Variant::CePlus, Variant::CeMinus] {
        let (r1, r2) = (l1.residual(v), l2.residual(v));
        for i in 0..g.len() {
            let x = apply(g.node(i));
            let j = (0..g.len()).find(|&j| max_diff(g.node(j), &x) < 1e-12).expect("rotation maps nodes to nodes");
            assert!((r2.values()[i] - r1.values()[j]).abs() < 1e-10);
        }
    }
}

#[test]
fn linearized_p_squared_matches_finite_differences() {
    let chart = busy_chart();
    let g = grid(2, 8);
    let r = 0.1;
    let phi = wobble(&g, 0.5);
    let delta = SphereField::from_fn(&g, |x| 0.4 * x[0] * x[2] - 0.3 * x[1] + 0.2);
    let h = 1e-5;
    let p2 = |f: &SphereField| -> Vec<f64> {
        let leaf = embed_leaf(&chart, r, &[0.0; 3], f, Offset::Raw).unwrap();
        leaf.nodes.iter().map(|n| n.p * n.p).collect()
    };
    let leaf = embed_leaf(&chart, r, &[0.0; 3], &phi.scaled(0.01), Offset::Raw).unwrap();
    let lin = leaf.linearized_p_squared(&delta);
    let plus = p2(&phi.scaled(0.01).add(&delta.scaled(h)));
    let minus = p2(&phi.scaled(0.01).sub(&delta.scaled(h)));
    let fd: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    assert!(max_diff(lin.values(), &fd) < 1e-6, "{}", max_diff(lin.values(), &fd));
    let no_k = embed_leaf(&catalog::skew_bump(3), r, &[0.0; 3], &phi, Offset::Theorem).unwrap();
    assert_eq!(no_k.linearized_p_squared(&delta).sup(), 0.0);
    // constant direction on a round sphere with k = cδ
    let kc = catalog::flat(3).with_k(catalog::k_constant(3, 0.4));
    let round = embed_leaf(&kc, r, &[0.0; 3], &zero(&g), Offset::Theorem).unwrap();
    assert!(round.linearized_p_squared(&SphereField::from_fn(&g, |_| 1.0)).sup() < 1e-15);
}

#[test]
fn lapse_bounds() {
    let g = grid(2, 6);
    let leaf = embed_leaf(&catalog::flat(3), 0.1, &[0.0; 3], &zero(&g), Offset::Theorem).unwrap();
    assert!(leaf.lapse(&[0.0; 3]).values().iter().all(|a| *a == 1.0));
    let v = [0.3, -0.4, 0.0];
    let a = leaf.lapse(&v);
    assert!(a.values().iter().all(|a| *a >= 0.5 - 1e-14));
    assert!(a.values().iter().any(|a| *a < 0.52));
}

#[test]
fn recentering_closed_forms() {
    let g = grid(2, 6);
    let flat = catalog::flat(3);
    let r = 0.2;
    let c = recenter_leaf(&flat, &embed_leaf(&flat, r, &[0.0; 3], &zero(&g), Offset::Theorem).unwrap()).unwrap();
    assert!(c.phibar.values().iter().all(|v| (v - r).abs() < 1e-14));
    let t = 0.05;
    let leaf = embed_leaf(&flat, r, &[t, 0.0, 0.0], &zero(&g), Offset::Theorem).unwrap();
    let c = recenter_leaf(&flat, &leaf).unwrap();
    for (i, v) in c.phibar.values().iter().enumerate() {
        let y1 = g.node(i)[0];
        let expect = t * y1 + (r * r - t * t * (1.0 - y1 * y1)).sqrt();
        assert!((v - expect).abs() < 1e-8);
    }
    assert!(c.roundtrip < 1e-8);
    let chart = busy_chart();
    let leaf = embed_leaf(&chart, 0.1, &[0.01, 0.0, -0.01], &wobble(&g, 1.0), Offset::Theorem).unwrap();
    assert!(recenter_leaf(&chart, &leaf).unwrap().roundtrip < 1e-8);
}

#[test]
fn flat_sphere_diagnostics() {
    let r = 0.25;
    for n in [1usize, 2] {
        let g = grid(n, 8);
        let flat = catalog::flat(n + 1);
        let leaf = embed_leaf(&flat, r, &vec![0.0; n + 1], &zero(&g), Offset::Theorem).unwrap();
        let d = leaf.diagnostics(&flat, true).unwrap();
        assert!((d.diam_chord - 2.0 * r).abs() < 1e-14);
        assert!((d.diam - 2.0 * r).abs() < 1e-10);
        assert!((d.sup_b - (n as f64).sqrt() / r).abs() < 1e-10);
        assert!((d.b_diam - 2.0 * (n as f64).sqrt()).abs() < 1e-9);
        let lam = d.jacobi_lambda1.unwrap();
        assert!((lam * r * r + n as f64).abs() < 1e-10, "{lam}");
    }
}

#[test]
fn round_sphere_chart_jacobi_eigenvalue() {
    // geodesic sphere of radius ρ in S³(a): |B|² = 2cot²/a², Ric(ν,ν) = 2/a²
    let a = 1.0;
    let rho: f64 = 0.3;
    let chart = catalog::round_sphere(3, a);
    let g = grid(2, 8);
    let leaf = embed_leaf(&chart, rho, &[0.0; 3], &zero(&g), Offset::Theorem).unwrap();
    let d = leaf.diagnostics(&chart, false).unwrap();
    let cot = (rho / a).cos() / (rho / a).sin() / a;
    let expect = -(2.0 * cot * cot + 2.0 / (a * a));
    assert!((d.jacobi_lambda1.unwrap() - expect).abs() < 1e-8 * expect.abs());
    assert!(leaf.mean_curvature().values().iter().all(|h| (h - 2.0 * cot).abs() < 1e-10));
}

/// Least-squares polynomial fit `Σ_{k=1}^{deg} a_k r^k` per node.
fn fit(rs: &[f64], vals: &[Vec<f64>], deg: usize) -> Vec<Vec<f64>> {
    let m = nalgebra::DMatrix::from_fn(rs.len(), deg, |i, k| rs[i].powi(k as i32 + 1));
    let svd = m.svd(true, true);
    (0..vals[0].len())
        .map(|node| {
            let b = nalgebra::DVector::from_fn(rs.len(), |i, _| vals[i][node]);
            svd.solve(&b, 1e-300).unwrap().iter().copied().collect()
        })
        .collect()
}

fn expansion_check(chart: &AmbientChart, check_r2: bool) {
    let g = grid(2, 4);
    let jet = curvature_jet(chart, &chart.center).unwrap();
    let frame = NormalFrame::at(chart, &chart.center).unwrap();
    let rs: Vec<f64> = (1..=6).map(|k| 0.02 * k as f64 * chart.validity_radius).collect();
    let vals: Vec<Vec<f64>> = rs
        .iter()
        .map(|&r| {
            let leaf = embed_leaf(chart, r, &[0.0; 3], &zero(&g), Offset::Theorem).unwrap();
            leaf.mean_curvature().values().iter().map(|h| h - 2.0 / r).collect()
        })
        .collect();
    let coef = fit(&rs, &vals, 4);
    let v = |x: &[f64]| frame.vector(x);
    let mut o1 = Vec::new();
    let mut o2 = Vec::new();
    for i in 0..g.len() {
        let e = v(g.node(i));
        let mut ric = 0.0;
        let mut dric = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                ric += jet.ricci.at(&[a, b]) * e[a] * e[b];
                for c in 0..3 {
                    dric += jet.cov_ricci.at(&[c, a, b]) * e[a] * e[b] * e[c];
                }
            }
        }
        o1.push(-ric / 3.0);
        o2.push(-dric / 4.0);
    }
    let s1 = o1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let e1 = coef.iter().zip(&o1).fold(0.0f64, |m, (c, o)| m.max((c[0] - o).abs()));
    assert!(e1 <= 0.01 * s1, "r¹: {e1} vs scale {s1}");
    if check_r2 {
        let s2 = o2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let e2 = coef.iter().zip(&o2).fold(0.0f64, |m, (c, o)| m.max((c[1] - o).abs()));
        assert!(e2 <= 0.05 * s2, "r²: {e2} vs scale {s2}");
    }
}

#[test]
fn mean_curvature_expansion_schwarzschild() {
    expansion_check(&catalog::schwarzschild(1.0, 4.0), true);
}

#[test]
fn mean_curvature_expansion_conformal_bumps() {
    expansion_check(&catalog::bump(3), false);
    expansion_check(&catalog::skew_bump(3), true);
}

#[test]
fn rejects_bad_input() {
    let g = grid(2, 4);
    assert!(embed_leaf(&catalog::flat(3), 0.0, &[0.0; 3], &zero(&g), Offset::Theorem).is_err());
    let big = SphereField::from_fn(&g, |_| 0.8);
    assert!(embed_leaf(&catalog::flat(3), 0.1, &[0.0; 3], &big, Offset::Raw).is_err());
    assert!(embed_leaf(&catalog::flat(3), 2.0, &[0.0; 3], &zero(&g), Offset::Theorem).is_err());
}

#[test]
fn library_expansion_fit_agrees_with_the_curvature_terms() {
    let chart = catalog::schwarzschild(1.0, 4.0);
    let radii: Vec<f64> = (1..=6).map(|k| 0.02 * k as f64 * chart.validity_radius).collect();
    let fit = foliation_core::surface::expansion_fit(&chart, &grid(2, 4), &radii, 4).unwrap();
    assert!(fit.r1_error <= 0.01 && fit.r2_error <= 0.05, "{} {}", fit.r1_error, fit.r2_error);
    let flat = foliation_core::surface::expansion_fit(&catalog::flat(3), &grid(2, 4), &radii, 4).unwrap();
    let worst = flat.coefficients.iter().flat_map(|c| &c[..2]).fold(0.0f64, |m, c| m.max(c.abs()));
    assert!(worst <= 1e-10, "{worst}");
}
