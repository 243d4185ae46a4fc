#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use foliation_core::chart::catalog;
use foliation_core::error::Error;
use foliation_core::jets::curvature_jet;
use foliation_core::sphere::{moment, moment_quadrature, SphereField, SphereGrid};

fn grid(n: usize) -> Arc<SphereGrid> {
    Arc::new(SphereGrid::default_for(n).unwrap())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn weights_sum_to_area() {
    for n in [1, 2] {
        let g = grid(n);
        let s: f64 = g.weights().iter().sum();
        assert!((s - g.area()).abs() < 1e-12);
    }
}

#[test]
fn harmonics_are_orthonormal_under_quadrature() {
    for n in [1, 2] {
        let g = grid(n);
        let nb = g.basis_len();
        let w = g.weights();
        for a in 0..nb {
            for b in a..nb {
                let s: f64 = g.basis(0, a).iter().zip(g.basis(0, b)).zip(w).map(|((x, y), w)| x * y * w).sum();
                let t = if a == b { 1.0 } else { 0.0 };
                assert!((s - t).abs() < 1e-12, "n={n} ({a},{b}) {s}");
            }
        }
    }
}

#[test]
fn closed_form_moments() {
    assert!((moment(2, &[1, 1]).unwrap() - 4.0 * PI / 3.0).abs() < 1e-14);
    assert_eq!(moment(2, &[0, 1, 2]).unwrap(), 0.0);
    assert!((moment(2, &[1, 1, 1, 1]).unwrap() - 4.0 * PI / 5.0).abs() < 1e-14);
    assert!((moment(2, &[1; 6]).unwrap() - 4.0 * PI / 7.0).abs() < 1e-14);
    assert_eq!(moment(2, &[0; 7]), Err(Error::UnsupportedOrder(7)));
}

fn tuples(d: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..m {
        out = out.into_iter().flat_map(|t| (0..d).map(move |i| [t.clone(), vec![i]].concat())).collect();
    }
    out
}

#[test]
fn moments_agree_with_quadrature() {
    let start = Instant::now();
    for n in [1, 2] {
        let g = grid(n);
        for m in 0..=6 {
            for t in tuples(n + 1, m) {
                let exact = moment(n, &t).unwrap();
                let q = moment_quadrature(&g, &t);
                assert!((exact - q).abs() < 1e-12, "n={n} {t:?}: {exact} vs {q}");
                if m % 2 == 1 {
                    assert!(q.abs() <= 1e-14);
                }
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn analysis_synthesis_round_trip_and_parseval() {
    for n in [1, 2] {
        let g = grid(n);
        let coeffs: Vec<f64> =
            (0..g.basis_len()).map(|j| ((j * 7 + 3) as f64).sin() / (1.0 + g.degree(j) as f64)).collect();
        let f = SphereField::from_coeffs(&g, coeffs.clone());
        let h = SphereField::from_values(&g, f.values().to_vec());
        assert!(max_diff(h.coeffs(), &coeffs) < 1e-12);
        let c2: f64 = coeffs.iter().map(|c| c * c).sum();
        assert!((h.l2() - c2.sqrt()).abs() < 1e-10);
    }
}

#[test]
fn laplacian_eigenvalues() {
    for n in [1, 2] {
        let g = grid(n);
        for j in 0..g.basis_len() {
            let mut c = vec![0.0; g.basis_len()];
            c[j] = 1.0;
            let f = SphereField::from_coeffs(&g, c);
            let l = g.degree(j) as f64;
            // second derivatives from the tables: on S² Δ = ∂θθ + cotθ ∂θ + ∂λλ / sin²θ
            let lap: Vec<f64> = if n == 1 {
                f.derivative(2)
            } else {
                let (d1, d11, d22) = (f.derivative(1), f.derivative(3), f.derivative(5));
                (0..g.len())
                    .map(|i| {
                        let th = g.angles(i)[0];
                        d11[i] + th.cos() / th.sin() * d1[i] + d22[i] / th.sin().powi(2)
                    })
                    .collect()
            };
            let expect: Vec<f64> = f.values().iter().map(|v| -l * (l + n as f64 - 1.0) * v).collect();
            assert!(max_diff(&lap, &expect) < 1e-11 * (1.0 + l * l), "n={n} j={j}");
        }
    }
}

#[test]
fn kernel_projection_basics() {
    for n in [1, 2] {
        let g = grid(n);
        for l in 0..=n {
            let t = SphereField::from_fn(&g, |x| x[l]).project_kernel();
            for (i, v) in t.iter().enumerate() {
                assert!((v - if i == l { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
        let even =
            SphereField::from_fn(&g, |x| x[0] * x[0] + 0.3 * x[0] * x[n] + x.iter().map(|v| v.powi(4)).sum::<f64>());
        assert!(even.project_kernel().iter().all(|v| v.abs() < 1e-14));
        let f = SphereField::from_fn(&g, |x| 1.0 + x[0]).project_kperp();
        assert!(f.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
        let xy = SphereField::from_fn(&g, |x| x[0] * x[1]);
        assert!(max_diff(xy.project_kperp().values(), xy.values()) < 1e-14);
    }
}

#[test]
fn even_curvature_quadratic_has_no_kernel_part() {
    let jet = curvature_jet(&catalog::skew_bump(3), &[0.1, 0.0, 0.0]).unwrap();
    let g = grid(2);
    let f = SphereField::from_fn(&g, |x| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += jet.ricci.at(&[i, j]) * x[i] * x[j];
            }
        }
        s
    });
    assert!(f.project_kernel().iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn kperp_projection_is_idempotent() {
    let g = grid(2);
    let coeffs: Vec<f64> = (0..g.basis_len()).map(|j| ((j * 13 + 1) as f64).cos()).collect();
    let f = SphereField::from_coeffs(&g, coeffs).project_kperp();
    assert!(max_diff(f.project_kperp().values(), f.values()) < 1e-12);
}

#[test]
fn inverse_of_l_on_simple_harmonics() {
    let g = grid(2);
    // Y_2 block (basis indices 4..9) is divided by 4, constants by −2
    for j in 4..9 {
        let mut c = vec![0.0; g.basis_len()];
        c[j] = 1.0;
        let f = SphereField::from_coeffs(&g, c);
        let phi = f.solve_l().unwrap();
        assert!(max_diff(phi.values(), f.scaled(0.25).values()) < 1e-13);
    }
    for n in [1, 2] {
        let g = grid(n);
        let phi = SphereField::from_fn(&g, |_| 1.0).solve_l().unwrap();
        assert!(phi.values().iter().all(|v| (v + 1.0 / n as f64).abs() < 1e-13));
    }
    let bad = SphereField::from_fn(&g, |x| x[2]);
    assert!(matches!(bad.solve_l(), Err(Error::Solvability(_))));
}

#[test]
fn inverse_of_l_matches_closed_form_for_cubic_and_quadratic_data() {
    let g = grid(2);
    let n = 2.0;
    let chart = catalog::skew_bump(3).with_k(catalog::k_cubic(3, &[0.0; 3], 0.4));
    let jet = curvature_jet(&chart, &[0.0; 3]).unwrap();
    let dk = |p: usize, i: usize, j: usize| *jet.cov_k.at(&[p, i, j]);
    let ric = |i: usize, j: usize| *jet.ricci.at(&[i, j]);
    // metric is δ at the origin up to the constant factor; work with the raw components
    let cubic = |x: &[f64]| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for p in 0..3 {
                    s += dk(p, i, j) * x[i] * x[j] * x[p];
                }
            }
        }
        s
    };
    let mut lin = [0.0; 3];
    for i in 0..3 {
        for r in 0..3 {
            lin[i] += dk(i, r, r) + 2.0 * dk(r, i, r);
        }
    }
    let f = SphereField::from_fn(&g, cubic).project_kperp();
    let phi = f.solve_l().unwrap();
    let oracle = SphereField::from_fn(&g, |x| {
        cubic(x) / (2.0 * (n + 3.0)) - (0..3).map(|i| lin[i] * x[i]).sum::<f64>() / (2.0 * (n + 3.0) * (n + 3.0))
    });
    assert!(max_diff(phi.values(), oracle.values()) < 1e-10);
    assert!(phi.project_kernel().iter().all(|v| v.abs() < 1e-12));

    let quad = |x: &[f64]| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += ric(i, j) * x[i] * x[j];
            }
        }
        s / 3.0
    };
    let sc: f64 = (0..3).map(|i| ric(i, i)).sum();
    let phi = SphereField::from_fn(&g, quad).solve_l().unwrap();
    let oracle = SphereField::from_fn(&g, |x| quad(x) / (n + 2.0) - 2.0 * sc / (3.0 * n * (n + 2.0)));
    assert!(max_diff(phi.values(), oracle.values()) < 1e-12);
}
