use foliation_core::chart::{catalog, AmbientChart, KModel};
use foliation_core::jets::curvature_jet;
use foliation_core::obstruction::{evaluate, CeConvention, FormOptions, Theorem};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `∂_m k_ij` and `k_ij` at the origin of a flat chart, read off by direct
/// evaluation of the polynomial model with central differences of step 1e-5
/// (exact for linear fields up to roundoff).
fn flat_k_data(chart: &AmbientChart) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let d = chart.dim;
    let k0 = chart.k_at(&vec![0.0; d]);
    let k = (0..d).map(|i| (0..d).map(|j| k0[i * d + j]).collect()).collect();
    let h = 1e-5;
    let mut dk = vec![vec![vec![0.0; d]; d]; d];
    for m in 0..d {
        let mut xp = vec![0.0; d];
        let mut xm = vec![0.0; d];
        xp[m] = h;
        xm[m] = -h;
        let (kp, km) = (chart.k_at(&xp), chart.k_at(&xm));
        for i in 0..d {
            for j in 0..d {
                dk[m][i][j] = (kp[i * d + j] - km[i * d + j]) / (2.0 * h);
            }
        }
    }
    (k, dk)
}

#[test]
fn flat_linear_k_matches_term_by_term_contraction() {
    for dim in [2, 3] {
        let n = (dim - 1) as f64;
        let chart = catalog::flat(dim).with_k(catalog::k_linear(dim, &vec![0.0; dim], 0.7, 0.3));
        let (k, dk) = flat_k_data(&chart);
        let tr: f64 = (0..dim).map(|i| k[i][i]).sum();
        let dtr: Vec<f64> = (0..dim).map(|m| (0..dim).map(|i| dk[m][i][i]).sum()).collect();
        let mut a_st = vec![0.0; dim];
        let mut a_ce = vec![0.0; dim];
        let mut a_ce_printed = vec![0.0; dim];
        for l in 0..dim {
            let mut grad_k2 = 0.0;
            let mut div_kk = 0.0;
            let mut div_trk = 0.0;
            let mut div_k = 0.0;
            for i in 0..dim {
                div_trk += dtr[i] * k[l][i] + tr * dk[i][l][i];
                div_k += dk[i][l][i];
                for j in 0..dim {
                    grad_k2 += 2.0 * k[i][j] * dk[l][i][j];
                    div_kk += dk[i][l][j] * k[j][i] + k[l][j] * dk[i][j][i];
                }
            }
            let c1 = (n + 1.0) * (n + 5.0) + 1.0;
            a_st[l] = (grad_k2 + c1 * tr * dtr[l] + 4.0 * div_kk - 2.0 * (n + 4.0) * div_trk) / (n + 5.0);
            a_ce[l] = (n + 2.0) / (n + 3.0) * dtr[l] - 2.0 / (n + 3.0) * div_k;
            a_ce_printed[l] = (n + 2.0) / (n + 3.0) * dtr[l] - 2.0 * div_k;
        }
        let r = evaluate(&chart, &vec![0.0; dim], &FormOptions::default()).unwrap();
        assert!(max_diff(&r.a_st, &a_st) < 1e-9, "{:?} vs {:?}", r.a_st, a_st);
        assert!(max_diff(&r.a_ce, &a_ce) < 1e-9);
        let printed = FormOptions { ce: CeConvention::AsPrinted, ..Default::default() };
        let r = evaluate(&chart, &vec![0.0; dim], &printed).unwrap();
        assert!(max_diff(&r.a_ce, &a_ce_printed) < 1e-9);
    }
}

#[test]
fn vanishing_k_reduces_to_scalar_curvature() {
    let chart = catalog::skew_bump(3);
    let p = [0.05, -0.02, 0.1];
    let r = evaluate(&chart, &p, &FormOptions::default()).unwrap();
    let jet = curvature_jet(&chart, &p).unwrap();
    for l in 0..3 {
        assert!((r.a_st[l] - jet.grad_scalar.data[l]).abs() < 1e-12);
        assert!((r.hat_a_ce_plus[l] + 0.5 * jet.grad_scalar.data[l]).abs() < 1e-12);
        assert!((r.hat_a_ce_minus[l] + 0.5 * jet.grad_scalar.data[l]).abs() < 1e-12);
        assert!(r.a_ce[l].abs() < 1e-14);
        assert!(r.t_hat[l].iter().all(|v| v.abs() < 1e-14));
    }
}

#[test]
fn flat_with_constant_k_is_trivial_and_fails_invertibility() {
    let chart = catalog::flat(3).with_k(catalog::k_constant(3, 0.4));
    let r = evaluate(&chart, &[0.0; 3], &FormOptions::default()).unwrap();
    assert!(r.a_st.iter().chain(&r.a_ce).all(|v| v.abs() < 1e-14));
    assert!(r.grad_a_st.iter().flatten().all(|v| v.abs() < 1e-14));
    let v = r.verdict(Theorem::PriStcmc);
    assert!(!v.holds);
    assert!(!v.conditions.iter().find(|c| c.name == "grad_a_st_invertible").unwrap().holds);
}

#[test]
fn flat_without_k_has_all_fields_zero() {
    let r = evaluate(&catalog::flat(3), &[0.0; 3], &FormOptions::default()).unwrap();
    let all = r.a_st.iter().chain(&r.a_ce).chain(&r.hat_a_ce_plus).chain(r.grad_a_st.iter().flatten());
    assert!(all.cloned().fold(0.0f64, |m, v| m.max(v.abs())) == 0.0);
    assert_eq!(r.k_norm + r.grad_k_norm + r.ric_norm + r.cov2_k_norm + r.cov3_k_norm, 0.0);
    assert!(!r.verdict(Theorem::PriStcmc).holds);
}

#[test]
fn gradient_at_a_critical_point_is_half_hessian_and_matches_differences() {
    let chart = catalog::bump(3);
    let r = evaluate(&chart, &[0.0; 3], &FormOptions::default()).unwrap();
    let h = 1e-4;
    for b in 0..3 {
        let mut xp = [0.0; 3];
        let mut xm = [0.0; 3];
        xp[b] = h;
        xm[b] = -h;
        let gp = curvature_jet(&chart, &xp).unwrap().grad_scalar.data;
        let gm = curvature_jet(&chart, &xm).unwrap().grad_scalar.data;
        for l in 0..3 {
            let fd = (gp[l] - gm[l]) / (2.0 * h);
            assert!((r.grad_a_st[l][b] - fd).abs() < 1e-6 * fd.abs().max(1.0));
            assert!((r.grad_a_st[l][b] - r.partial_a_st[l][b]).abs() < 1e-12);
        }
    }
    let v = r.verdict(Theorem::PriStcmc);
    assert!(v.holds, "{v:?}");
    assert_eq!(v.smallness_lhs, 0.0);
    assert!(v.c_critical.is_none());
}

fn rotation(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut s = seed;
    let mut rnd = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    let mut q: Vec<Vec<f64>> = Vec::new();
    for _ in 0..dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rnd()).collect();
        for e in &q {
            let c: f64 = v.iter().zip(e).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        q.push(v.iter().map(|a| a / n).collect());
    }
    q
}

#[test]
fn forms_are_basis_covariant() {
    let base = catalog::skew_bump(3).with_k(catalog::k_cubic(3, &[0.0; 3], 0.3));
    let p = [0.0; 3];
    let opts = FormOptions::default();
    let r0 = evaluate(&base, &p, &opts).unwrap();
    for seed in [1, 2, 3] {
        let q = rotation(3, seed);
        let r1 = evaluate(&base.rotated(&q), &p, &opts).unwrap();
        let rot = |v: &[f64]| -> Vec<f64> { (0..3).map(|i| (0..3).map(|j| q[i][j] * v[j]).sum()).collect() };
        assert!(max_diff(&r1.a_st, &rot(&r0.a_st)) < 1e-9);
        assert!(max_diff(&r1.a_ce, &rot(&r0.a_ce)) < 1e-9);
        assert!(max_diff(&r1.hat_a_ce_plus, &rot(&r0.hat_a_ce_plus)) < 1e-9);
        for (m1, m0) in [(&r1.grad_a_st, &r0.grad_a_st), (&r1.t_hat, &r0.t_hat)] {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            s += q[i][a] * m0[a][b] * q[j][b];
                        }
                    }
                    assert!((m1[i][j] - s).abs() < 1e-9);
                }
            }
        }
        for (v1, v0) in r1.verdicts.iter().zip(&r0.verdicts) {
            assert_eq!(v1.holds, v0.holds);
            let scale = v0.smallness_lhs.abs().max(1.0);
            assert!(v0.smallness_lhs.is_infinite() || (v1.smallness_lhs - v0.smallness_lhs).abs() < 1e-9 * scale);
        }
        assert!((r1.cov3_k_norm - r0.cov3_k_norm).abs() < 1e-9);
    }
}

#[test]
fn k_part_of_a_st_is_quadratic() {
    let chart = catalog::skew_bump(3);
    let k = catalog::k_cubic(3, &[0.0; 3], 0.5);
    let p = [0.02, 0.01, -0.03];
    let opts = FormOptions::default();
    let base = evaluate(&chart, &p, &opts).unwrap().a_st;
    let part = |eps: f64| -> Vec<f64> {
        let r = evaluate(&chart.clone().with_k(k.scaled(eps)), &p, &opts).unwrap();
        r.a_st.iter().zip(&base).map(|(a, b)| a - b).collect()
    };
    let one = part(1.0);
    let half = part(0.5);
    assert!(one.iter().any(|v| v.abs() > 1e-3));
    for (a, b) in one.iter().zip(&half) {
        assert!((0.25 * a - b).abs() < 1e-10);
    }
}

#[test]
fn a_ce_is_linear_in_k() {
    let chart = catalog::skew_bump(3);
    let k1 = catalog::k_cubic(3, &[0.0; 3], 0.5);
    let k2 = catalog::k_linear(3, &[0.0; 3], -0.8, 0.2);
    let p = [0.02, 0.01, -0.03];
    let opts = FormOptions::default();
    let ce = |k: KModel| evaluate(&chart.clone().with_k(k), &p, &opts).unwrap().a_ce;
    let (a, b, ab) = (ce(k1.clone()), ce(k2.clone()), ce(k1.sum(&k2)));
    for i in 0..3 {
        assert!((a[i] + b[i] - ab[i]).abs() < 1e-11);
    }
}

#[test]
fn critical_constant_saturates_the_smallness_inequality() {
    let chart = catalog::bump(3).with_k(catalog::k_linear(3, &[0.0; 3], 0.01, 0.2));
    let r = evaluate(&chart, &[0.0; 3], &FormOptions::default()).unwrap();
    let v = r.verdict(Theorem::PriStcmc);
    let c = v.c_critical.unwrap();
    assert!((c * v.smallness_lhs - 1.0).abs() < 1e-12);
}
