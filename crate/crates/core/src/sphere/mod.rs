//! Function analysis on `S^n`: quadrature, harmonic transforms, the operator
//! `L = −Δ − n` and the kernel projections, plus the monomial moments.

mod field;
mod grid;

pub use field::{KernelVector, SphereField};
pub use grid::{gauss_legendre, SphereGrid};

use crate::error::{Error, Result};

/// `|S^n|` for any `n ≥ 1`.
pub fn sphere_area(n: usize) -> f64 {
    let h = (n + 1) as f64 / 2.0;
    2.0 * libm::pow(core::f64::consts::PI, h) / libm::tgamma(h)
}

/// `∫_{S^n} x^{i_1} ⋯ x^{i_m} dμ` in closed form (`m ≤ 6`).
///
/// The integral is `|S^n| · #pairings / ((n+1)(n+3)⋯(n+m−1))` where the
/// pairings match equal indices; odd multiplicities give zero.
pub fn moment(n: usize, indices: &[usize]) -> Result<f64> {
    let m = indices.len();
    if m > 6 {
        return Err(Error::UnsupportedOrder(m));
    }
    if m % 2 == 1 {
        return Ok(0.0);
    }
    let mut counts = [0usize; 8];
    for &i in indices {
        if i > n {
            return Err(Error::InvalidInput(alloc::format!("index {i} out of range for S^{n}")));
        }
        counts[i] += 1;
    }
    let mut pairings = 1.0;
    for c in counts {
        if c % 2 == 1 {
            return Ok(0.0);
        }
        // (c − 1)!!
        let mut k = c as i64 - 1;
        while k > 1 {
            pairings *= k as f64;
            k -= 2;
        }
    }
    let denom: f64 = (0..m / 2).map(|j| (n + 1 + 2 * j) as f64).product();
    Ok(sphere_area(n) * pairings / denom)
}

/// The same integral by quadrature on a grid.
pub fn moment_quadrature(grid: &SphereGrid, indices: &[usize]) -> f64 {
    let vals: alloc::vec::Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.node(i);
            indices.iter().map(|&k| x[k]).product()
        })
        .collect();
    grid.integrate(&vals)
}
