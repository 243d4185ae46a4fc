use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::OnceCell;

use super::grid::SphereGrid;
use crate::error::{Error, Result};

/// Components of a degree-one harmonic in the basis `x^0, …, x^n`.
pub type KernelVector = Vec<f64>;

/// Scalar field on a [`SphereGrid`], stored by node values with lazily
/// computed harmonic coefficients.
#[derive(Clone, Debug)]
pub struct SphereField {
    grid: Arc<SphereGrid>,
    values: Vec<f64>,
    coeffs: OnceCell<Vec<f64>>,
}

impl SphereField {
    pub fn from_values(grid: &Arc<SphereGrid>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        SphereField { grid: grid.clone(), values, coeffs: OnceCell::new() }
    }

    pub fn from_fn(grid: &Arc<SphereGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self::from_values(grid, values)
    }

    pub fn from_coeffs(grid: &Arc<SphereGrid>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), grid.basis_len());
        let values = synthesize(grid, &coeffs, 0);
        let cell = OnceCell::new();
        let _ = cell.set(coeffs);
        SphereField { grid: grid.clone(), values, coeffs: cell }
    }

    pub fn zeros(grid: &Arc<SphereGrid>) -> Self {
        Self::from_coeffs(grid, vec![0.0; grid.basis_len()])
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Harmonic coefficients up to `L_max` (weighted inner products).
    pub fn coeffs(&self) -> &[f64] {
        self.coeffs.get_or_init(|| analyze(&self.grid, &self.values))
    }

    /// Node values of the angular derivative `d` (see
    /// [`SphereGrid::basis`]) of the band-limited part.
    pub fn derivative(&self, d: usize) -> Vec<f64> {
        synthesize(&self.grid, self.coeffs(), d)
    }

    /// Value of the band-limited part at the point with angles `(θ, λ)`.
    pub fn eval_at(&self, angles: [f64; 2]) -> f64 {
        self.grid.basis_at(angles).iter().zip(self.coeffs()).map(|(a, b)| a * b).sum()
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Weighted `L²` norm.
    pub fn l2(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        libm::sqrt(self.grid.integrate(&sq))
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map_coeffs(&self, f: impl Fn(usize, f64) -> f64) -> SphereField {
        let c = self.coeffs().iter().enumerate().map(|(j, c)| f(self.grid.degree(j), *c)).collect();
        SphereField::from_coeffs(&self.grid, c)
    }

    pub fn scaled(&self, s: f64) -> SphereField {
        SphereField::from_values(&self.grid, self.values.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, o: &SphereField) -> SphereField {
        SphereField::from_values(&self.grid, self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, o: &SphereField) -> SphereField {
        SphereField::from_values(&self.grid, self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect())
    }

    /// `∫ f x^l dμ` for each `l` (the unnormalized kernel projection).
    pub fn kernel_moments(&self) -> KernelVector {
        let d = self.grid.n() + 1;
        let mut out = vec![0.0; d];
        for (i, (v, w)) in self.values.iter().zip(self.grid.weights()).enumerate() {
            let x = self.grid.node(i);
            for l in 0..d {
                out[l] += v * w * x[l];
            }
        }
        out
    }

    /// `T̃ f = (n+1)/|S^n| ∫ f x^l dμ e_l`, so that `T̃ x^l = e_l`.
    pub fn project_kernel(&self) -> KernelVector {
        let c = (self.grid.n() + 1) as f64 / self.grid.area();
        self.kernel_moments().iter().map(|v| v * c).collect()
    }

    /// `π^⊥ f`: removes the degree-one content.
    pub fn project_kperp(&self) -> SphereField {
        let t = self.project_kernel();
        let values = (0..self.grid.len())
            .map(|i| {
                let x = self.grid.node(i);
                self.values[i] - t.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        SphereField::from_values(&self.grid, values)
    }

    /// `Δ_{S^n}` of the band-limited part.
    pub fn laplacian(&self) -> SphereField {
        let n = self.grid.n() as f64;
        self.map_coeffs(|l, c| -(l as f64) * (l as f64 + n - 1.0) * c)
    }

    /// `L = −Δ − n`.
    pub fn apply_l(&self) -> SphereField {
        let n = self.grid.n() as f64;
        self.map_coeffs(|l, c| ((l as f64) * (l as f64 + n - 1.0) - n) * c)
    }

    /// Solves `Lφ = f` with `π φ = 0`; `f` must have no kernel component.
    pub fn solve_l(&self) -> Result<SphereField> {
        self.solve_l_tol(1e-10)
    }

    pub fn solve_l_tol(&self, tol: f64) -> Result<SphereField> {
        let t = self.project_kernel();
        let k = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if k > tol * self.sup().max(1.0) {
            return Err(Error::Solvability(k));
        }
        let n = self.grid.n() as f64;
        Ok(self.map_coeffs(|l, c| if l == 1 { 0.0 } else { c / ((l as f64) * (l as f64 + n - 1.0) - n) }))
    }
}

pub(crate) fn analyze(grid: &SphereGrid, values: &[f64]) -> Vec<f64> {
    let w = grid.weights();
    let fw: Vec<f64> = values.iter().zip(w).map(|(a, b)| a * b).collect();
    (0..grid.basis_len()).map(|j| grid.basis(0, j).iter().zip(&fw).map(|(a, b)| a * b).sum()).collect()
}

pub(crate) fn synthesize(grid: &SphereGrid, coeffs: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (j, c) in coeffs.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        for (o, b) in out.iter_mut().zip(grid.basis(d, j)) {
            *o += c * b;
        }
    }
    out
}
