use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Dense tensor of fixed rank over a `dim`-dimensional index space, stored
/// row-major (last index fastest). Index placement (up/down) is a convention
/// of the producer and documented at each field that holds one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    pub rank: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Tensor<T> {
    pub fn filled(rank: usize, dim: usize, value: T) -> Self {
        Tensor { rank, dim, data: alloc::vec![value; dim.pow(rank as u32)] }
    }

    pub fn from_fn(rank: usize, dim: usize, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let len = dim.pow(rank as u32);
        let mut idx = alloc::vec![0; rank];
        let mut data = Vec::with_capacity(len);
        for flat in 0..len {
            let mut rem = flat;
            for slot in (0..rank).rev() {
                idx[slot] = rem % dim;
                rem /= dim;
            }
            data.push(f(&idx));
        }
        Tensor { rank, dim, data }
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn at(&self, idx: &[usize]) -> &T {
        &self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor { rank: self.rank, dim: self.dim, data: self.data.iter().map(f).collect() }
    }
}

impl Tensor<f64> {
    pub fn zeros(rank: usize, dim: usize) -> Self {
        Self::filled(rank, dim, 0.0)
    }

    /// Euclidean norm of the component array (the tensor norm in an
    /// orthonormal frame).
    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Components in a new basis `e_a = Σ_b frame[a][b] ∂_b`, assuming every
    /// index is covariant.
    pub fn in_frame(&self, frame: &[Vec<f64>]) -> Self {
        let mut cur = self.clone();
        for slot in 0..self.rank {
            let prev = cur.clone();
            cur = Tensor::from_fn(self.rank, self.dim, |idx| {
                let mut j = idx.to_vec();
                let mut s = 0.0;
                for b in 0..self.dim {
                    j[slot] = b;
                    s += frame[idx[slot]][b] * prev.at(&j);
                }
                s
            });
        }
        cur
    }
}
