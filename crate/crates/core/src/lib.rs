#![no_std]
// index loops mirror the tensor notation; `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]
//! Obstruction forms and a discretized Lyapunov–Schmidt construction of
//! prescribed-curvature foliations (STCMC and constant expansion) near a point
//! of an initial data set `(M, g, k)`.

extern crate alloc;

pub mod chart;
pub mod error;
pub mod geodesic;
pub mod jets;
pub mod model;
pub mod obstruction;
pub mod scalar;
pub mod series;
pub mod solver;
pub mod sphere;
pub mod surface;
pub mod tensor;

pub use error::{Error, Result};
