//! Command-line harness around `foliation-core`: configuration, chart
//! catalog instantiation, the subcommands and report serialization.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use commands::{run, Command, Outcome, Status};
pub use config::Config;
pub use error::{ForgeError, Result};
