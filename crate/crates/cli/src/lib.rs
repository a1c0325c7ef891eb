//! Experiment driver for the `neural-eot` estimator: sample-file I/O,
//! Sinkhorn references, error sweeps with log-log plots, and plan sampling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod data;
pub mod error;
pub mod slope;
pub mod svg;
pub mod sweep;

pub use commands::{run, Cli};
pub use error::CliError;
