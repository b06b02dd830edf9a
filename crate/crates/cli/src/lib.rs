//! Configuration, orchestration and reports for `nehari4`.
//!
//! `nehari4 --config run.json --out dir/` parses one [`config::RunConfig`],
//! dispatches to a workflow in [`run`], and writes `report.json`,
//! `meta.json`, field snapshots and CSV traces. The `verify-all` workflow runs
//! the [`acceptance`] suite.

// `!(x > 0.0)` style guards reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, RunConfig};
pub use error::CliError;
pub use run::{execute, RunOutcome};
