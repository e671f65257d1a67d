#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod format;
pub mod pipeline;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
pub use mcis_core;
