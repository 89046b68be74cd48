//! Command-line layer for `rcar`: TOML configuration, panel CSV files,
//! JSON reports and the `analyze`, `simulate`, `estimate`, `mc` and
//! `oracle` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod oracle;
pub mod panel_io;
pub mod report;

pub use commands::{cmd_analyze, cmd_estimate, cmd_mc, cmd_simulate};
pub use config::Config;
pub use error::{CliError, Result};
pub use oracle::cmd_oracle;
