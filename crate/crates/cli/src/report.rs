//! JSON report envelope shared by every command.

use std::path::Path;

use serde::Serialize;

use crate::config::Config;
use crate::error::Result;
use crate::panel_io::write_atomic;

/// Bumped whenever a report field changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Report<T> {
    pub schema_version: u32,
    pub command: &'static str,
    pub generator: String,
    /// Effective configuration with all defaults filled in.
    pub config: Config,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &'static str, config: &Config, result: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            generator: format!("rcar {}", env!("CARGO_PKG_VERSION")),
            config: config.clone(),
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports contain only finite, serializable values");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }
}
