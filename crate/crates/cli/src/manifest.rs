use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::Command;

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_ROOT_VAR: &str = "RPCM_OUTPUT_ROOT";

/// Record of one run. `params` holds the parsed command, which is enough to
/// replay the job with `rerun`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub params: Command,
    pub argv: Vec<String>,
    pub seed: u64,
    pub artifacts: BTreeMap<String, PathBuf>,
    pub version: String,
    pub timings: Timings,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix: f64,
    pub wall_seconds: f64,
    /// Per-phase wall time in seconds, in execution order.
    pub phases: Vec<(String, f64)>,
}

pub struct Clock {
    start: Instant,
    started_unix: f64,
    mark: Instant,
    phases: Vec<(String, f64)>,
}

impl Clock {
    pub fn start() -> Self {
        let now = Instant::now();
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self {
            start: now,
            started_unix: unix,
            mark: now,
            phases: Vec::new(),
        }
    }

    pub fn phase(&mut self, name: &str) {
        let now = Instant::now();
        self.phases.push((name.to_string(), (now - self.mark).as_secs_f64()));
        self.mark = now;
    }

    pub fn finish(self) -> Timings {
        Timings {
            started_unix: self.started_unix,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            phases: self.phases,
        }
    }
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            manifest.schema_version == SCHEMA_VERSION,
            "manifest schema {} is not supported (expected {SCHEMA_VERSION})",
            manifest.schema_version
        );
        Ok(manifest)
    }
}

/// Resolves a relative output directory against the output-root override.
pub fn resolve_out(out: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if out.is_relative() && !root.is_empty() => Path::new(&root).join(out),
        _ => out.to_path_buf(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
