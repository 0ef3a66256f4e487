use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{usage, CliResult};

pub const RUN_MANIFEST: &str = "run_manifest.json";

/// Record of one invocation, written last into its output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub command_line: Vec<String>,
    /// Flags merged over the config file, before defaults.
    pub options: Value,
    /// Fully resolved settings.
    pub resolved: Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub outputs: Vec<String>,
    pub summary: Value,
    pub duration_secs: f64,
}

impl RunManifest {
    /// Writes to a temporary file first and renames it into place.
    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let tmp = dir.join(format!(".{RUN_MANIFEST}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        fs::rename(&tmp, dir.join(RUN_MANIFEST))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(
            dir.join(RUN_MANIFEST),
        )?)?)
    }
}

/// Creates `dir`, refusing a non-empty one unless `force` is set.
pub fn prepare_out(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return usage(format!("output path {} is not a directory", dir.display()));
        }
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return usage(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            ));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}
