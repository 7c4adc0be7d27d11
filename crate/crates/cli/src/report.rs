use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use calibflow::RigidTransform;
use serde::Serialize;
use serde_json::{json, Value};

pub const OUT_ENV: &str = "CALIBFLOW_OUT";

pub fn pose_json(t: &RigidTransform) -> Value {
    json!(t.to_row_major())
}

/// Header shared by every machine-readable report.
pub fn envelope(command: &str, seed: Option<u64>, config: &impl Serialize) -> Result<Value> {
    Ok(json!({
        "tool": "calibflow",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": serde_json::to_value(config)?,
    }))
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}
