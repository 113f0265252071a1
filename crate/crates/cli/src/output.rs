//! Output directory layout: `summary.json`, `effective-config.json`,
//! `data/*.csv` and `fields/*.bin` with JSON sidecars.

use crate::commands::Report;
use crate::config::RunConfig;
use anyhow::{Context, Result};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

/// Summary document. It holds no timings or paths, so reruns with the same
/// configuration produce identical bytes.
pub fn summary(report: &Report) -> serde_json::Value {
    json!({
        "command": report.command.name(),
        "passed": report.passed(),
        "failures": report.failures(),
        "checks": report.checks,
    })
}

/// Writes every artefact of `report` below `dir` and returns the files written.
pub fn write_report(dir: &Path, cfg: &RunConfig, report: &Report) -> Result<Vec<PathBuf>> {
    let data = dir.join("data");
    let fields = dir.join("fields");
    fs::create_dir_all(&data).with_context(|| format!("creating {}", data.display()))?;
    fs::create_dir_all(&fields)?;
    let mut written = Vec::new();
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary(report))? + "\n")?;
    written.push(path);
    let path = dir.join("effective-config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg)? + "\n")?;
    written.push(path);
    for check in &report.checks {
        for (name, text) in &check.csv {
            let path = data.join(name);
            fs::write(&path, text)?;
            written.push(path);
        }
        for (name, field) in &check.fields {
            let path = fields.join(format!("{name}.bin"));
            field.write(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}
