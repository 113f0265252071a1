//! Argument handling shared by the binary and the tests.

use crate::commands::{self, Command, Report};
use crate::config::{parse_overrides, RunConfig};
use crate::output;
use anyhow::{anyhow, Result};
use clap::Parser;
use std::path::PathBuf;

/// Bubble-tower verification suite.
///
/// Settings come from the defaults, then `--config FILE`, then `--key value`
/// overrides (dotted paths such as `--search.seeds 4`, or the short forms
/// `--n`, `--k`, `--delta`, `--sigma`, `--seed`), then TOWERLAB_OUTPUT_DIR.
#[derive(Parser, Debug)]
#[command(name = "towerlab", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
    pub overrides: Vec<String>,
}

/// A parsed invocation.
#[derive(Debug)]
pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
}

impl Cli {
    /// Resolves the configuration. `--config` may also appear after the
    /// command among the overrides.
    pub fn resolve(self) -> Result<Invocation> {
        let mut file = self.config;
        let mut rest = Vec::new();
        let mut it = self.overrides.into_iter();
        while let Some(a) = it.next() {
            if a == "--config" {
                file = Some(it.next().ok_or_else(|| anyhow!("--config needs a path"))?.into());
            } else if let Some(p) = a.strip_prefix("--config=") {
                file = Some(p.into());
            } else {
                rest.push(a);
            }
        }
        let config = RunConfig::load(file.as_deref(), &parse_overrides(&rest)?)?;
        Ok(Invocation {
            command: self.command,
            config,
        })
    }
}

#[cfg(feature = "parallel")]
fn configure_workers(workers: Option<usize>) -> Result<()> {
    if let Some(w) = workers {
        // A second configuration in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_workers(_: Option<usize>) -> Result<()> {
    Ok(())
}

/// Runs one invocation, writes its outputs and prints one line per check.
pub fn execute(inv: &Invocation) -> Result<Report> {
    configure_workers(inv.config.workers)?;
    let report = commands::run(inv.command, &inv.config);
    for c in &report.checks {
        println!("{} {:>13}  {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.title);
    }
    output::write_report(&inv.config.output_dir, &inv.config, &report)?;
    println!("summary: {}", inv.config.output_dir.join("summary.json").display());
    Ok(report)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<Report>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    execute(&cli.resolve()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn summary(dir: &std::path::Path) -> Value {
        serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap()
    }

    #[test]
    fn build_tower_reports_mu() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let report = run_from(["towerlab", "build-tower", "--n", "4", "--k", "8", "--output-dir", out]).unwrap();
        assert!(report.passed());
        let s = summary(dir.path());
        let mu = s["checks"][0]["details"]["mu"].as_f64().unwrap();
        assert!((mu - 0.095238).abs() < 1e-6);
        assert!(dir.path().join("data/tower_profile.csv").exists());
        assert!(dir.path().join("effective-config.json").exists());
    }

    #[test]
    fn verify_kernel_passes_in_three_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let report = run_from(["towerlab", "verify-kernel", "--n", "3", "--k", "8", "--output-dir", out]).unwrap();
        assert!(report.passed());
        let d = &summary(dir.path())["checks"][0]["details"];
        assert!(d["max_identity_residual"].as_f64().unwrap() < 1e-5);
        assert_eq!(d["gram"]["rank"], 9);
    }

    #[test]
    fn hole_criterion_reports_sign_flag() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        run_from(["towerlab", "hole-criterion", "--delta", "0.01", "--sigma", "0.1", "--output-dir", out]).unwrap();
        let d = &summary(dir.path())["checks"][0]["details"];
        assert_eq!(d["all_negative"], Value::Bool(true));
        assert!((d["ball_control"]["antipodal"].as_f64().unwrap() - 0.090187).abs() < 1e-5);
    }

    #[test]
    fn config_file_and_trailing_config_flag() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.json");
        std::fs::write(&file, r#"{"dimension": 4, "tower": {"k": 16}}"#).unwrap();
        let cli = Cli::try_parse_from(["towerlab", "build-tower", "--config", file.to_str().unwrap(), "--k", "8"]).unwrap();
        let inv = cli.resolve().unwrap();
        assert_eq!(inv.config.dimension, 4);
        assert_eq!(inv.config.tower.k, 8);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(Cli::try_parse_from(["towerlab", "no-such-command"]).is_err());
        let cli = Cli::try_parse_from(["towerlab", "all", "--n", "9"]).unwrap();
        assert!(cli.resolve().is_err());
        let cli = Cli::try_parse_from(["towerlab", "all", "--dangling"]).unwrap();
        assert!(cli.resolve().is_err());
    }
}
