//! Subcommands and the groups of checks each one runs.

use crate::checks::{self, Outcome};
use crate::config::RunConfig;
use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Tower parameters and radial profile of U*.
    BuildTower,
    /// Kernel derivative identities and the Gram matrix.
    VerifyKernel,
    /// Green's functions against the grid solver and the hole limit.
    GreensCheck,
    /// Order of the projection expansion.
    ProjectionCheck,
    /// Calibration, tower energies and the energy expansions.
    EnergyCheck,
    /// Sign of the pair function on the sphere pairs.
    HoleCriterion,
    /// Slices of the reduced functional.
    Landscape,
    /// Min-max search for a critical point of the reduced functional.
    FindCritical,
    /// Two-tower field assembled at the critical point.
    Assemble,
    /// The full acceptance suite.
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::BuildTower => "build-tower",
            Command::VerifyKernel => "verify-kernel",
            Command::GreensCheck => "greens-check",
            Command::ProjectionCheck => "projection-check",
            Command::EnergyCheck => "energy-check",
            Command::HoleCriterion => "hole-criterion",
            Command::Landscape => "landscape",
            Command::FindCritical => "find-critical",
            Command::Assemble => "assemble",
            Command::All => "all",
        }
    }
}

/// Outcomes of one command.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: Command,
    pub checks: Vec<Outcome>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.id.clone()).collect()
    }
}

fn verify_kernel(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let v = checks::kernel_identities(cfg, cfg.dimension, cfg.kernel.gram)?;
    let passed = v["passed"].as_bool().unwrap_or(false);
    Ok(Outcome::from_parts("verify-kernel", "kernel derivative identities", passed, v))
}

fn hole(cfg: &RunConfig) -> anyhow::Result<Outcome> {
    let v = checks::hole_report(cfg, cfg.domain.delta, cfg.search.sigma)?;
    let passed = v["all_negative"].as_bool() == Some(true);
    Ok(Outcome::from_parts("hole-criterion", "hole criterion", passed, v))
}

fn projection(cfg: &RunConfig) -> Outcome {
    let mut o = Outcome::guard("7", "projection expansion order", checks::projection_criterion(cfg));
    o.details["meshfree"] = checks::projection_meshfree(cfg).unwrap_or_else(|e| json!({ "error": e.to_string() }));
    o
}

pub fn run(command: Command, cfg: &RunConfig) -> Report {
    let g = Outcome::guard;
    let checks = match command {
        Command::BuildTower => vec![g("build-tower", "tower parameters", checks::build_tower_report(cfg))],
        Command::VerifyKernel => vec![g("verify-kernel", "kernel derivative identities", verify_kernel(cfg))],
        Command::GreensCheck => vec![g("6", "Green's function oracles", checks::greens_criterion(cfg))],
        Command::ProjectionCheck => vec![projection(cfg)],
        Command::EnergyCheck => vec![
            g("3", "quadrature calibration", checks::calibration_gate(cfg)),
            g("4", "energy per spike", checks::energy_per_spike(cfg)),
            g("5", "error-norm scaling", checks::error_norm_scaling(cfg)),
            g("8", "energy expansion in lambda", checks::j0_criterion(cfg)),
            g("9", "energy expansion in epsilon", checks::jeps_criterion(cfg)),
        ],
        Command::HoleCriterion => vec![g("hole-criterion", "hole criterion", hole(cfg))],
        Command::Landscape => vec![g("landscape", "reduced functional slices", checks::landscape(cfg))],
        Command::FindCritical => vec![g("11", "min-max critical point", checks::search_criterion(cfg))],
        Command::Assemble => vec![g("12", "assembled two-tower field", checks::assemble_criterion(cfg))],
        Command::All => checks::acceptance(cfg),
    };
    Report { command, checks }
}
