//! Run configuration: JSON schema, defaults and command-line overrides.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use towerlab::quadrature::QuadratureLevel;

/// Environment variable overriding `output-dir`.
pub const OUTPUT_ENV: &str = "TOWERLAB_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub dimension: usize,
    pub tower: TowerSection,
    pub domain: DomainSection,
    pub quadrature: QuadratureLevel,
    pub epsilon_sequence: Vec<f64>,
    pub lambda_sequence: Vec<f64>,
    pub kernel: KernelSection,
    pub greens: GreensSection,
    pub energy: EnergySection,
    pub hole: HoleSection,
    pub search: SearchSection,
    pub assemble: AssembleSection,
    pub landscape: LandscapeSection,
    pub output_dir: PathBuf,
    pub rng_seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dimension: 3,
            tower: TowerSection::default(),
            domain: DomainSection::default(),
            quadrature: QuadratureLevel::default(),
            epsilon_sequence: vec![0.02, 0.01, 0.005],
            lambda_sequence: vec![0.2, 0.1, 0.05, 0.025],
            kernel: KernelSection::default(),
            greens: GreensSection::default(),
            energy: EnergySection::default(),
            hole: HoleSection::default(),
            search: SearchSection::default(),
            assemble: AssembleSection::default(),
            landscape: LandscapeSection::default(),
            output_dir: PathBuf::from("towerlab-output"),
            rng_seed: 7,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TowerSection {
    pub k: usize,
}

impl Default for TowerSection {
    fn default() -> Self {
        TowerSection { k: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainChoice {
    Ball,
    Annulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub kind: DomainChoice,
    pub delta: f64,
    /// Grid nodes per axis for grid computations.
    pub grid: usize,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection {
            kind: DomainChoice::Annulus,
            delta: 0.05,
            grid: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub dimensions: Vec<usize>,
    pub points: usize,
    pub step: f64,
    /// Coarse step of the Richardson pair; the fine step is half of it.
    pub richardson_step: f64,
    pub gram: bool,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            dimensions: vec![3, 4],
            points: 50,
            step: 1e-4,
            richardson_step: 1e-2,
            gram: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreensSection {
    pub grid: usize,
    /// Annulus used for the grid comparison.
    pub annulus_delta: f64,
    pub sources: usize,
    /// Hole radii for the convergence towards the ball, decreasing.
    pub deltas: Vec<f64>,
}

impl Default for GreensSection {
    fn default() -> Self {
        GreensSection {
            grid: 96,
            annulus_delta: 0.2,
            sources: 4,
            deltas: vec![0.2, 0.1, 0.05, 0.02, 0.01],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySection {
    pub spike_counts: Vec<usize>,
    pub spike_dimension: usize,
    pub norm_exponent: f64,
    pub expansion_dimensions: Vec<usize>,
    pub expansion_lambdas: Vec<f64>,
    pub jeps_big_lambda: f64,
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection {
            spike_counts: vec![8, 16, 32],
            spike_dimension: 4,
            norm_exponent: 3.0,
            expansion_dimensions: vec![3, 4],
            expansion_lambdas: vec![0.1, 0.05, 0.025, 0.0125],
            jeps_big_lambda: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoleSection {
    pub samples: usize,
}

impl Default for HoleSection {
    fn default() -> Self {
        HoleSection { samples: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    /// Hole radius of the annulus searched.
    pub delta: f64,
    pub sigma: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub r_limit: f64,
    pub symmetry: bool,
    pub seeds: usize,
    pub xi_samples: usize,
    pub a_radius: f64,
    pub a_rings: usize,
    pub rho: f64,
    pub constraint_delta: f64,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            delta: 0.01,
            sigma: 0.1,
            r: 10.0,
            r_limit: 1e6,
            symmetry: true,
            seeds: 10,
            xi_samples: 48,
            a_radius: 0.2,
            a_rings: 2,
            rho: 0.05,
            constraint_delta: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssembleSection {
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    pub grid: usize,
    pub newton_iters: usize,
}

impl Default for AssembleSection {
    fn default() -> Self {
        AssembleSection {
            epsilon: 0.02,
            epsilons: vec![0.04, 0.02, 0.01],
            grid: 64,
            newton_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeSection {
    pub count: usize,
}

impl Default for LandscapeSection {
    fn default() -> Self {
        LandscapeSection { count: 41 }
    }
}

/// Short flags and the dotted paths they stand for.
const ALIASES: &[(&str, &str)] = &[
    ("n", "dimension"),
    ("k", "tower.k"),
    ("delta", "domain.delta"),
    ("sigma", "search.sigma"),
    ("seed", "rng-seed"),
];

fn resolve_alias(key: &str) -> &str {
    ALIASES.iter().find(|(a, _)| *a == key).map(|(_, p)| *p).unwrap_or(key)
}

/// Parses an override value as JSON, falling back to a string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| anyhow!("`{path}`: `{part}` is not inside an object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Splits `--key value` / `--key=value` pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, Value)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        let key = a.strip_prefix("--").ok_or_else(|| anyhow!("unexpected argument `{a}`"))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((resolve_alias(k).to_string(), parse_value(v)));
            i += 1;
        } else {
            let v = args.get(i + 1).ok_or_else(|| anyhow!("flag `{a}` needs a value"))?;
            out.push((resolve_alias(key).to_string(), parse_value(v)));
            i += 2;
        }
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults, then the file, then overrides, then the environment.
    pub fn load(file: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig> {
        let mut doc = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let user: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            // Validate the file on its own so unknown keys are reported against it.
            let _: RunConfig = serde_json::from_value(user.clone()).context("invalid configuration file")?;
            merge(&mut doc, user);
        }
        for (k, v) in overrides {
            set_path(&mut doc, k, v.clone())?;
        }
        if let Ok(dir) = std::env::var(OUTPUT_ENV) {
            if !dir.is_empty() {
                set_path(&mut doc, "output-dir", Value::String(dir))?;
            }
        }
        let cfg: RunConfig = serde_json::from_value(doc).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(3..=5).contains(&self.dimension) {
            bail!("dimension must be 3, 4 or 5");
        }
        if self.tower.k == 0 {
            bail!("tower.k must be positive");
        }
        if !(self.domain.delta >= 0.0 && self.domain.delta < 1.0) {
            bail!("domain.delta must lie in [0, 1)");
        }
        if self.domain.grid < 8 || self.greens.grid < 8 || self.assemble.grid < 8 {
            bail!("grids need at least 8 nodes per axis");
        }
        if self.epsilon_sequence.iter().any(|e| !(*e > 0.0)) {
            bail!("epsilon-sequence entries must be positive");
        }
        if self.lambda_sequence.iter().any(|e| !(*e > 0.0)) {
            bail!("lambda-sequence entries must be positive");
        }
        if !(self.search.sigma > self.search.delta && self.search.sigma < 1.0) {
            bail!("search.sigma must lie between search.delta and 1");
        }
        if self.workers == Some(0) {
            bail!("workers must be positive");
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_and_dotted_paths() {
        let args: Vec<String> = ["--n", "4", "--search.seeds=3", "--domain.kind", "ball"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let o = parse_overrides(&args).unwrap();
        let c = RunConfig::load(None, &o).unwrap();
        assert_eq!(c.dimension, 4);
        assert_eq!(c.search.seeds, 3);
        assert_eq!(c.domain.kind, DomainChoice::Ball);
    }

    #[test]
    fn unknown_keys_rejected() {
        let o = vec![("search.bogus".to_string(), Value::from(1))];
        assert!(RunConfig::load(None, &o).is_err());
    }
}
