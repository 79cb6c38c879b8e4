//! Experiment configuration: a single TOML document with strict keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cocycle::LambdaTable;
use crate::error::{Error, Result};

/// Multiplier table source: inline values or a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, untagged)]
pub enum TableSpec {
    Inline { depth: u32, values: Vec<f64> },
    File { file: PathBuf },
}

impl TableSpec {
    pub fn load(&self, base_dir: &Path) -> Result<LambdaTable> {
        match self {
            TableSpec::Inline { depth, values } => LambdaTable::new(*depth, values.clone()),
            TableSpec::File { file } => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    base_dir.join(file)
                };
                let text = std::fs::read_to_string(&path)?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("table file {}: {e}", path.display())))
            }
        }
    }
}

/// The scaling exponent: an explicit value or "auto" (fit a rate model
/// and take `gamma_min * margin`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Auto(AutoTag),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

/// Rate-model knobs used when `gamma = "auto"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    /// Deviation grid upper end; defaults to `|a| / 2`.
    pub eps_max: Option<f64>,
    pub grid_points: usize,
    pub j_min: usize,
    /// Compress deeper tables to this depth for the deviation analysis.
    pub tilde_depth: Option<u32>,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            eps_max: None,
            grid_points: 64,
            j_min: 10,
            tilde_depth: None,
        }
    }
}

fn default_margin() -> f64 {
    1.1
}

fn default_workers() -> usize {
    0 // 0 = all available
}

fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

fn default_step_budget() -> u128 {
    1 << 33
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// The experiment document. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub table: TableSpec,
    pub epsilon: f64,
    pub gamma: GammaSpec,
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub n_grid: Vec<usize>,
    pub trials: u64,
    pub master_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    /// Where `rate` writes the fitted model and where `sweep` looks for
    /// a precomputed one.
    #[serde(default)]
    pub rate_model: Option<PathBuf>,
    #[serde(default)]
    pub rate: RateConfig,
    /// Upper bound on total trajectory steps per sweep row.
    #[serde(default = "default_step_budget")]
    pub step_budget: u128,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        cfg.validate()?;
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon {} outside (0, 1]",
                self.epsilon
            )));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        if self.n_grid.iter().any(|&n| n < 2) {
            return Err(Error::Config("every N in n_grid must be >= 2".into()));
        }
        if self.trials < 100 {
            return Err(Error::Config(format!(
                "trials {} below the minimum of 100",
                self.trials
            )));
        }
        if let GammaSpec::Fixed(g) = self.gamma {
            if !(g > 1.0) {
                return Err(Error::Config(format!("explicit gamma {g} must exceed 1")));
            }
        }
        if !(self.margin >= 1.0) {
            return Err(Error::Config(format!(
                "margin {} must be at least 1",
                self.margin
            )));
        }
        Ok(())
    }

    /// Checks `d = epsilon / N^gamma` against the generator precondition
    /// for every grid point, up front.
    pub fn validate_grid_against(&self, table: &LambdaTable, gamma: f64) -> Result<()> {
        let bound = f64::powi(2.0, -(table.depth() as i32 + 1));
        for &n in &self.n_grid {
            let d = self.epsilon / (n as f64).powf(gamma);
            if !(d > 0.0 && d < 1.0 && d < bound) {
                return Err(Error::Config(format!(
                    "derived d = {d} at N = {n} violates 0 < d < min(1, 2^-(t+1)) = {bound}"
                )));
            }
            let steps = n as u128 * self.trials as u128;
            if steps > self.step_budget {
                return Err(Error::ResourceLimit {
                    steps,
                    budget: self.step_budget,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
epsilon = 0.1
gamma = "auto"
n_grid = [100, 316]
trials = 200
master_seed = 7

[table]
depth = 0
values = [2.0, 0.3333333333333333]
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg: ExperimentConfig = toml::from_str(BASE).unwrap();
        cfg.validate().unwrap();
        assert!(matches!(cfg.gamma, GammaSpec::Auto(_)));
        assert_eq!(cfg.margin, 1.1);
        assert_eq!(cfg.format, OutputFormat::Csv);
        let table = cfg.table.load(Path::new(".")).unwrap();
        assert_eq!(table.depth(), 0);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{BASE}\nbogus_key = 1\n");
        assert!(toml::from_str::<ExperimentConfig>(&text).is_err());
    }

    #[test]
    fn explicit_gamma_parses_and_validates() {
        let text = BASE.replace("\"auto\"", "5.5");
        let cfg: ExperimentConfig = toml::from_str(&text).unwrap();
        cfg.validate().unwrap();
        match cfg.gamma {
            GammaSpec::Fixed(g) => assert_eq!(g, 5.5),
            _ => panic!("expected fixed gamma"),
        }
        let bad = BASE.replace("\"auto\"", "0.9");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn validates_derived_d() {
        let cfg: ExperimentConfig = toml::from_str(BASE).unwrap();
        let table = cfg.table.load(Path::new(".")).unwrap();
        cfg.validate_grid_against(&table, 3.0).unwrap();
        // gamma so small that d is not below the resolution bound
        let mut wide = cfg.clone();
        wide.epsilon = 1.0;
        // N = 100, gamma tiny: d = 1.0 / 100^0.01... still < 0.5? use a
        // direct violation: epsilon = 1, gamma != auto irrelevant here
        assert!(wide.validate_grid_against(&table, 0.001).is_err());
    }

    #[test]
    fn step_budget_enforced() {
        let mut cfg: ExperimentConfig = toml::from_str(BASE).unwrap();
        cfg.step_budget = 10;
        let table = cfg.table.load(Path::new(".")).unwrap();
        assert!(matches!(
            cfg.validate_grid_against(&table, 3.0),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn table_file_reference_loads() {
        let dir = tempfile::tempdir().unwrap();
        let table_path = dir.path().join("table.json");
        let table = LambdaTable::contracting_example();
        std::fs::write(&table_path, serde_json::to_string(&table).unwrap()).unwrap();
        let text = "epsilon = 0.1\ngamma = 2.0\nn_grid = [10]\ntrials = 100\nmaster_seed = 1\n\n[table]\nfile = \"table.json\"\n";
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        let loaded = cfg.table.load(dir.path()).unwrap();
        assert_eq!(loaded, table);
    }
}
