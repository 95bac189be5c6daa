//! JSON run configuration: contrast/weights/level for tests, plus an
//! optional `simulate` section with the full experiment description.

use std::path::Path;

use serde::Deserialize;

use hdglht::montecarlo::{ContrastSpec, CovSpec, WeightSource};
use hdglht::{DistributionModel, ExponentMode, MeanAlternative, SimulationConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub contrast: Option<ContrastSpec>,
    #[serde(default)]
    pub exponent_mode: ExponentMode,
    #[serde(default)]
    pub level: Option<f64>,
    #[serde(default)]
    pub weights: Option<WeightSource>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Calibration,
    SizeTable,
    PowerCurve,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default)]
    pub mode: SimMode,
    pub p: usize,
    pub n_sizes: Vec<usize>,
    pub cov: CovSpec,
    pub dist: DistributionModel,
    #[serde(default)]
    pub alternative: Option<MeanAlternative>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Also write per-replicate records to replicates.csv (calibration mode).
    #[serde(default)]
    pub persist_replicates: bool,
    /// size_table: dimensions to sweep (defaults to [p]).
    #[serde(default)]
    pub p_grid: Option<Vec<usize>>,
    /// size_table: innovation models to sweep (defaults to [dist]).
    #[serde(default)]
    pub dists: Option<Vec<DistributionModel>>,
    /// size_table: covariance settings to sweep (defaults to [cov]).
    #[serde(default)]
    pub covs: Option<Vec<CovSpec>>,
    /// power_curve: signal strengths (defaults to 0.03/0.06/0.09/0.12).
    #[serde(default)]
    pub r_values: Option<Vec<f64>>,
    /// power_curve: sparsity exponents (defaults to 0.10/0.15/0.20/0.25).
    #[serde(default)]
    pub t_values: Option<Vec<f64>>,
}

/// Flag overrides applied on top of the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub level: Option<f64>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::user(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfigFile = serde_json::from_str(&text)
            .map_err(|e| CliError::user(format!("config {}: {e}", path.display())))?;
        if let Some(level) = config.level {
            if !(level > 0.0 && level < 1.0) {
                return Err(CliError::user(format!(
                    "config {}: level must lie in (0, 1), got {level}",
                    path.display()
                )));
            }
        }
        Ok(config)
    }

    pub fn level_or_default(&self, flag: Option<f64>) -> CliResult<f64> {
        let level = flag.or(self.level).unwrap_or(0.05);
        if !(level > 0.0 && level < 1.0) {
            return Err(CliError::user(format!(
                "level must lie in (0, 1), got {level}"
            )));
        }
        Ok(level)
    }

    pub fn contrast_spec(&self) -> ContrastSpec {
        self.contrast.clone().unwrap_or(ContrastSpec::Manova)
    }

    pub fn weight_source(&self) -> WeightSource {
        self.weights.clone().unwrap_or(WeightSource::Default)
    }

    pub fn simulate_section(&self) -> CliResult<&SimulateSection> {
        self.simulate
            .as_ref()
            .ok_or_else(|| CliError::user("config has no 'simulate' section"))
    }

    /// Assemble the core simulation configuration, applying flag overrides
    /// and the HDGLHT_THREADS fallback.
    pub fn to_simulation_config(&self, overrides: Overrides) -> CliResult<SimulationConfig> {
        let sim = self.simulate_section()?;
        let threads = overrides
            .threads
            .or(sim.threads)
            .or_else(threads_from_env);
        Ok(SimulationConfig {
            p: sim.p,
            n_sizes: sim.n_sizes.clone(),
            contrast: self.contrast_spec(),
            exponent_mode: self.exponent_mode,
            weights: self.weight_source(),
            cov: sim.cov.clone(),
            dist: sim.dist,
            alternative: sim.alternative,
            replicates: sim.replicates,
            level: self.level_or_default(overrides.level)?,
            seed: overrides.seed.unwrap_or(sim.seed),
            threads,
        })
    }
}

fn threads_from_env() -> Option<usize> {
    std::env::var("HDGLHT_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
}
