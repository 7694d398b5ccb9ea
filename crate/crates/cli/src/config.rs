use std::path::{Path, PathBuf};

use anyhow::Context;
use gaitvision::geometry::{Calibration, FixtureConfig};
use gaitvision::ident::TrainConfig;
use gaitvision::marker::RenderParams;
use gaitvision::pipeline::rig_for;
use gaitvision::simulator::{NoiseModel, WalkerConfig};
use gaitvision::spatial_stats::RigConfig;
use gaitvision::temporal::TemporalConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub steps: usize,
    pub k: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self { steps: 120, k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub total_steps: usize,
    pub cycle_steps: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            total_steps: 14_000,
            cycle_steps: 70,
        }
    }
}

/// Everything the subcommands read from the config file. Every section is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Calibration JSON; the reference rig when absent.
    pub calibration: Option<PathBuf>,
    pub walker: WalkerConfig,
    pub noise: NoiseModel,
    pub temporal: TemporalConfig,
    /// Mounting constants; derived from the walker and calibration when absent.
    pub rig: Option<RigConfig>,
    pub drift: DriftConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub marker: RenderParams,
    pub fixture: FixtureConfig,
}

impl CliConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: CliConfig = toml::from_str(&text).with_context(|| format!("config {}", path.display()))?;
        // Relative calibration paths are relative to the config file.
        if let (Some(c), Some(dir)) = (&cfg.calibration, path.parent()) {
            if c.is_relative() {
                cfg.calibration = Some(dir.join(c));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn calibration(&self, flag: Option<&Path>) -> anyhow::Result<Calibration> {
        match flag.or(self.calibration.as_deref()) {
            Some(p) => Ok(Calibration::load(p)?),
            None => Ok(Calibration::reference()),
        }
    }

    pub fn rig(&self, calib: &Calibration) -> RigConfig {
        self.rig.clone().unwrap_or_else(|| rig_for(&self.walker, calib))
    }
}
