//! Run configuration: one TOML file with a section per module.
//!
//! ```toml
//! seed = 42
//! log_level = "info"
//!
//! [features]
//! window_sizes = [1024, 2048, 4096]
//!
//! [network]
//! max_epochs = 30
//!
//! [decoder]
//! beats_per_bar = [3, 4]
//!
//! [grid]
//! lambdas = [10.0, 100.0, 1000.0]
//!
//! [selection]
//! delta = 0.07
//!
//! [eval]
//! tolerance_window = 0.07
//! ```
//!
//! Missing keys take their defaults and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::features::FeatureConfig;
use crate::hmm::{DecoderConfig, DecoderGrid};
use crate::io::atomic_write;
use crate::net::TrainConfig;
use crate::selection::OnsetConfig;

pub const DEFAULT_SEED: u64 = 42;

/// Decoder search space; the remaining decoder fields come from `[decoder]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub lambdas: Vec<f64>,
    pub observation_weights: Vec<f64>,
    pub tempo_ranges: Vec<(f64, f64)>,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = DecoderGrid::default();
        Self {
            lambdas: g.lambdas,
            observation_weights: g.observation_weights,
            tempo_ranges: g.tempo_ranges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds training, shuffling and corpus splits.
    pub seed: u64,
    pub log_level: String,
    pub features: FeatureConfig,
    pub network: TrainConfig,
    pub decoder: DecoderConfig,
    pub grid: GridSection,
    pub selection: OnsetConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            log_level: "info".into(),
            features: FeatureConfig::default(),
            network: TrainConfig {
                seed: DEFAULT_SEED,
                ..Default::default()
            },
            decoder: DecoderConfig::default(),
            grid: GridSection::default(),
            selection: OnsetConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.network.seed = c.seed;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Defaults when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.network.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.network.validate()?;
        self.decoder.validate()?;
        self.selection.validate()?;
        self.eval.validate()?;
        if (self.decoder.frame_rate - self.features.frame_rate as f64).abs() > 1e-9 {
            return Err(Error::Config("decoder.frame_rate must equal features.frame_rate".into()));
        }
        Ok(())
    }

    pub fn decoder_grid(&self) -> DecoderGrid {
        DecoderGrid {
            base: self.decoder.clone(),
            lambdas: self.grid.lambdas.clone(),
            observation_weights: self.grid.observation_weights.clone(),
            tempo_ranges: self.grid.tempo_ranges.clone(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes the resolved configuration next to `output` as
    /// `<output>.config.toml` and returns that path.
    pub fn write_sidecar(&self, output: &Path) -> Result<PathBuf> {
        let path = sidecar_path(output);
        atomic_write(&path, self.to_toml()?.as_bytes())?;
        Ok(path)
    }
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.toml");
    output.with_file_name(name)
}
