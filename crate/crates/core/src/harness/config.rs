use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ConverterConfig, FiberLink, ShutterSchedule};
use crate::detection::{HistogramSpec, SpdConfig};
use crate::error::{Error, Result};
use crate::lockchain::LockConfig;
use crate::memory::{AfcConfig, AfcMemory, InhomogeneousProfile, ModePlan};
use crate::source::SourceConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    #[serde(default)]
    pub inhomogeneous: InhomogeneousProfile,
    pub afc: AfcConfig,
    #[serde(default = "default_slow_light")]
    pub slow_light_delay_s: f64,
}

fn default_slow_light() -> f64 {
    150e-9
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detectors {
    #[serde(default)]
    pub herald: SpdConfig,
    #[serde(default)]
    pub signal: SpdConfig,
}

/// Frequency-matching model between the 606 nm photons and the AFC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum LockMode {
    /// Perfect matching: zero residual.
    Ideal,
    /// Closed-loop laser network; the simulated residual plus a constant
    /// bias shifts every signal photon before the memory.
    Simulated {
        #[serde(default)]
        config: LockConfig,
        #[serde(default)]
        residual_bias_hz: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Simulated event time, seconds.
    pub duration_s: f64,
    pub source: SourceConfig,
    pub link: FiberLink,
    #[serde(default)]
    pub converter: ConverterConfig,
    /// Probability that a converted photon leaves the splitter on the herald port.
    #[serde(default = "default_split")]
    pub herald_split: f64,
    pub shutter: ShutterSchedule,
    pub memory: MemoryConfig,
    #[serde(default)]
    pub detectors: Detectors,
    pub histogram: HistogramSpec,
    #[serde(default = "default_smoothing")]
    pub smoothing_bins: usize,
    pub lock: LockMode,
}

fn default_split() -> f64 {
    0.5
}

fn default_smoothing() -> usize {
    10
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("name", "must not be empty"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::invalid("duration_s", "must be positive"));
        }
        self.source.validate("source")?;
        self.link.validate("link")?;
        self.converter.validate("converter")?;
        if !(0.0..=1.0).contains(&self.herald_split) {
            return Err(Error::invalid("herald_split", "must lie in [0, 1]"));
        }
        self.shutter.validate("shutter")?;
        self.memory.inhomogeneous.validate("memory.inhomogeneous")?;
        self.memory.afc.validate("memory.afc")?;
        if !(self.memory.slow_light_delay_s >= 0.0 && self.memory.slow_light_delay_s.is_finite()) {
            return Err(Error::invalid("memory.slow_light_delay_s", "must be >= 0"));
        }
        self.detectors.herald.validate("detectors.herald")?;
        self.detectors.signal.validate("detectors.signal")?;
        self.histogram.validate("histogram")?;
        if self.smoothing_bins == 0 {
            return Err(Error::invalid("smoothing_bins", "must be at least 1"));
        }
        if let LockMode::Simulated { config, residual_bias_hz } = &self.lock {
            config.validate("lock.config")?;
            if !residual_bias_hz.is_finite() {
                return Err(Error::invalid("lock.residual_bias_hz", "must be finite"));
            }
        }
        self.build_memory()?;
        Ok(())
    }

    /// Prepared memory, resolving `match_source` against the pair source's modes.
    pub fn build_memory(&self) -> Result<AfcMemory> {
        let modes = match &self.memory.afc.modes {
            ModePlan::MatchSource => self.source.mode_offsets()?,
            plan => plan.resolve()?,
        };
        AfcMemory::new(self.memory.inhomogeneous, self.memory.afc.clone(), modes)
    }
}
