//! Two-photon comb pair source.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::spectral::{tpc_mode_offsets, FrequencyOffset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Pair creation rate summed over every active mode, pairs/s.
    pub total_pair_rate: f64,
    pub n_modes: usize,
    #[serde(default = "default_fsr")]
    pub fsr_hz: f64,
    #[serde(default = "default_linewidth")]
    pub linewidth_hz: f64,
    /// Relative mode populations, ascending in frequency; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_weights: Option<Vec<f64>>,
}

fn default_fsr() -> f64 {
    117.2e6
}

fn default_linewidth() -> f64 {
    7.1e6
}

impl SourceConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.total_pair_rate >= 0.0) || !self.total_pair_rate.is_finite() {
            return Err(Error::invalid(format!("{prefix}.total_pair_rate"), "must be finite and >= 0"));
        }
        if self.n_modes == 0 {
            return Err(Error::invalid(format!("{prefix}.n_modes"), "must be at least 1"));
        }
        if self.n_modes % 2 == 0 {
            return Err(Error::invalid(format!("{prefix}.n_modes"), "must be odd"));
        }
        if !(self.fsr_hz > 0.0) {
            return Err(Error::invalid(format!("{prefix}.fsr_hz"), "must be positive"));
        }
        if !(self.linewidth_hz > 0.0) {
            return Err(Error::invalid(format!("{prefix}.linewidth_hz"), "must be positive"));
        }
        if let Some(w) = &self.mode_weights {
            if w.len() != self.n_modes {
                return Err(Error::invalid(
                    format!("{prefix}.mode_weights"),
                    format!("expected {} weights, got {}", self.n_modes, w.len()),
                ));
            }
            if w.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::invalid(format!("{prefix}.mode_weights"), "weights must be >= 0"));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!("{prefix}.mode_weights"), "weights must sum to 1"));
            }
        }
        Ok(())
    }

    pub fn mode_offsets(&self) -> Result<Vec<FrequencyOffset>> {
        tpc_mode_offsets(self.n_modes, self.fsr_hz)
    }

    /// Pair correlation time `1 / (2 pi linewidth)`.
    pub fn correlation_time(&self) -> f64 {
        correlation_time(self.linewidth_hz)
    }
}

pub fn correlation_time(linewidth_hz: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * linewidth_hz)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Herald,
    Signal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Pair,
    ConversionNoise,
    DarkCount,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonEvent {
    pub time: f64,
    pub mode_offset: FrequencyOffset,
    pub arm: Arm,
    pub origin: Origin,
    pub pair_id: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonPair {
    pub herald: PhotonEvent,
    pub signal: PhotonEvent,
}

/// Pair creation events on `[t0, t1)`: a Poisson process of rate
/// `total_pair_rate`, each pair tagged with one comb mode. Returned as a
/// time-sorted list, herald before signal within each pair.
pub fn sample_pairs(cfg: &SourceConfig, t0: f64, t1: f64, rng: &mut SimRng) -> Result<Vec<PhotonEvent>> {
    if !(t1 > t0) {
        return Err(Error::invalid("window", "t1 must exceed t0"));
    }
    cfg.validate("source")?;
    let mut out = Vec::new();
    if cfg.total_pair_rate == 0.0 {
        return Ok(out);
    }
    let modes = cfg.mode_offsets()?;
    let weighted = match &cfg.mode_weights {
        Some(w) => Some(WeightedIndex::new(w).map_err(|e| Error::invalid("source.mode_weights", e.to_string()))?),
        None => None,
    };
    let inv_rate = 1.0 / cfg.total_pair_rate;
    let mut t = t0;
    let mut id = 0u64;
    loop {
        let gap: f64 = rng.sample(Exp1);
        t += gap * inv_rate;
        if t >= t1 {
            break;
        }
        let m = match &weighted {
            Some(w) => w.sample(rng),
            None if modes.len() == 1 => 0,
            None => rng.gen_range(0..modes.len()),
        };
        let base = PhotonEvent {
            time: t,
            mode_offset: modes[m],
            arm: Arm::Herald,
            origin: Origin::Pair,
            pair_id: Some(id),
        };
        out.push(base);
        out.push(PhotonEvent { arm: Arm::Signal, ..base });
        id += 1;
    }
    Ok(out)
}

/// Group a [`sample_pairs`] list back into pairs.
pub fn into_pairs(events: &[PhotonEvent]) -> Vec<PhotonPair> {
    events
        .chunks_exact(2)
        .map(|c| PhotonPair {
            herald: c[0],
            signal: c[1],
        })
        .collect()
}

/// Offset the signal arm by a double-exponential draw with decay constant
/// `tau_c = 1 / (2 pi linewidth)`; the herald is untouched.
pub fn apply_pair_correlation(pair: PhotonPair, linewidth_hz: f64, rng: &mut SimRng) -> PhotonPair {
    let tau_c = correlation_time(linewidth_hz);
    let mag: f64 = rng.sample(Exp1);
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let mut out = pair;
    out.signal.time += sign * mag * tau_c;
    out
}
