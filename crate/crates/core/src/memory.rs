//! Frequency-multiplexed atomic-frequency-comb memory in an inhomogeneously
//! broadened crystal.
//!
//! Preparation empties a pit around each mode and burns back a comb of
//! Gaussian teeth inside it. A photon matched to a prepared mode is re-emitted
//! after `1/Δ` with the forward-retrieval efficiency, otherwise it leaks
//! through the pit, is absorbed, or (outside the inhomogeneous line) passes
//! untouched.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::source::PhotonEvent;
use crate::spectral::{eom_sideband_offsets, gaussian_window, merge_offsets, tpc_mode_offsets, FrequencyOffset, SpectralGrid};

/// Minimum spectral samples per tooth period for [`afc_efficiency_oracle`].
pub const ORACLE_STEPS_PER_PERIOD: f64 = 32.0;

/// `sqrt(pi / (4 ln 2))`: area of a unit-height Gaussian over its FWHM.
const GAUSSIAN_AREA_FACTOR: f64 = 1.064_467_019_431_226_7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InhomogeneousProfile {
    #[serde(default = "default_inh_fwhm")]
    pub fwhm_hz: f64,
    #[serde(default = "default_inh_depth")]
    pub peak_optical_depth: f64,
}

fn default_inh_fwhm() -> f64 {
    10e9
}

fn default_inh_depth() -> f64 {
    6.0
}

impl Default for InhomogeneousProfile {
    fn default() -> Self {
        InhomogeneousProfile {
            fwhm_hz: default_inh_fwhm(),
            peak_optical_depth: default_inh_depth(),
        }
    }
}

impl InhomogeneousProfile {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.fwhm_hz > 0.0) {
            return Err(Error::invalid(format!("{prefix}.fwhm_hz"), "must be positive"));
        }
        if !(self.peak_optical_depth >= 0.0) {
            return Err(Error::invalid(format!("{prefix}.peak_optical_depth"), "must be >= 0"));
        }
        Ok(())
    }

    pub fn depth(&self, f: f64) -> f64 {
        self.peak_optical_depth * gaussian_window(f, self.fwhm_hz)
    }

    /// In/out-of-band split: `|f| <= FWHM` counts as inside the line.
    pub fn in_band(&self, f: f64) -> bool {
        f.abs() <= self.fwhm_hz
    }
}

/// Where the AFC copies are placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ModePlan {
    /// Sidebands of two cascaded EOMs.
    Eom { f1_hz: f64, f2_hz: f64, max_order: u32 },
    /// Symmetric comb of `n_modes` modes spaced by `fsr_hz`.
    Comb { n_modes: usize, fsr_hz: f64 },
    /// Same modes as the pair source; resolved by the scenario.
    MatchSource,
    Explicit { offsets_hz: Vec<f64> },
}

impl ModePlan {
    pub fn resolve(&self) -> Result<Vec<FrequencyOffset>> {
        match self {
            ModePlan::Eom { f1_hz, f2_hz, max_order } => {
                if !(*f1_hz > 0.0 && *f2_hz > 0.0) {
                    return Err(Error::invalid("memory.afc.modes", "EOM drive frequencies must be positive"));
                }
                Ok(eom_sideband_offsets(*f1_hz, *f2_hz, *max_order))
            }
            ModePlan::Comb { n_modes, fsr_hz } => tpc_mode_offsets(*n_modes, *fsr_hz),
            ModePlan::Explicit { offsets_hz } => {
                if offsets_hz.is_empty() {
                    return Err(Error::invalid("memory.afc.modes", "needs at least one offset"));
                }
                Ok(merge_offsets(offsets_hz.clone()))
            }
            ModePlan::MatchSource => Err(Error::invalid(
                "memory.afc.modes",
                "match_source must be resolved against a source config",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AfcConfig {
    #[serde(default = "default_spacing")]
    pub tooth_spacing_hz: f64,
    /// Tooth spacing over tooth FWHM.
    #[serde(default = "default_finesse")]
    pub finesse: f64,
    #[serde(default = "default_tooth_depth")]
    pub tooth_peak_depth: f64,
    #[serde(default = "default_background")]
    pub background_depth: f64,
    #[serde(default = "default_pit")]
    pub pit_halfwidth_hz: f64,
    pub modes: ModePlan,
}

fn default_spacing() -> f64 {
    1.15e6
}

fn default_finesse() -> f64 {
    4.0
}

fn default_tooth_depth() -> f64 {
    2.0
}

fn default_background() -> f64 {
    0.2
}

fn default_pit() -> f64 {
    9e6
}

impl AfcConfig {
    pub fn with_modes(modes: ModePlan) -> Self {
        AfcConfig {
            tooth_spacing_hz: default_spacing(),
            finesse: default_finesse(),
            tooth_peak_depth: default_tooth_depth(),
            background_depth: default_background(),
            pit_halfwidth_hz: default_pit(),
            modes,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.tooth_spacing_hz > 0.0) {
            return Err(Error::invalid(format!("{prefix}.tooth_spacing_hz"), "must be positive"));
        }
        if !(self.finesse > 1.0) {
            return Err(Error::invalid(format!("{prefix}.finesse"), "must exceed 1"));
        }
        if !(self.tooth_peak_depth >= 0.0) {
            return Err(Error::invalid(format!("{prefix}.tooth_peak_depth"), "must be >= 0"));
        }
        if !(self.background_depth >= 0.0) {
            return Err(Error::invalid(format!("{prefix}.background_depth"), "must be >= 0"));
        }
        if !(self.pit_halfwidth_hz >= 2.0 * self.tooth_spacing_hz) {
            return Err(Error::invalid(
                format!("{prefix}.pit_halfwidth_hz"),
                "must span at least two tooth spacings",
            ));
        }
        Ok(())
    }

    pub fn tooth_fwhm(&self) -> f64 {
        self.tooth_spacing_hz / self.finesse
    }

    /// Storage time `1/Δ`.
    pub fn storage_time(&self) -> f64 {
        1.0 / self.tooth_spacing_hz
    }

    /// Largest tooth index `k` with `|k Δ| <= pit_halfwidth`.
    pub fn max_tooth_index(&self) -> i64 {
        (self.pit_halfwidth_hz / self.tooth_spacing_hz * (1.0 + 1e-12)).floor() as i64
    }
}

/// Forward-retrieval echo efficiency of a Gaussian-tooth comb with peak depth
/// `d`, finesse `f` and background depth `d0`:
///
/// `η = d̃² exp(-d̃) exp(-π²/(2 ln2 F²)) exp(-d0)`, `d̃ = sqrt(π/(4 ln2)) d/F`
///
/// where `d̃` is the comb's period-averaged depth. Maximal at `d̃ = 2`, where
/// it tends to `4 e⁻²` for high finesse.
pub fn afc_efficiency(d: f64, finesse: f64, d0: f64) -> f64 {
    if !(d > 0.0) || !(finesse > 0.0) {
        return 0.0;
    }
    let mean_depth = GAUSSIAN_AREA_FACTOR * d / finesse;
    let dephasing = (-PI * PI / (2.0 * LN_2 * finesse * finesse)).exp();
    let eta = mean_depth * mean_depth * (-mean_depth).exp() * dephasing * (-d0).exp();
    if eta.is_finite() {
        eta.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Tooth depth that maximizes [`afc_efficiency`] at fixed finesse.
pub fn optimal_tooth_depth(finesse: f64) -> f64 {
    2.0 * finesse / GAUSSIAN_AREA_FACTOR
}

/// Optical depth sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsorptionSpectrum {
    pub grid: SpectralGrid,
    pub optical_depth: Vec<f64>,
}

impl AbsorptionSpectrum {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "offset_hz,optical_depth")?;
        for (f, d) in self.grid.frequencies().zip(&self.optical_depth) {
            writeln!(w, "{f},{d}")?;
        }
        Ok(())
    }

    /// Linear interpolation; `None` outside the grid.
    pub fn depth_at(&self, f: f64) -> Option<f64> {
        let x = (f - self.grid.f_min_hz) / self.grid.step_hz;
        if x < 0.0 || x > (self.optical_depth.len() - 1) as f64 {
            return None;
        }
        let i = x.floor() as usize;
        if i + 1 >= self.optical_depth.len() {
            return Some(self.optical_depth[i]);
        }
        let w = x - i as f64;
        Some(self.optical_depth[i] * (1.0 - w) + self.optical_depth[i + 1] * w)
    }
}

/// A prepared memory: profile, comb parameters and resolved mode list.
#[derive(Clone, Debug, PartialEq)]
pub struct AfcMemory {
    pub inhomogeneous: InhomogeneousProfile,
    pub afc: AfcConfig,
    modes: Vec<FrequencyOffset>,
    efficiency: f64,
    pit_transmission: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Echo,
    PromptTransmit,
    OutOfBandTransmit,
    Lost,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StorageOutcome {
    pub kind: OutcomeKind,
    pub exit_time: f64,
}

/// Outcome probabilities for a photon at a given offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeProbabilities {
    pub echo: f64,
    pub prompt: f64,
    pub out_of_band: f64,
    pub lost: f64,
}

impl AfcMemory {
    pub fn new(inhomogeneous: InhomogeneousProfile, afc: AfcConfig, modes: Vec<FrequencyOffset>) -> Result<Self> {
        inhomogeneous.validate("memory.inhomogeneous")?;
        afc.validate("memory.afc")?;
        if modes.is_empty() {
            return Err(Error::invalid("memory.afc.modes", "no modes"));
        }
        let mut modes = modes;
        modes.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in modes.windows(2) {
            if w[1].0 - w[0].0 < 2.0 * afc.pit_halfwidth_hz {
                return Err(Error::OverlappingPits { a_hz: w[0].0, b_hz: w[1].0 });
            }
        }
        let efficiency = afc_efficiency(afc.tooth_peak_depth, afc.finesse, afc.background_depth);
        let mean_depth = GAUSSIAN_AREA_FACTOR * afc.tooth_peak_depth / afc.finesse + afc.background_depth;
        Ok(AfcMemory {
            inhomogeneous,
            afc,
            modes,
            efficiency,
            pit_transmission: (-mean_depth).exp(),
        })
    }

    /// Build from a config whose mode plan resolves on its own.
    pub fn from_config(inhomogeneous: InhomogeneousProfile, afc: AfcConfig) -> Result<Self> {
        let modes = afc.modes.resolve()?;
        Self::new(inhomogeneous, afc, modes)
    }

    pub fn modes(&self) -> &[FrequencyOffset] {
        &self.modes
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// Intensity transmission through a prepared pit, `exp(-mean depth)`.
    pub fn pit_transmission(&self) -> f64 {
        self.pit_transmission
    }

    fn nearest_mode(&self, f: f64) -> FrequencyOffset {
        let i = self.modes.partition_point(|m| m.0 < f);
        match (i.checked_sub(1).map(|j| self.modes[j]), self.modes.get(i).copied()) {
            (Some(a), Some(b)) => {
                if f - a.0 <= b.0 - f {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("modes is never empty"),
        }
    }

    /// Mode whose pit contains `f`, if any.
    pub fn pit_mode(&self, f: f64) -> Option<FrequencyOffset> {
        let m = self.nearest_mode(f);
        ((f - m.0).abs() <= self.afc.pit_halfwidth_hz).then_some(m)
    }

    /// Optical depth of the prepared crystal at `f`.
    pub fn depth_at(&self, f: f64) -> f64 {
        let Some(m) = self.pit_mode(f) else {
            return self.inhomogeneous.depth(f);
        };
        let spacing = self.afc.tooth_spacing_hz;
        let width = self.afc.tooth_fwhm();
        let kmax = self.afc.max_tooth_index();
        let x = f - m.0;
        let reach = (6.0 * width / spacing).ceil() as i64 + 1;
        let centre = (x / spacing).round() as i64;
        let lo = (centre - reach).max(-kmax);
        let hi = (centre + reach).min(kmax);
        let mut d = self.afc.background_depth;
        for k in lo..=hi {
            d += self.afc.tooth_peak_depth * gaussian_window(x - k as f64 * spacing, width);
        }
        d
    }

    /// Probability that a photon carrier at `f` is matched to the comb of
    /// its pit: unity on the mode's reference frequency, falling off over one
    /// tooth width.
    pub fn mode_match(&self, f: f64) -> f64 {
        match self.pit_mode(f) {
            Some(m) => gaussian_window(f - m.0, self.afc.tooth_fwhm()),
            None => 0.0,
        }
    }

    pub fn outcome_probabilities(&self, f: f64) -> OutcomeProbabilities {
        if !self.inhomogeneous.in_band(f) {
            return OutcomeProbabilities {
                echo: 0.0,
                prompt: 0.0,
                out_of_band: 1.0,
                lost: 0.0,
            };
        }
        let (echo, prompt) = if self.pit_mode(f).is_some() {
            let echo = self.efficiency * self.mode_match(f);
            (echo, self.pit_transmission.min(1.0 - echo))
        } else {
            (0.0, (-self.inhomogeneous.depth(f)).exp())
        };
        OutcomeProbabilities {
            echo,
            prompt,
            out_of_band: 0.0,
            lost: (1.0 - echo - prompt).max(0.0),
        }
    }
}

/// Sample the sampled-spectrum view of a prepared memory.
pub fn prepare_afc(inh: &InhomogeneousProfile, cfg: &AfcConfig, grid: SpectralGrid) -> Result<AbsorptionSpectrum> {
    let memory = AfcMemory::from_config(*inh, cfg.clone())?;
    prepare_spectrum(&memory, grid)
}

pub fn prepare_spectrum(memory: &AfcMemory, grid: SpectralGrid) -> Result<AbsorptionSpectrum> {
    let limit = memory.afc.tooth_spacing_hz / (4.0 * memory.afc.finesse);
    if grid.step_hz > limit * (1.0 + 1e-9) {
        return Err(Error::GridTooCoarse {
            step_hz: grid.step_hz,
            limit_hz: limit,
        });
    }
    let optical_depth = grid.frequencies().map(|f| memory.depth_at(f)).collect();
    Ok(AbsorptionSpectrum { grid, optical_depth })
}

/// Decide what happens to a converted signal photon entering the memory.
pub fn store_retrieve(
    event: &PhotonEvent,
    memory: &AfcMemory,
    slow_light_delay: f64,
    rng: &mut SimRng,
) -> StorageOutcome {
    let p = memory.outcome_probabilities(event.mode_offset.0);
    let t = event.time;
    if p.out_of_band >= 1.0 {
        return StorageOutcome {
            kind: OutcomeKind::OutOfBandTransmit,
            exit_time: t,
        };
    }
    let u: f64 = rng.gen();
    if u < p.echo {
        StorageOutcome {
            kind: OutcomeKind::Echo,
            exit_time: t + slow_light_delay + memory.afc.storage_time(),
        }
    } else if u < p.echo + p.prompt {
        StorageOutcome {
            kind: OutcomeKind::PromptTransmit,
            exit_time: t + slow_light_delay,
        }
    } else {
        StorageOutcome {
            kind: OutcomeKind::Lost,
            exit_time: t,
        }
    }
}

/// Echo energy fraction computed numerically from a sampled spectrum.
///
/// A weak Gaussian pulse centred on `mode` is multiplied in the frequency
/// domain by the causal (minimum-phase) field transfer function whose
/// magnitude is `exp(-depth/2)`; the dispersive phase is recovered from the
/// depth through the folded real cepstrum. The output energy between
/// `3/(4Δ)` and `5/(4Δ)` over the input energy is returned. The grid needs
/// at least [`ORACLE_STEPS_PER_PERIOD`] samples per tooth period.
pub fn afc_efficiency_oracle(spectrum: &AbsorptionSpectrum, mode: FrequencyOffset, spacing_hz: f64) -> Result<f64> {
    let step = spectrum.grid.step_hz;
    let limit = spacing_hz / ORACLE_STEPS_PER_PERIOD * (1.0 + 1e-9);
    if step > limit {
        return Err(Error::GridTooCoarse {
            step_hz: step,
            limit_hz: limit,
        });
    }
    // pulse bandwidth (intensity FWHM) well above Δ and well inside the pit
    let bandwidth = 2.5 * spacing_hz;
    let half_span = 8.0 * bandwidth;
    let lo = mode.0 - half_span;
    let hi = mode.0 + half_span;
    let first = ((lo - spectrum.grid.f_min_hz) / step).ceil();
    let last = ((hi - spectrum.grid.f_min_hz) / step).floor();
    if first < 0.0 || last as usize >= spectrum.optical_depth.len() {
        return Err(Error::SpectrumCoverage { lo_hz: lo, hi_hz: hi });
    }
    let (first, last) = (first as usize, last as usize);
    let depth = &spectrum.optical_depth[first..=last];
    let n = depth.len();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let scale = 1.0 / n as f64;

    // real cepstrum of the log-magnitude, folded onto non-negative quefrency
    let mut cep: Vec<Complex64> = depth.iter().map(|d| Complex64::new(-0.5 * d, 0.0)).collect();
    inv.process(&mut cep);
    for c in cep.iter_mut() {
        *c *= scale;
    }
    let half = n / 2;
    for (i, c) in cep.iter_mut().enumerate() {
        let keep = if i == 0 || (n % 2 == 0 && i == half) {
            1.0
        } else if i < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *c = Complex64::new(c.re * keep, 0.0);
    }
    fwd.process(&mut cep);

    let mut field: Vec<Complex64> = Vec::with_capacity(n);
    let mut input: Vec<Complex64> = Vec::with_capacity(n);
    for (i, log_h) in cep.iter().enumerate() {
        let f = spectrum.grid.frequency(first + i) - mode.0;
        let a = (-2.0 * LN_2 * (f / bandwidth).powi(2)).exp();
        input.push(Complex64::new(a, 0.0));
        field.push(log_h.exp() * a);
    }
    inv.process(&mut input);
    inv.process(&mut field);

    let e_in: f64 = input.iter().map(|c| c.norm_sqr()).sum();
    let dt = 1.0 / (n as f64 * step);
    let storage = 1.0 / spacing_hz;
    let (w0, w1) = (storage - 0.25 * storage, storage + 0.25 * storage);
    if w1 >= 0.5 * n as f64 * dt {
        return Err(Error::GridTooCoarse {
            step_hz: step,
            limit_hz: spacing_hz / 4.0,
        });
    }
    let e_echo: f64 = field
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let t = *i as f64 * dt;
            t >= w0 && t < w1
        })
        .map(|(_, c)| c.norm_sqr())
        .sum();
    Ok(e_echo / e_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stage};
    use crate::source::{Arm, Origin};

    fn single(d: f64, finesse: f64, d0: f64) -> AfcConfig {
        AfcConfig {
            tooth_spacing_hz: 1.15e6,
            finesse,
            tooth_peak_depth: d,
            background_depth: d0,
            pit_halfwidth_hz: 9e6,
            modes: ModePlan::Explicit { offsets_hz: vec![0.0] },
        }
    }

    fn grid_for(cfg: &AfcConfig, half_span: f64, refine: f64) -> SpectralGrid {
        let step = cfg.tooth_spacing_hz / (4.0 * cfg.finesse) / refine;
        SpectralGrid::new(-half_span, half_span, step).unwrap()
    }

    fn oracle_grid(cfg: &AfcConfig, refine: f64) -> SpectralGrid {
        let step = (cfg.tooth_spacing_hz / ORACLE_STEPS_PER_PERIOD).min(cfg.tooth_spacing_hz / (4.0 * cfg.finesse)) / refine;
        let half_span = 30e6;
        SpectralGrid::new(-half_span, half_span, step).unwrap()
    }

    fn photon(f: f64) -> PhotonEvent {
        PhotonEvent {
            time: 1e-3,
            mode_offset: FrequencyOffset(f),
            arm: Arm::Signal,
            origin: Origin::Pair,
            pair_id: Some(1),
        }
    }

    #[test]
    fn single_mode_has_fifteen_teeth() {
        let cfg = single(2.0, 4.0, 0.0);
        assert_eq!(cfg.max_tooth_index(), 7);
        let s = prepare_afc(&InhomogeneousProfile::default(), &cfg, grid_for(&cfg, 12e6, 1.0)).unwrap();
        // local maxima above half the tooth depth inside the pit
        let peaks: Vec<f64> = (1..s.optical_depth.len() - 1)
            .filter(|&i| {
                let f = s.grid.frequency(i);
                f.abs() < 9e6 && s.optical_depth[i] > 1.0 && s.optical_depth[i] >= s.optical_depth[i - 1] && s.optical_depth[i] > s.optical_depth[i + 1]
            })
            .map(|i| s.grid.frequency(i))
            .collect();
        assert_eq!(peaks.len(), 15);
        for (k, f) in (-7..=7).zip(&peaks) {
            assert!((f - k as f64 * 1.15e6).abs() <= s.grid.step_hz);
        }
    }

    #[test]
    fn zero_tooth_depth_leaves_background() {
        let cfg = single(0.0, 4.0, 0.3);
        let s = prepare_afc(&InhomogeneousProfile::default(), &cfg, grid_for(&cfg, 12e6, 1.0)).unwrap();
        for (f, d) in s.grid.frequencies().zip(&s.optical_depth) {
            if f.abs() <= 9e6 {
                assert!((d - 0.3).abs() < 1e-12);
            } else {
                assert!(*d > 5.0);
            }
        }
    }

    #[test]
    fn twenty_five_disjoint_identical_pits() {
        let cfg = AfcConfig::with_modes(ModePlan::Eom { f1_hz: 117.2e6, f2_hz: 586.0e6, max_order: 2 });
        let m = AfcMemory::from_config(InhomogeneousProfile::default(), cfg.clone()).unwrap();
        assert_eq!(m.modes().len(), 25);
        let reference: Vec<f64> = (-179..=179).map(|i| m.depth_at(i as f64 * 50e3)).collect();
        for mode in m.modes() {
            let here: Vec<f64> = (-179..=179).map(|i| m.depth_at(mode.0 + i as f64 * 50e3)).collect();
            for (a, b) in reference.iter().zip(&here) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        // between pits we see the inhomogeneous line
        assert!(m.depth_at(58.6e6) > 5.0);
    }

    #[test]
    fn overlapping_pits_rejected() {
        let cfg = AfcConfig {
            modes: ModePlan::Explicit { offsets_hz: vec![0.0, 10e6] },
            ..single(2.0, 4.0, 0.0)
        };
        assert!(matches!(
            AfcMemory::from_config(InhomogeneousProfile::default(), cfg),
            Err(Error::OverlappingPits { .. })
        ));
    }

    #[test]
    fn coarse_grid_rejected() {
        let cfg = single(2.0, 4.0, 0.0);
        let g = SpectralGrid::new(-12e6, 12e6, 1e5).unwrap();
        assert!(matches!(prepare_afc(&InhomogeneousProfile::default(), &cfg, g), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn comb_is_periodic_inside_pit() {
        let cfg = single(3.0, 6.0, 0.1);
        let m = AfcMemory::from_config(InhomogeneousProfile::default(), cfg.clone()).unwrap();
        let step = cfg.tooth_spacing_hz / 64.0;
        let xs: Vec<f64> = (-192..192).map(|i| m.depth_at(i as f64 * step)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let ac = |lag: usize| -> f64 {
            (0..xs.len() - lag).map(|i| (xs[i] - mean) * (xs[i + lag] - mean)).sum::<f64>() / (xs.len() - lag) as f64
        };
        let best = (32..=96).max_by(|&a, &b| ac(a).total_cmp(&ac(b))).unwrap();
        assert!(best.abs_diff(64) <= 1, "{best}");
        assert!(xs.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn efficiency_limits() {
        assert_eq!(afc_efficiency(0.0, 4.0, 0.0), 0.0);
        assert!(afc_efficiency(2.0, 4.0, 50.0) < 1e-20);
        assert_eq!(afc_efficiency(2.0, 4.0, f64::INFINITY), 0.0);
        let eta = afc_efficiency(2.0, 4.0, 0.2);
        assert!(eta > 0.05 && eta < 0.15, "{eta}");
    }

    #[test]
    fn efficiency_optimum_by_numeric_search() {
        // golden-section search over d at high finesse
        let finesse = 2000.0;
        let f = |d: f64| afc_efficiency(d, finesse, 0.0);
        let (mut a, mut b) = (0.1, 10.0 * finesse);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let d_star = 0.5 * (a + b);
        assert!((d_star / optimal_tooth_depth(finesse) - 1.0).abs() < 1e-4);
        assert!((f(d_star) - 4.0 * (-2.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn efficiency_unimodal_in_depth() {
        for finesse in [2.0, 4.0, 10.0, 20.0] {
            let d_star = optimal_tooth_depth(finesse);
            let mut prev = 0.0;
            for i in 1..=100 {
                let d = d_star * i as f64 / 100.0;
                let e = afc_efficiency(d, finesse, 0.1);
                assert!(e > prev);
                prev = e;
            }
            for i in 101..400 {
                let d = d_star * i as f64 / 100.0;
                let e = afc_efficiency(d, finesse, 0.1);
                assert!(e < prev);
                prev = e;
            }
        }
    }

    #[test]
    fn oracle_flat_spectrum_has_no_echo() {
        let grid = SpectralGrid::new(-30e6, 30e6, 1.15e6 / 32.0).unwrap();
        let s = AbsorptionSpectrum {
            grid,
            optical_depth: vec![0.0; grid.len()],
        };
        let eta = afc_efficiency_oracle(&s, FrequencyOffset::ZERO, 1.15e6).unwrap();
        assert!(eta < 1e-10, "{eta}");
    }

    #[test]
    fn oracle_agrees_with_formula() {
        for &(d, finesse) in &[(20.0, 10.0), (2.0, 4.0), (1.0, 2.0)] {
            let cfg = single(d, finesse, 0.0);
            let s = prepare_afc(&InhomogeneousProfile::default(), &cfg, oracle_grid(&cfg, 1.0)).unwrap();
            let oracle = afc_efficiency_oracle(&s, FrequencyOffset::ZERO, cfg.tooth_spacing_hz).unwrap();
            let analytic = afc_efficiency(d, finesse, 0.0);
            assert!((oracle / analytic - 1.0).abs() < 0.05, "d={d} F={finesse}: {oracle} vs {analytic}");
        }
    }

    #[test]
    fn oracle_converges_with_grid() {
        let cfg = single(2.0, 4.0, 0.0);
        let coarse = prepare_afc(&InhomogeneousProfile::default(), &cfg, oracle_grid(&cfg, 1.0)).unwrap();
        let fine = prepare_afc(&InhomogeneousProfile::default(), &cfg, oracle_grid(&cfg, 2.0)).unwrap();
        let a = afc_efficiency_oracle(&coarse, FrequencyOffset::ZERO, 1.15e6).unwrap();
        let b = afc_efficiency_oracle(&fine, FrequencyOffset::ZERO, 1.15e6).unwrap();
        assert!((a / b - 1.0).abs() < 0.01, "{a} vs {b}");
    }

    #[test]
    fn oracle_rejects_coarse_or_short_spectrum() {
        let grid = SpectralGrid::new(-30e6, 30e6, 1.15e6 / 16.0).unwrap();
        let s = AbsorptionSpectrum { grid, optical_depth: vec![0.0; grid.len()] };
        assert!(matches!(afc_efficiency_oracle(&s, FrequencyOffset::ZERO, 1.15e6), Err(Error::GridTooCoarse { .. })));
        let grid = SpectralGrid::new(-5e6, 5e6, 1.15e6 / 32.0).unwrap();
        let s = AbsorptionSpectrum { grid, optical_depth: vec![0.0; grid.len()] };
        assert!(matches!(afc_efficiency_oracle(&s, FrequencyOffset::ZERO, 1.15e6), Err(Error::SpectrumCoverage { .. })));
    }

    #[test]
    fn storage_timing_and_out_of_band() {
        let cfg = AfcConfig::with_modes(ModePlan::Eom { f1_hz: 117.2e6, f2_hz: 586.0e6, max_order: 2 });
        assert!((cfg.storage_time() - 869.565e-9).abs() < 1e-12);
        let m = AfcMemory::from_config(InhomogeneousProfile::default(), cfg).unwrap();
        let mut r = substream(1, Stage::Test, 0);
        let out = store_retrieve(&photon(15e9), &m, 150e-9, &mut r);
        assert_eq!(out.kind, OutcomeKind::OutOfBandTransmit);
        assert_eq!(out.exit_time, 1e-3);
        let mut echo = None;
        let mut prompt = None;
        for _ in 0..1000 {
            let o = store_retrieve(&photon(117.2e6), &m, 150e-9, &mut r);
            match o.kind {
                OutcomeKind::Echo => echo = Some(o.exit_time),
                OutcomeKind::PromptTransmit => prompt = Some(o.exit_time),
                _ => {}
            }
        }
        let (e, p) = (echo.unwrap(), prompt.unwrap());
        assert!((p - (1e-3 + 150e-9)).abs() < 1e-18);
        assert!((e - p - 1.0 / 1.15e6).abs() < 1e-15);
    }

    #[test]
    fn echo_fraction_matches_efficiency() {
        let cfg = AfcConfig::with_modes(ModePlan::Comb { n_modes: 5, fsr_hz: 117.2e6 });
        let m = AfcMemory::from_config(InhomogeneousProfile::default(), cfg).unwrap();
        let mut r = substream(2, Stage::Test, 0);
        let n = 100_000;
        let k = (0..n)
            .filter(|_| store_retrieve(&photon(-234.4e6), &m, 150e-9, &mut r).kind == OutcomeKind::Echo)
            .count() as f64;
        let eta = m.efficiency();
        let sd = (n as f64 * eta * (1.0 - eta)).sqrt();
        assert!((k - n as f64 * eta).abs() < 3.0 * sd, "{k} vs {}", n as f64 * eta);
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let cfg = AfcConfig::with_modes(ModePlan::Comb { n_modes: 25, fsr_hz: 117.2e6 });
        let m = AfcMemory::from_config(InhomogeneousProfile::default(), cfg).unwrap();
        let mut r = substream(3, Stage::Test, 0);
        for _ in 0..10_000 {
            let f = r.gen_range(-25e9..25e9);
            let f = if r.gen::<bool>() { f } else { f * 1e-4 };
            let p = m.outcome_probabilities(f);
            let s = p.echo + p.prompt + p.out_of_band + p.lost;
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.echo >= 0.0 && p.prompt >= 0.0 && p.lost >= 0.0);
        }
    }

    #[test]
    fn detuned_photon_does_not_echo() {
        let cfg = single(2.0, 4.0, 0.2);
        let m = AfcMemory::from_config(InhomogeneousProfile::default(), cfg.clone()).unwrap();
        assert!(m.outcome_probabilities(10.0 * cfg.tooth_fwhm()).echo < 1e-12);
        assert!((m.outcome_probabilities(1e3).echo / m.efficiency() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn spectrum_csv_header() {
        let cfg = single(2.0, 4.0, 0.0);
        let s = prepare_afc(&InhomogeneousProfile::default(), &cfg, grid_for(&cfg, 1e6, 1.0)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("offset_hz,optical_depth\n"));
        assert_eq!(text.lines().count(), s.grid.len() + 1);
        assert!(s.depth_at(0.0).unwrap() > 1.9);
    }
}

