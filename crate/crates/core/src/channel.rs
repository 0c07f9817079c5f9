//! Fiber transmission, sum-frequency conversion and the herald-gated AOM
//! noise shutter.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::source::{Arm, Origin, PhotonEvent};
use crate::spectral::{gaussian_window, FrequencyOffset};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberLink {
    pub length_km: f64,
    #[serde(default = "default_loss")]
    pub loss_db_per_km: f64,
    #[serde(default = "default_group_index")]
    pub group_index: f64,
}

fn default_loss() -> f64 {
    0.2
}

fn default_group_index() -> f64 {
    1.468
}

impl FiberLink {
    pub fn new(length_km: f64) -> Self {
        FiberLink {
            length_km,
            loss_db_per_km: default_loss(),
            group_index: default_group_index(),
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.length_km >= 0.0) || !self.length_km.is_finite() {
            return Err(Error::invalid(format!("{prefix}.length_km"), "must be finite and >= 0"));
        }
        if !(self.loss_db_per_km >= 0.0) {
            return Err(Error::invalid(format!("{prefix}.loss_db_per_km"), "must be >= 0"));
        }
        if !(self.group_index >= 1.0) {
            return Err(Error::invalid(format!("{prefix}.group_index"), "must be >= 1"));
        }
        Ok(())
    }

    pub fn survival_probability(&self) -> f64 {
        10f64.powf(-self.loss_db_per_km * self.length_km / 10.0)
    }

    /// Propagation delay in seconds.
    pub fn delay(&self) -> f64 {
        self.length_km * 1e3 * self.group_index / SPEED_OF_LIGHT
    }
}

pub fn fiber_transmit(event: PhotonEvent, link: &FiberLink, rng: &mut SimRng) -> Option<PhotonEvent> {
    if rng.gen::<f64>() < link.survival_probability() {
        Some(PhotonEvent {
            time: event.time + link.delay(),
            ..event
        })
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterConfig {
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    #[serde(default = "default_pm_fwhm")]
    pub pm_fwhm_hz: f64,
    #[serde(default = "default_pump_power")]
    pub pump_power_mw: f64,
    /// Converter noise at `reference_pump_power_mw`, counts/s after the filters.
    #[serde(default = "default_noise_rate")]
    pub noise_rate_ref_cps: f64,
    #[serde(default = "default_pump_power")]
    pub reference_pump_power_mw: f64,
}

fn default_efficiency() -> f64 {
    0.558
}

fn default_pm_fwhm() -> f64 {
    40e9
}

fn default_pump_power() -> f64 {
    140.0
}

fn default_noise_rate() -> f64 {
    40e3
}

impl Default for ConverterConfig {
    fn default() -> Self {
        ConverterConfig {
            efficiency: default_efficiency(),
            pm_fwhm_hz: default_pm_fwhm(),
            pump_power_mw: default_pump_power(),
            noise_rate_ref_cps: default_noise_rate(),
            reference_pump_power_mw: default_pump_power(),
        }
    }
}

impl ConverterConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid(format!("{prefix}.efficiency"), "must lie in [0, 1]"));
        }
        if !(self.pm_fwhm_hz > 0.0) {
            return Err(Error::invalid(format!("{prefix}.pm_fwhm_hz"), "must be positive"));
        }
        if !(self.pump_power_mw >= 0.0) {
            return Err(Error::invalid(format!("{prefix}.pump_power_mw"), "must be >= 0"));
        }
        if !(self.noise_rate_ref_cps >= 0.0) {
            return Err(Error::invalid(format!("{prefix}.noise_rate_ref_cps"), "must be >= 0"));
        }
        if !(self.reference_pump_power_mw > 0.0) {
            return Err(Error::invalid(format!("{prefix}.reference_pump_power_mw"), "must be positive"));
        }
        Ok(())
    }

    /// Phase-matching window, unity at zero offset.
    pub fn phase_matching(&self, offset: FrequencyOffset) -> f64 {
        gaussian_window(offset.0, self.pm_fwhm_hz)
    }

    pub fn survival_probability(&self, offset: FrequencyOffset) -> f64 {
        self.efficiency * self.phase_matching(offset)
    }

    /// Noise rate, linear in pump power through the reference point.
    pub fn noise_rate(&self) -> f64 {
        self.noise_rate_ref_cps * self.pump_power_mw / self.reference_pump_power_mw
    }

    /// Frequency span of the converter output, `[-fwhm/2, fwhm/2]`.
    pub fn mode_span(&self) -> (f64, f64) {
        (-0.5 * self.pm_fwhm_hz, 0.5 * self.pm_fwhm_hz)
    }
}

pub fn convert(event: PhotonEvent, cfg: &ConverterConfig, rng: &mut SimRng) -> Option<PhotonEvent> {
    (rng.gen::<f64>() < cfg.survival_probability(event.mode_offset)).then_some(event)
}

/// Pump-induced converter noise on `[t0, t1)`: Poisson at
/// [`ConverterConfig::noise_rate`], spectrally white over `mode_span`.
/// Events carry `Arm::Signal`; the beam splitter reassigns arms downstream.
pub fn sample_conversion_noise(
    cfg: &ConverterConfig,
    t0: f64,
    t1: f64,
    rng: &mut SimRng,
    mode_span: (f64, f64),
) -> Vec<PhotonEvent> {
    let mut out = Vec::new();
    push_poisson(&mut out, cfg.noise_rate(), &[(t0, t1)], mode_span, Arm::Signal, Origin::ConversionNoise, rng);
    out
}

/// Poisson events of `rate` on a sorted list of disjoint intervals, with
/// white mode offsets over `span`. Uses exponential gaps in the intervals'
/// cumulative-measure coordinate.
pub fn push_poisson(
    out: &mut Vec<PhotonEvent>,
    rate: f64,
    intervals: &[(f64, f64)],
    span: (f64, f64),
    arm: Arm,
    origin: Origin,
    rng: &mut SimRng,
) {
    if !(rate > 0.0) {
        return;
    }
    let inv = 1.0 / rate;
    let mut need: f64 = rng.sample::<f64, _>(Exp1) * inv;
    for &(a, b) in intervals {
        let mut pos = a;
        while pos + need < b {
            pos += need;
            let f = if span.1 > span.0 { rng.gen_range(span.0..span.1) } else { span.0 };
            out.push(PhotonEvent {
                time: pos,
                mode_offset: FrequencyOffset(f),
                arm,
                origin,
                pair_id: None,
            });
            need = rng.sample::<f64, _>(Exp1) * inv;
        }
        need -= b - pos;
    }
}

/// AFC preparation/transmission cycle and the herald-triggered gate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShutterSchedule {
    pub cycle_period_s: f64,
    /// Start of each cycle during which the AFC is prepared and the shutter
    /// stays closed.
    pub prep_duration_s: f64,
    /// Trigger latency from a herald detection to the gate edges.
    #[serde(default)]
    pub herald_close_delay_s: f64,
    /// Gate open interval relative to the (delayed) herald time.
    pub echo_window_s: [f64; 2],
    #[serde(default = "default_extinction")]
    pub extinction: f64,
}

fn default_extinction() -> f64 {
    1e-3
}

impl ShutterSchedule {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.cycle_period_s > 0.0) {
            return Err(Error::invalid(format!("{prefix}.cycle_period_s"), "must be positive"));
        }
        if !(self.prep_duration_s >= 0.0 && self.prep_duration_s < self.cycle_period_s) {
            return Err(Error::invalid(format!("{prefix}.prep_duration_s"), "must lie in [0, cycle_period_s)"));
        }
        if !(0.0..=1.0).contains(&self.extinction) {
            return Err(Error::invalid(format!("{prefix}.extinction"), "must lie in [0, 1]"));
        }
        if !(self.echo_window_s[0] < self.echo_window_s[1]) {
            return Err(Error::invalid(format!("{prefix}.echo_window_s"), "t_open must precede t_close"));
        }
        if !self.herald_close_delay_s.is_finite() {
            return Err(Error::invalid(format!("{prefix}.herald_close_delay_s"), "must be finite"));
        }
        Ok(())
    }

    pub fn in_prep(&self, t: f64) -> bool {
        t.rem_euclid(self.cycle_period_s) < self.prep_duration_s
    }

    /// Gate interval opened by a herald detected at `t_h`.
    pub fn window_for(&self, t_h: f64) -> (f64, f64) {
        let base = t_h + self.herald_close_delay_s;
        (base + self.echo_window_s[0], base + self.echo_window_s[1])
    }

    /// Transmission-phase pieces of `[a, b)`.
    fn clip_to_transmission(&self, a: f64, b: f64, out: &mut Vec<(f64, f64)>) {
        let p = self.cycle_period_s;
        let mut k = (a / p).floor();
        while k * p < b {
            let lo = a.max(k * p + self.prep_duration_s);
            let hi = b.min((k + 1.0) * p);
            if lo < hi {
                out.push((lo, hi));
            }
            k += 1.0;
        }
    }
}

/// Union of gate-open intervals, sorted and disjoint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OpenSet {
    intervals: Vec<(f64, f64)>,
}

impl OpenSet {
    /// Open intervals triggered by `heralds` (sorted detection times).
    /// Heralds detected during AFC preparation do not open the gate.
    pub fn from_heralds(heralds: &[f64], schedule: &ShutterSchedule) -> Self {
        let mut raw: Vec<(f64, f64)> = Vec::with_capacity(heralds.len());
        for &t in heralds {
            if schedule.in_prep(t) {
                continue;
            }
            let (a, b) = schedule.window_for(t);
            schedule.clip_to_transmission(a, b, &mut raw);
        }
        Self::from_intervals(raw)
    }

    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| a < b);
        raw.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        OpenSet { intervals: merged }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, t: f64) -> bool {
        let i = self.intervals.partition_point(|iv| iv.1 <= t);
        i < self.intervals.len() && self.intervals[i].0 <= t
    }

    /// Length of `[lo, hi) ∩ open`.
    pub fn measure_within(&self, lo: f64, hi: f64) -> f64 {
        let start = self.intervals.partition_point(|iv| iv.1 <= lo);
        let mut acc = 0.0;
        for &(a, b) in &self.intervals[start..] {
            if a >= hi {
                break;
            }
            acc += b.min(hi) - a.max(lo);
        }
        acc
    }

    /// Closed pieces of `[t0, t1)`.
    pub fn complement_within(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut cur = t0;
        for &(a, b) in &self.intervals {
            if b <= t0 {
                continue;
            }
            if a >= t1 {
                break;
            }
            if a > cur {
                out.push((cur, a));
            }
            cur = cur.max(b);
        }
        if cur < t1 {
            out.push((cur, t1));
        }
        out
    }

    /// Open pieces clipped to `[t0, t1)`.
    pub fn clipped(&self, t0: f64, t1: f64) -> Vec<(f64, f64)> {
        self.intervals
            .iter()
            .filter(|(a, b)| *b > t0 && *a < t1)
            .map(|&(a, b)| (a.max(t0), b.min(t1)))
            .collect()
    }
}

/// Pass events through the shutter: certain transmission while a herald's
/// gate is open, probability `extinction` otherwise.
pub fn shutter_gate(
    events: &[PhotonEvent],
    heralds: &[f64],
    schedule: &ShutterSchedule,
    rng: &mut SimRng,
) -> Vec<PhotonEvent> {
    let open = OpenSet::from_heralds(heralds, schedule);
    gate_with(events, &open, schedule.extinction, rng)
}

pub fn gate_with(events: &[PhotonEvent], open: &OpenSet, extinction: f64, rng: &mut SimRng) -> Vec<PhotonEvent> {
    events
        .iter()
        .filter(|e| {
            open.contains(e.time) || extinction >= 1.0 || (extinction > 0.0 && rng.gen::<f64>() < extinction)
        })
        .copied()
        .collect()
}

/// Noise of `rate` already passed through the shutter: Poisson at `rate` on
/// the open set and `rate * extinction` elsewhere in `[t0, t1)`. Equal in
/// distribution to [`gate_with`] applied to ungated Poisson noise.
pub fn sample_gated_noise(
    rate: f64,
    open: &OpenSet,
    extinction: f64,
    t0: f64,
    t1: f64,
    span: (f64, f64),
    arm: Arm,
    rng: &mut SimRng,
) -> Vec<PhotonEvent> {
    let mut out = Vec::new();
    push_poisson(&mut out, rate, &open.clipped(t0, t1), span, arm, Origin::ConversionNoise, rng);
    push_poisson(
        &mut out,
        rate * extinction,
        &open.complement_within(t0, t1),
        span,
        arm,
        Origin::ConversionNoise,
        rng,
    );
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    out
}
