//! Frequency and spectrum primitives.
//!
//! All frequencies are offsets in Hz from the AFC reference frequency, so the
//! arithmetic stays in the MHz–GHz range instead of carrying ~490 THz optical
//! carriers around.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when merging frequency offsets into a set.
pub const OFFSET_MERGE_TOLERANCE_HZ: f64 = 1.0;

/// Signed detuning from the AFC reference, in Hz.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrequencyOffset(pub f64);

impl FrequencyOffset {
    pub const ZERO: FrequencyOffset = FrequencyOffset(0.0);

    pub fn hz(value: f64) -> Self {
        FrequencyOffset(value)
    }

    pub fn mhz(value: f64) -> Self {
        FrequencyOffset(value * 1e6)
    }

    pub fn as_hz(self) -> f64 {
        self.0
    }

    pub fn as_mhz(self) -> f64 {
        self.0 * 1e-6
    }
}

impl Add for FrequencyOffset {
    type Output = FrequencyOffset;
    fn add(self, rhs: Self) -> Self {
        FrequencyOffset(self.0 + rhs.0)
    }
}

impl Sub for FrequencyOffset {
    type Output = FrequencyOffset;
    fn sub(self, rhs: Self) -> Self {
        FrequencyOffset(self.0 - rhs.0)
    }
}

impl Neg for FrequencyOffset {
    type Output = FrequencyOffset;
    fn neg(self) -> Self {
        FrequencyOffset(-self.0)
    }
}

impl fmt::Display for FrequencyOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+.4} MHz", self.as_mhz())
    }
}

/// Uniform grid of frequency samples `f_min, f_min + step, ...` up to `f_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralGrid {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub step_hz: f64,
}

impl SpectralGrid {
    pub fn new(f_min_hz: f64, f_max_hz: f64, step_hz: f64) -> Result<Self> {
        if !(step_hz > 0.0) || !step_hz.is_finite() {
            return Err(Error::invalid("grid.step_hz", "must be positive and finite"));
        }
        if !(f_min_hz < f_max_hz) {
            return Err(Error::invalid("grid.f_min_hz", "must be below f_max_hz"));
        }
        Ok(SpectralGrid {
            f_min_hz,
            f_max_hz,
            step_hz,
        })
    }

    pub fn len(&self) -> usize {
        ((self.f_max_hz - self.f_min_hz) / self.step_hz).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frequency(&self, index: usize) -> f64 {
        self.f_min_hz + index as f64 * self.step_hz
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.frequency(i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Lorentzian,
    Gaussian,
}

/// Unit-area line shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineProfile {
    pub kind: ProfileKind,
    pub center_hz: f64,
    pub fwhm_hz: f64,
}

impl LineProfile {
    pub fn lorentzian(center_hz: f64, fwhm_hz: f64) -> Result<Self> {
        Self::new(ProfileKind::Lorentzian, center_hz, fwhm_hz)
    }

    pub fn gaussian(center_hz: f64, fwhm_hz: f64) -> Result<Self> {
        Self::new(ProfileKind::Gaussian, center_hz, fwhm_hz)
    }

    pub fn new(kind: ProfileKind, center_hz: f64, fwhm_hz: f64) -> Result<Self> {
        if !(fwhm_hz > 0.0) || !fwhm_hz.is_finite() {
            return Err(Error::invalid("profile.fwhm_hz", "must be positive and finite"));
        }
        if !center_hz.is_finite() {
            return Err(Error::invalid("profile.center_hz", "must be finite"));
        }
        Ok(LineProfile {
            kind,
            center_hz,
            fwhm_hz,
        })
    }
}

/// Normalized spectral density of `p` at `f`, in 1/Hz.
pub fn profile_density(p: &LineProfile, f: FrequencyOffset) -> f64 {
    let x = f.0 - p.center_hz;
    match p.kind {
        ProfileKind::Lorentzian => {
            let hw = 0.5 * p.fwhm_hz;
            hw / (PI * (x * x + hw * hw))
        }
        ProfileKind::Gaussian => {
            let sigma = p.fwhm_hz / (2.0 * (2.0 * LN_2).sqrt());
            (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
        }
    }
}

/// Gaussian window with unit peak and the given FWHM.
pub fn gaussian_window(x: f64, fwhm: f64) -> f64 {
    (-4.0 * LN_2 * (x / fwhm).powi(2)).exp()
}

/// Two-photon-comb modes `k * fsr` for `k = -(n-1)/2 ..= (n-1)/2`, ascending.
pub fn tpc_mode_offsets(n_modes: usize, fsr_hz: f64) -> Result<Vec<FrequencyOffset>> {
    if n_modes == 0 {
        return Err(Error::invalid("n_modes", "must be at least 1"));
    }
    if n_modes % 2 == 0 {
        return Err(Error::EvenModeCount(n_modes));
    }
    if !(fsr_hz > 0.0) {
        return Err(Error::invalid("fsr_hz", "must be positive"));
    }
    let half = (n_modes as i64 - 1) / 2;
    Ok((-half..=half)
        .map(|k| FrequencyOffset(k as f64 * fsr_hz))
        .collect())
}

/// All sideband frequencies `i*f1 + j*f2` of two cascaded EOMs driven up to
/// `max_order`, merged into an ascending set.
pub fn eom_sideband_offsets(f1_hz: f64, f2_hz: f64, max_order: u32) -> Vec<FrequencyOffset> {
    let m = max_order as i64;
    let mut all: Vec<f64> = Vec::with_capacity(((2 * m + 1) * (2 * m + 1)) as usize);
    for i in -m..=m {
        for j in -m..=m {
            all.push(i as f64 * f1_hz + j as f64 * f2_hz);
        }
    }
    merge_offsets(all)
}

/// Sort and merge values closer than [`OFFSET_MERGE_TOLERANCE_HZ`].
pub fn merge_offsets(mut values: Vec<f64>) -> Vec<FrequencyOffset> {
    values.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<FrequencyOffset> = Vec::with_capacity(values.len());
    for v in values {
        match out.last() {
            Some(last) if (v - last.0).abs() <= OFFSET_MERGE_TOLERANCE_HZ => {}
            _ => out.push(FrequencyOffset(v)),
        }
    }
    out
}

/// Set equality under [`OFFSET_MERGE_TOLERANCE_HZ`]; both inputs ascending.
pub fn offsets_equal(a: &[FrequencyOffset], b: &[FrequencyOffset]) -> bool {
    a.len() == b.len()
        && a
            .iter()
            .zip(b)
            .all(|(x, y)| (x.0 - y.0).abs() <= OFFSET_MERGE_TOLERANCE_HZ)
}
