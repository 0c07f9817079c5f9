//! Single-photon detection, start-stop histogramming and the SNR metric.

use std::io::Write;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::source::{Origin, PhotonEvent};

/// FWHM over standard deviation for a Gaussian.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdConfig {
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    #[serde(default = "default_dark_rate")]
    pub dark_rate_cps: f64,
    #[serde(default = "default_dead_time")]
    pub dead_time_s: f64,
    #[serde(default = "default_jitter")]
    pub jitter_fwhm_s: f64,
}

fn default_efficiency() -> f64 {
    0.5
}

fn default_dark_rate() -> f64 {
    100.0
}

fn default_dead_time() -> f64 {
    50e-9
}

fn default_jitter() -> f64 {
    100e-12
}

impl Default for SpdConfig {
    fn default() -> Self {
        SpdConfig {
            efficiency: default_efficiency(),
            dark_rate_cps: default_dark_rate(),
            dead_time_s: default_dead_time(),
            jitter_fwhm_s: default_jitter(),
        }
    }
}

impl SpdConfig {
    /// Perfect detector: unit efficiency, no darks, no dead time, no jitter.
    pub fn ideal() -> Self {
        SpdConfig {
            efficiency: 1.0,
            dark_rate_cps: 0.0,
            dead_time_s: 0.0,
            jitter_fwhm_s: 0.0,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid(format!("{prefix}.efficiency"), "must lie in [0, 1]"));
        }
        if !(self.dark_rate_cps >= 0.0 && self.dark_rate_cps.is_finite()) {
            return Err(Error::invalid(format!("{prefix}.dark_rate_cps"), "must be >= 0"));
        }
        if !(self.dead_time_s >= 0.0 && self.dead_time_s.is_finite()) {
            return Err(Error::invalid(format!("{prefix}.dead_time_s"), "must be >= 0"));
        }
        if !(self.jitter_fwhm_s >= 0.0 && self.jitter_fwhm_s.is_finite()) {
            return Err(Error::invalid(format!("{prefix}.jitter_fwhm_s"), "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub time: f64,
    pub origin: Origin,
    pub pair_id: Option<u64>,
}

/// Detect sorted `events` on `[t0, t1)`.
pub fn detect(events: &[PhotonEvent], spd: &SpdConfig, window: (f64, f64), rng: &mut SimRng) -> Vec<Detection> {
    let clicks = events
        .iter()
        .filter(|_| spd.efficiency >= 1.0 || rng.gen::<f64>() < spd.efficiency)
        .map(|e| Detection {
            time: e.time,
            origin: e.origin,
            pair_id: e.pair_id,
        })
        .collect();
    finish_detection(clicks, spd, window, rng)
}

/// Clicks that already passed the efficiency draw get dark counts, timing
/// jitter and dead time applied. Used for noise sampled directly at its
/// detected rate.
pub fn finish_detection(mut clicks: Vec<Detection>, spd: &SpdConfig, window: (f64, f64), rng: &mut SimRng) -> Vec<Detection> {
    let (t0, t1) = window;
    if spd.dark_rate_cps > 0.0 && t1 > t0 {
        let inv = 1.0 / spd.dark_rate_cps;
        let mut t = t0 + rng.sample::<f64, _>(Exp1) * inv;
        while t < t1 {
            clicks.push(Detection {
                time: t,
                origin: Origin::DarkCount,
                pair_id: None,
            });
            t += rng.sample::<f64, _>(Exp1) * inv;
        }
    }
    if spd.jitter_fwhm_s > 0.0 {
        let sigma = spd.jitter_fwhm_s / FWHM_PER_SIGMA;
        for c in clicks.iter_mut() {
            c.time += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    clicks.sort_by(|a, b| a.time.total_cmp(&b.time));
    apply_dead_time(clicks, spd.dead_time_s)
}

/// Non-paralyzable dead time: a click within `dead_time` of the last
/// accepted click is discarded.
pub fn apply_dead_time(clicks: Vec<Detection>, dead_time: f64) -> Vec<Detection> {
    if dead_time <= 0.0 {
        return clicks;
    }
    let mut out: Vec<Detection> = Vec::with_capacity(clicks.len());
    let mut ready = f64::NEG_INFINITY;
    for c in clicks {
        if c.time >= ready {
            ready = c.time + dead_time;
            out.push(c);
        }
    }
    out
}

/// Histogram binning and analysis windows. Times in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSpec {
    #[serde(default = "default_bin")]
    pub bin_width_s: f64,
    pub range_s: [f64; 2],
    pub signal_window_s: [f64; 2],
    pub noise_window_s: [f64; 2],
}

fn default_bin() -> f64 {
    0.128e-9
}

impl HistogramSpec {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.bin_width_s > 0.0) {
            return Err(Error::invalid(format!("{prefix}.bin_width_s"), "must be positive"));
        }
        let [lo, hi] = self.range_s;
        if !(lo < hi) {
            return Err(Error::invalid(format!("{prefix}.range_s"), "must be increasing"));
        }
        for (name, [a, b]) in [("signal_window_s", self.signal_window_s), ("noise_window_s", self.noise_window_s)] {
            if !(a < b && a >= lo && b <= hi) {
                return Err(Error::invalid(format!("{prefix}.{name}"), "must be a non-empty interval inside range_s"));
            }
        }
        let [sa, sb] = self.signal_window_s;
        let [na, nb] = self.noise_window_s;
        if sa < nb && na < sb {
            return Err(Error::invalid(format!("{prefix}.noise_window_s"), "overlaps the signal window"));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        ((self.range_s[1] - self.range_s[0]) / self.bin_width_s - 1e-9).ceil().max(1.0) as usize
    }

    /// Bins whose centres fall in `[a, b)`.
    pub fn bins_in(&self, window: [f64; 2]) -> std::ops::Range<usize> {
        let w = self.bin_width_s;
        let lo = ((window[0] - self.range_s[0]) / w - 0.5).ceil().max(0.0) as usize;
        let hi = ((window[1] - self.range_s[0]) / w - 0.5).ceil().max(0.0) as usize;
        lo.min(self.n_bins())..hi.min(self.n_bins())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceHistogram {
    pub spec: HistogramSpec,
    pub counts: Vec<u64>,
}

impl CoincidenceHistogram {
    pub fn empty(spec: HistogramSpec) -> Result<Self> {
        if !(spec.bin_width_s > 0.0) {
            return Err(Error::invalid("histogram.bin_width_s", "must be positive"));
        }
        if !(spec.range_s[0] < spec.range_s[1]) {
            return Err(Error::invalid("histogram.range_s", "must be increasing"));
        }
        Ok(CoincidenceHistogram {
            counts: vec![0; spec.n_bins()],
            spec,
        })
    }

    pub fn bin_of(&self, tau: f64) -> Option<usize> {
        let x = (tau - self.spec.range_s[0]) / self.spec.bin_width_s;
        if x < 0.0 {
            return None;
        }
        let i = x.floor() as usize;
        (i < self.counts.len()).then_some(i)
    }

    pub fn bin_centre(&self, i: usize) -> f64 {
        self.spec.range_s[0] + (i as f64 + 0.5) * self.spec.bin_width_s
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Add the (herald, signal) coincidences of one shard.
    pub fn accumulate(&mut self, heralds: &[f64], signals: &[f64]) {
        let [lo, hi] = self.spec.range_s;
        let mut start = 0;
        for &s in signals {
            // heralds with s - h in [lo, hi)  <=>  h in (s - hi, s - lo]
            while start < heralds.len() && heralds[start] <= s - hi {
                start += 1;
            }
            for &h in &heralds[start..] {
                if h > s - lo {
                    break;
                }
                if let Some(i) = self.bin_of(s - h) {
                    self.counts[i] += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &CoincidenceHistogram) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::invalid("histogram", "cannot merge histograms with different layouts"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn window_counts(&self, window: [f64; 2]) -> (u64, usize) {
        let r = self.spec.bins_in(window);
        let n = r.len();
        (self.counts[r].iter().sum(), n)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, smoothed: Option<&[f64]>) -> std::io::Result<()> {
        match smoothed {
            Some(_) => writeln!(w, "tau_ns,counts,smoothed")?,
            None => writeln!(w, "tau_ns,counts")?,
        }
        for (i, c) in self.counts.iter().enumerate() {
            let tau_ns = self.bin_centre(i) * 1e9;
            match smoothed {
                Some(s) => writeln!(w, "{tau_ns},{c},{}", s[i])?,
                None => writeln!(w, "{tau_ns},{c}")?,
            }
        }
        Ok(())
    }
}

/// Multi-stop start-stop histogram: every signal with `t_signal - t_herald`
/// in range counts against every herald. Both streams must be sorted.
pub fn build_histogram(heralds: &[f64], signals: &[f64], spec: HistogramSpec) -> Result<CoincidenceHistogram> {
    let mut h = CoincidenceHistogram::empty(spec)?;
    h.accumulate(heralds, signals);
    Ok(h)
}

/// Centred boxcar average over `n_bins`; for even widths the extra bin sits
/// on the left. Windows are truncated at the edges and averaged over the bins
/// they actually cover.
pub fn moving_average(counts: &[u64], n_bins: usize) -> Vec<f64> {
    let n_bins = n_bins.max(1);
    let len = counts.len();
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0u64);
    for c in counts {
        prefix.push(prefix.last().unwrap() + c);
    }
    let left = n_bins / 2;
    let right = n_bins - 1 - left;
    (0..len)
        .map(|i| {
            let a = i.saturating_sub(left);
            let b = (i + right + 1).min(len);
            (prefix[b] - prefix[a]) as f64 / (b - a) as f64
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SnrSummary {
    /// Counts in the signal window.
    pub s: u64,
    /// Raw counts in the noise window.
    pub noise_raw: u64,
    /// Noise counts rescaled to the signal window's duration.
    pub n: f64,
    pub snr: f64,
}

pub fn snr_summary(hist: &CoincidenceHistogram) -> Result<SnrSummary> {
    let (s, s_bins) = hist.window_counts(hist.spec.signal_window_s);
    let (noise_raw, n_bins) = hist.window_counts(hist.spec.noise_window_s);
    if n_bins == 0 || s_bins == 0 {
        return Err(Error::invalid("histogram", "analysis windows cover no bins"));
    }
    let n = noise_raw as f64 * s_bins as f64 / n_bins as f64;
    if !(n > 0.0) {
        return Err(Error::NoiseFloorUnresolved);
    }
    Ok(SnrSummary {
        s,
        noise_raw,
        n,
        snr: (s as f64 - n) / n,
    })
}

/// `(S - N) / N` with `N` the duration-scaled noise-window counts.
pub fn compute_snr(hist: &CoincidenceHistogram) -> Result<f64> {
    snr_summary(hist).map(|s| s.snr)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub s: u64,
    pub n: f64,
    pub snr: Option<f64>,
    pub duration_s: f64,
    pub seed: u64,
}

pub fn write_summary_csv<W: Write>(mut w: W, rows: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(w, "scenario,S,N,snr,duration_s,seed")?;
    for r in rows {
        let snr = r.snr.map(|v| v.to_string()).unwrap_or_else(|| "NaN".into());
        writeln!(w, "{},{},{},{},{},{}", r.scenario, r.s, r.n, snr, r.duration_s, r.seed)?;
    }
    Ok(())
}
