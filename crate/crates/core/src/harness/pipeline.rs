use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::channel::{convert, fiber_transmit, gate_with, sample_gated_noise, OpenSet};
use crate::detection::{detect, finish_detection, moving_average, snr_summary, CoincidenceHistogram, Detection};
use crate::error::{Error, Result};
use crate::lockchain::{simulate_lock_run, LockTelemetry};
use crate::memory::{store_retrieve, AfcMemory, OutcomeKind};
use crate::rng::{substream, SimRng, Stage};
use crate::source::{apply_pair_correlation, into_pairs, sample_pairs, Arm, Origin, PhotonEvent};
use crate::spectral::FrequencyOffset;

use super::config::{LockMode, ScenarioConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OriginCounts {
    pub pair: u64,
    pub conversion_noise: u64,
    pub dark_count: u64,
}

impl OriginCounts {
    pub fn total(&self) -> u64 {
        self.pair + self.conversion_noise + self.dark_count
    }

    fn bump(&mut self, origin: Origin) {
        match origin {
            Origin::Pair => self.pair += 1,
            Origin::ConversionNoise => self.conversion_noise += 1,
            Origin::DarkCount => self.dark_count += 1,
        }
    }
}

/// Fate of pair photons that reached the memory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MemoryOutcomeCounts {
    pub echo: u64,
    pub prompt_transmit: u64,
    pub out_of_band_transmit: u64,
    pub lost: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    /// Counts in the signal (echo) window.
    pub s: u64,
    pub noise_raw: u64,
    /// Noise counts scaled to the signal window's duration.
    pub n: f64,
    pub snr: Option<f64>,
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub echo_efficiency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunCounts {
    pub herald_detections: u64,
    pub herald_by_origin: OriginCounts,
    /// Detected signal clicks by origin; their sum is `signal_detections`.
    pub signal_by_origin: OriginCounts,
    pub signal_detections: u64,
    /// Coincidences inside the signal window, split by the stop click's origin.
    pub signal_window_by_origin: OriginCounts,
    pub noise_window_by_origin: OriginCounts,
    pub memory_outcomes: MemoryOutcomeCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LockSummary {
    pub samples: usize,
    pub dt_s: f64,
    pub max_abs_residual_hz: f64,
    pub rms_residual_hz: f64,
    pub residual_bias_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub code_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub duration_s: f64,
    pub summary: RunSummary,
    pub counts: RunCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lock: Option<LockSummary>,
    pub provenance: Provenance,
    #[serde(skip)]
    pub histogram: CoincidenceHistogram,
    /// Histogram of coincidences split by the stop click's origin:
    /// pair, conversion noise, dark count.
    #[serde(skip)]
    pub histogram_by_origin: [CoincidenceHistogram; 3],
    #[serde(skip)]
    pub smoothed: Vec<f64>,
    #[serde(skip)]
    pub lock_telemetry: Option<LockTelemetry>,
}

impl RunReport {
    pub fn snr(&self) -> Result<f64> {
        self.summary.snr.ok_or(Error::NoiseFloorUnresolved)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

struct Residual {
    telemetry: Option<LockTelemetry>,
    bias_hz: f64,
}

impl Residual {
    fn at(&self, t: f64) -> f64 {
        self.bias_hz + self.telemetry.as_ref().map_or(0.0, |tel| tel.residual_at(t))
    }
}

struct BlockContext<'a> {
    cfg: &'a ScenarioConfig,
    memory: &'a AfcMemory,
    residual: &'a Residual,
    noise_span: (f64, f64),
}

struct Tally<'a> {
    herald_by_origin: OriginCounts,
    signal_by_origin: OriginCounts,
    memory_outcomes: MemoryOutcomeCounts,
    hists: &'a mut [CoincidenceHistogram; 3],
}

fn stream(cfg: &ScenarioConfig, stage: Stage, block: u64) -> SimRng {
    substream(cfg.seed, stage, block)
}

/// Converted herald-port noise that survives the detector efficiency,
/// sampled directly at its detected rate.
fn herald_noise_clicks(rate: f64, len: f64, rng: &mut SimRng, out: &mut Vec<Detection>) {
    if !(rate > 0.0) {
        return;
    }
    let inv = 1.0 / rate;
    let mut t = rng.sample::<f64, _>(Exp1) * inv;
    while t < len {
        out.push(Detection {
            time: t,
            origin: Origin::ConversionNoise,
            pair_id: None,
        });
        t += rng.sample::<f64, _>(Exp1) * inv;
    }
}

fn run_block(ctx: &BlockContext, block: u64, start: f64, len: f64, tally: &mut Tally) -> Result<()> {
    let cfg = ctx.cfg;
    let mut pair_rng = stream(cfg, Stage::PairSource, block);
    let mut corr_rng = stream(cfg, Stage::PairCorrelation, block);
    let mut fiber_rng = stream(cfg, Stage::Fiber, block);
    let mut conv_rng = stream(cfg, Stage::Converter, block);
    let mut bs_rng = stream(cfg, Stage::BeamSplitter, block);

    // source, link, conversion and the splitter
    let mut herald_photons: Vec<PhotonEvent> = Vec::new();
    let mut signal_photons: Vec<PhotonEvent> = Vec::new();
    if cfg.source.total_pair_rate > 0.0 {
        let events = sample_pairs(&cfg.source, 0.0, len, &mut pair_rng)?;
        let block_id = block << 32;
        for pair in into_pairs(&events) {
            let pair = apply_pair_correlation(pair, cfg.source.linewidth_hz, &mut corr_rng);
            for mut photon in [pair.herald, pair.signal] {
                photon.pair_id = photon.pair_id.map(|id| block_id | id);
                let Some(p) = fiber_transmit(photon, &cfg.link, &mut fiber_rng) else {
                    continue;
                };
                let Some(mut p) = convert(p, &cfg.converter, &mut conv_rng) else {
                    continue;
                };
                if bs_rng.gen::<f64>() < cfg.herald_split {
                    p.arm = Arm::Herald;
                    herald_photons.push(p);
                } else {
                    p.arm = Arm::Signal;
                    signal_photons.push(p);
                }
            }
        }
        herald_photons.sort_by(|a, b| a.time.total_cmp(&b.time));
        signal_photons.sort_by(|a, b| a.time.total_cmp(&b.time));
    }

    // herald detector
    let spd_h = &cfg.detectors.herald;
    let mut hdet_rng = stream(cfg, Stage::HeraldDetector, block);
    let mut hnoise_rng = stream(cfg, Stage::HeraldNoise, block);
    let mut clicks: Vec<Detection> = herald_photons
        .iter()
        .filter(|_| hdet_rng.gen::<f64>() < spd_h.efficiency)
        .map(|e| Detection {
            time: e.time,
            origin: e.origin,
            pair_id: e.pair_id,
        })
        .collect();
    let herald_rate = cfg.converter.noise_rate() * cfg.herald_split * spd_h.efficiency;
    herald_noise_clicks(herald_rate, len, &mut hnoise_rng, &mut clicks);
    let herald_clicks = finish_detection(clicks, spd_h, (0.0, len), &mut hdet_rng);
    let mut heralds: Vec<f64> = Vec::with_capacity(herald_clicks.len());
    for d in &herald_clicks {
        tally.herald_by_origin.bump(d.origin);
        heralds.push(d.time);
    }

    // shutter
    let open = OpenSet::from_heralds(&heralds, &cfg.shutter);
    let mut shutter_rng = stream(cfg, Stage::Shutter, block);
    let mut snoise_rng = stream(cfg, Stage::SignalNoise, block);
    let mut into_memory = gate_with(&signal_photons, &open, cfg.shutter.extinction, &mut shutter_rng);
    let signal_rate = cfg.converter.noise_rate() * (1.0 - cfg.herald_split);
    into_memory.extend(sample_gated_noise(
        signal_rate,
        &open,
        cfg.shutter.extinction,
        0.0,
        len,
        ctx.noise_span,
        Arm::Signal,
        &mut snoise_rng,
    ));

    // memory
    let mut mem_rng = stream(cfg, Stage::Memory, block);
    let mut out_of_memory: Vec<PhotonEvent> = Vec::with_capacity(into_memory.len());
    for mut e in into_memory {
        e.mode_offset = e.mode_offset + FrequencyOffset(ctx.residual.at(start + e.time));
        let outcome = store_retrieve(&e, ctx.memory, cfg.memory.slow_light_delay_s, &mut mem_rng);
        if e.origin == Origin::Pair {
            let m = &mut tally.memory_outcomes;
            match outcome.kind {
                OutcomeKind::Echo => m.echo += 1,
                OutcomeKind::PromptTransmit => m.prompt_transmit += 1,
                OutcomeKind::OutOfBandTransmit => m.out_of_band_transmit += 1,
                OutcomeKind::Lost => m.lost += 1,
            }
        }
        if outcome.kind != OutcomeKind::Lost {
            e.time = outcome.exit_time;
            out_of_memory.push(e);
        }
    }
    out_of_memory.sort_by(|a, b| a.time.total_cmp(&b.time));

    // signal detector and the time-interval analyzer
    let mut sdet_rng = stream(cfg, Stage::SignalDetector, block);
    let signals = detect(&out_of_memory, &cfg.detectors.signal, (0.0, len), &mut sdet_rng);
    let mut by_origin: [Vec<f64>; 3] = Default::default();
    for d in &signals {
        tally.signal_by_origin.bump(d.origin);
        by_origin[origin_index(d.origin)].push(d.time);
    }
    for (h, times) in tally.hists.iter_mut().zip(&by_origin) {
        h.accumulate(&heralds, times);
    }
    Ok(())
}

fn origin_index(o: Origin) -> usize {
    match o {
        Origin::Pair => 0,
        Origin::ConversionNoise => 1,
        Origin::DarkCount => 2,
    }
}

fn window_by_origin(hists: &[CoincidenceHistogram; 3], window: [f64; 2]) -> OriginCounts {
    OriginCounts {
        pair: hists[0].window_counts(window).0,
        conversion_noise: hists[1].window_counts(window).0,
        dark_count: hists[2].window_counts(window).0,
    }
}

/// Run the full pipeline for one scenario.
///
/// Event time is processed one shutter cycle at a time; every cycle draws
/// from its own substreams and coincidences never span two cycles.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    cfg.validate()?;
    let memory = cfg.build_memory()?;
    let (telemetry, bias_hz) = match &cfg.lock {
        LockMode::Ideal => (None, 0.0),
        LockMode::Simulated { config, residual_bias_hz } => {
            let lock_seed = crate::rng::derive_seed(cfg.seed, Stage::Lock as u64);
            (
                Some(simulate_lock_run(config, cfg.duration_s, config.dt_s, lock_seed)?),
                *residual_bias_hz,
            )
        }
    };
    let residual = Residual {
        telemetry,
        bias_hz,
    };
    let ctx = BlockContext {
        cfg,
        memory: &memory,
        residual: &residual,
        noise_span: cfg.converter.mode_span(),
    };

    let empty = CoincidenceHistogram::empty(cfg.histogram)?;
    let mut hists = [empty.clone(), empty.clone(), empty.clone()];
    let mut tally = Tally {
        herald_by_origin: OriginCounts::default(),
        signal_by_origin: OriginCounts::default(),
        memory_outcomes: MemoryOutcomeCounts::default(),
        hists: &mut hists,
    };
    let period = cfg.shutter.cycle_period_s;
    let n_blocks = (cfg.duration_s / period - 1e-9).ceil().max(1.0) as u64;
    for b in 0..n_blocks {
        let start = b as f64 * period;
        let len = period.min(cfg.duration_s - start);
        run_block(&ctx, b, start, len, &mut tally)?;
    }
    let herald_by_origin = tally.herald_by_origin;
    let signal_by_origin = tally.signal_by_origin;
    let memory_outcomes = tally.memory_outcomes;

    let mut histogram = empty;
    for h in &hists {
        histogram.merge(h)?;
    }
    let smoothed = moving_average(&histogram.counts, cfg.smoothing_bins);
    let summary = match snr_summary(&histogram) {
        Ok(s) => RunSummary {
            s: s.s,
            noise_raw: s.noise_raw,
            n: s.n,
            snr: Some(s.snr),
            degenerate: signal_by_origin.pair == 0,
            note: (signal_by_origin.pair == 0).then(|| "no pair photons detected".to_string()),
            echo_efficiency: memory.efficiency(),
        },
        Err(Error::NoiseFloorUnresolved) => RunSummary {
            s: histogram.window_counts(cfg.histogram.signal_window_s).0,
            noise_raw: 0,
            n: 0.0,
            snr: None,
            degenerate: true,
            note: Some(Error::NoiseFloorUnresolved.to_string()),
            echo_efficiency: memory.efficiency(),
        },
        Err(e) => return Err(e),
    };
    let counts = RunCounts {
        herald_detections: herald_by_origin.total(),
        herald_by_origin,
        signal_by_origin,
        signal_detections: signal_by_origin.total(),
        signal_window_by_origin: window_by_origin(&hists, cfg.histogram.signal_window_s),
        noise_window_by_origin: window_by_origin(&hists, cfg.histogram.noise_window_s),
        memory_outcomes,
    };
    let lock = residual.telemetry.as_ref().map(|t| LockSummary {
        samples: t.samples.len(),
        dt_s: t.dt_s,
        max_abs_residual_hz: t.max_abs_residual_hz,
        rms_residual_hz: t.rms_residual_hz,
        residual_bias_hz: bias_hz,
    });
    Ok(RunReport {
        scenario: cfg.name.clone(),
        duration_s: cfg.duration_s,
        summary,
        counts,
        lock,
        provenance: Provenance {
            config_sha256: cfg.hash(),
            seed: cfg.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        histogram,
        histogram_by_origin: hists,
        smoothed,
        lock_telemetry: residual.telemetry,
    })
}
