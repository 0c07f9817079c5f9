use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::source::SourceConfig;

use super::config::ScenarioConfig;
use super::pipeline::{run_scenario, RunReport};

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub snr: Option<f64>,
    pub s: u64,
    pub n: f64,
    #[serde(skip)]
    pub report: RunReport,
}

/// Copy of `cfg` with the numeric field at dotted `path` set to `value`.
pub fn with_parameter(cfg: &ScenarioConfig, path: &str, value: f64) -> Result<ScenarioConfig> {
    let mut root = cfg.to_value();
    let mut node = &mut root;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::NonNumericPath(path.to_string()))?;
    }
    let Value::Number(old) = node else {
        return Err(Error::NonNumericPath(path.to_string()));
    };
    *node = if old.is_f64() {
        serde_json::Number::from_f64(value)
            .map(Value::Number)
            .ok_or_else(|| Error::invalid(path, "value must be finite"))?
    } else {
        if value.fract() != 0.0 || value < 0.0 {
            return Err(Error::invalid(path, "field takes a non-negative integer"));
        }
        Value::from(value as u64)
    };
    ScenarioConfig::from_value(root)
}

/// Run `cfg` once per value of the field at `path`; run `i` uses
/// `derive_seed(cfg.seed, i)`.
pub fn sweep(cfg: &ScenarioConfig, path: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    let configs: Vec<ScenarioConfig> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = with_parameter(cfg, path, v)?;
            c.seed = derive_seed(cfg.seed, i as u64);
            Ok(c)
        })
        .collect::<Result<_>>()?;
    configs
        .into_iter()
        .zip(values)
        .map(|(c, &value)| {
            let report = run_scenario(&c)?;
            Ok(SweepRow {
                value,
                seed: c.seed,
                snr: report.summary.snr,
                s: report.summary.s,
                n: report.summary.n,
                report,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(mut w: W, path: &str, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{path},snr,S,N,seed")?;
    for r in rows {
        let snr = r.snr.map(|v| v.to_string()).unwrap_or_else(|| "NaN".into());
        writeln!(w, "{},{},{},{},{}", r.value, snr, r.s, r.n, r.seed)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationStep {
    pub total_pair_rate: f64,
    pub peak_counts: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Calibration {
    pub source: SourceConfig,
    pub target_peak_counts: u64,
    pub peak_counts: u64,
    pub steps: Vec<CalibrationStep>,
}

/// Find a total pair rate whose echo-window count over the configured
/// duration is within 10% of `target`.
///
/// Every evaluation reuses `cfg.seed`, so the count is a deterministic,
/// nearly linear function of the rate. The search first brackets the
/// target by proportional steps, then shrinks the bracket by
/// false-position steps (Illinois weighting) with a bisection fallback.
pub fn calibrate_rate(cfg: &ScenarioConfig, target: u64) -> Result<Calibration> {
    if target == 0 {
        return Err(Error::Calibration("target peak count must be positive".into()));
    }
    let tol = 0.1 * target as f64;
    let mut steps: Vec<CalibrationStep> = Vec::new();
    let eval = |rate: f64, steps: &mut Vec<CalibrationStep>| -> Result<f64> {
        let mut c = cfg.clone();
        c.source.total_pair_rate = rate;
        let s = run_scenario(&c)?.summary.s;
        steps.push(CalibrationStep {
            total_pair_rate: rate,
            peak_counts: s,
        });
        Ok(s as f64 - target as f64)
    };
    let done = |steps: &[CalibrationStep], rate: f64| -> Calibration {
        let mut source = cfg.source.clone();
        source.total_pair_rate = rate;
        Calibration {
            source,
            target_peak_counts: target,
            peak_counts: steps.last().map_or(0, |s| s.peak_counts),
            steps: steps.to_vec(),
        }
    };
    let diagnostics = |steps: &[CalibrationStep]| -> String {
        steps
            .iter()
            .map(|s| format!("rate {} -> {}", s.total_pair_rate, s.peak_counts))
            .collect::<Vec<_>>()
            .join("; ")
    };

    let floor = eval(0.0, &mut steps)?;
    if floor.abs() <= tol {
        return Err(Error::Calibration(format!(
            "noise alone already gives the target ({})",
            diagnostics(&steps)
        )));
    }
    if floor > 0.0 {
        return Err(Error::Calibration(format!(
            "target below the pair-free count; not bracketed ({})",
            diagnostics(&steps)
        )));
    }
    let (mut lo, mut f_lo) = (0.0, floor);
    let mut rate = if cfg.source.total_pair_rate > 0.0 {
        cfg.source.total_pair_rate
    } else {
        1.0
    };
    let (mut hi, mut f_hi);
    let mut expansions = 0;
    loop {
        let f = eval(rate, &mut steps)?;
        if f.abs() <= tol {
            return Ok(done(&steps, rate));
        }
        if f > 0.0 {
            hi = rate;
            f_hi = f;
            break;
        }
        lo = rate;
        f_lo = f;
        expansions += 1;
        if expansions > 30 {
            return Err(Error::Calibration(format!(
                "no rate reaches the target ({})",
                diagnostics(&steps)
            )));
        }
        // extrapolate the pair-induced excess linearly, overshooting slightly
        let slope = (f - floor) / rate;
        rate = if slope > 0.0 {
            (-floor / slope * 1.05).clamp(1.1 * rate, 1e3 * rate)
        } else {
            2.0 * rate
        };
        if !rate.is_finite() {
            return Err(Error::Calibration(format!("rate diverged ({})", diagnostics(&steps))));
        }
    }
    let mut side = 0i8;
    for _ in 0..60 {
        let mut x = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let f = eval(x, &mut steps)?;
        if f.abs() <= tol {
            return Ok(done(&steps, x));
        }
        if f > 0.0 {
            hi = x;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = x;
            f_lo = f;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        }
        if (hi - lo) <= 1e-9 * hi {
            break;
        }
    }
    Err(Error::Calibration(format!("did not converge ({})", diagnostics(&steps))))
}
