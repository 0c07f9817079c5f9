use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use afc_link::harness::{
    calibrate_rate, run_scenario, sweep, write_afc_spectrum, write_run_outputs, write_sweep_csv, LockMode,
    ScenarioConfig,
};
use afc_link::lockchain::{simulate_lock_run, LockConfig};
use afc_link::memory::{afc_efficiency_oracle, prepare_spectrum, ORACLE_STEPS_PER_PERIOD};
use afc_link::rng::{derive_seed, Stage};
use afc_link::spectral::SpectralGrid;
use afc_link::{Error, Result};

#[derive(Parser)]
#[command(name = "afcsim", version, about = "Frequency-multiplexed AFC quantum-memory link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write histogram, summary and report files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario once per value of a numeric config field.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted path, e.g. `link.length_km`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the laser-lock network alone.
    Lockcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        hours: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the prepared absorption spectrum.
    AfcPlot {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune the pair rate until the echo-peak count hits a target.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        target_peak: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(out: Option<PathBuf>, cfg: &ScenarioConfig) -> PathBuf {
    out.unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json"));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = run_scenario(&cfg)?;
            let dir = out_dir(out, &cfg);
            let files = write_run_outputs(&report, &dir)?;
            print_json(&json!({
                "scenario": report.scenario,
                "summary": report.summary,
                "files": files,
            }));
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let rows = sweep(&cfg, &param, &values)?;
            let dir = out_dir(out, &cfg);
            fs::create_dir_all(&dir)?;
            let path = dir.join("sweep.csv");
            write_sweep_csv(BufWriter::new(fs::File::create(&path)?), &param, &rows)?;
            print_json(&json!({ "param": param, "rows": rows, "file": path }));
        }
        Command::Lockcheck { config, hours, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            if !(hours > 0.0 && hours.is_finite()) {
                return Err(Error::InvalidParameter {
                    field: "hours".into(),
                    reason: "must be positive".into(),
                });
            }
            let lock = match &cfg.lock {
                LockMode::Simulated { config, .. } => config.clone(),
                LockMode::Ideal => LockConfig::default(),
            };
            let seed = derive_seed(cfg.seed, Stage::Lock as u64);
            let duration = hours * 3600.0;
            let closed = simulate_lock_run(&lock, duration, lock.dt_s, seed)?;
            let open = simulate_lock_run(&lock.clone().with_servos_enabled(false), duration, lock.dt_s, seed)?;
            let dir = out_dir(out, &cfg);
            fs::create_dir_all(&dir)?;
            let path = dir.join("lock.csv");
            closed.write_csv(BufWriter::new(fs::File::create(&path)?))?;
            print_json(&json!({
                "hours": hours,
                "samples": closed.samples.len(),
                "closed_loop": {
                    "max_abs_residual_hz": closed.max_abs_residual_hz,
                    "rms_residual_hz": closed.rms_residual_hz,
                },
                "open_loop": {
                    "max_abs_residual_hz": open.max_abs_residual_hz,
                    "rms_residual_hz": open.rms_residual_hz,
                },
                "file": path,
            }));
        }
        Command::AfcPlot { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let memory = cfg.build_memory()?;
            let dir = out_dir(out, &cfg);
            let path = dir.join("afc_spectrum.csv");
            write_afc_spectrum(&memory, &path)?;
            // oracle on a finer grid around the central mode
            let centre = memory.modes()[memory.modes().len() / 2];
            let spacing = memory.afc.tooth_spacing_hz;
            let step = (spacing / ORACLE_STEPS_PER_PERIOD).min(spacing / (4.0 * memory.afc.finesse));
            let span = memory.afc.pit_halfwidth_hz * 3.0;
            let grid = SpectralGrid::new(centre.0 - span, centre.0 + span, step)?;
            let oracle = afc_efficiency_oracle(&prepare_spectrum(&memory, grid)?, centre, spacing)?;
            print_json(&json!({
                "modes": memory.modes().len(),
                "echo_efficiency": memory.efficiency(),
                "echo_efficiency_oracle": oracle,
                "storage_time_s": memory.afc.storage_time(),
                "file": path,
            }));
        }
        Command::Calibrate {
            config,
            target_peak,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let cal = calibrate_rate(&cfg, target_peak)?;
            let mut tuned = cfg.clone();
            tuned.source = cal.source.clone();
            let dir = out_dir(out, &cfg);
            fs::create_dir_all(&dir)?;
            let path = dir.join("calibrated.json");
            fs::write(&path, tuned.to_json_pretty() + "\n")?;
            print_json(&json!({ "calibration": cal, "file": path }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({
                "error": e.kind(),
                "field": e.field(),
                "message": e.to_string(),
            });
            eprintln!("{}", serde_json::to_string(&body).expect("json"));
            ExitCode::from(2)
        }
    }
}
