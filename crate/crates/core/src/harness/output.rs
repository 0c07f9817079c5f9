use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::detection::{write_summary_csv, SummaryRow};
use crate::error::Result;
use crate::memory::{prepare_spectrum, AbsorptionSpectrum, AfcMemory};
use crate::spectral::SpectralGrid;

use super::pipeline::RunReport;

/// Write `histogram.csv`, `summary.csv`, `report.json` and, for simulated
/// locks, `lock.csv` into `dir`. Returns the written paths.
pub fn write_run_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join("histogram.csv");
    report
        .histogram
        .write_csv(BufWriter::new(File::create(&path)?), Some(&report.smoothed))?;
    written.push(path);

    let path = dir.join("summary.csv");
    let row = SummaryRow {
        scenario: report.scenario.clone(),
        s: report.summary.s,
        n: report.summary.n,
        snr: report.summary.snr,
        duration_s: report.duration_s,
        seed: report.provenance.seed,
    };
    write_summary_csv(BufWriter::new(File::create(&path)?), &[row])?;
    written.push(path);

    if let Some(t) = &report.lock_telemetry {
        let path = dir.join("lock.csv");
        t.write_csv(BufWriter::new(File::create(&path)?))?;
        written.push(path);
    }

    let path = dir.join("report.json");
    fs::write(&path, report.to_json())?;
    written.push(path);
    Ok(written)
}

/// Grid spanning every pit plus a margin of one pit width on each side, at
/// the coarsest step that still resolves the teeth.
pub fn afc_plot_grid(memory: &AfcMemory) -> Result<SpectralGrid> {
    let modes = memory.modes();
    let margin = 2.0 * memory.afc.pit_halfwidth_hz;
    let lo = modes.first().map_or(0.0, |m| m.0) - margin;
    let hi = modes.last().map_or(0.0, |m| m.0) + margin;
    let step = memory.afc.tooth_spacing_hz / (4.0 * memory.afc.finesse);
    SpectralGrid::new(lo, hi, step)
}

pub fn write_afc_spectrum(memory: &AfcMemory, path: &Path) -> Result<AbsorptionSpectrum> {
    let spectrum = prepare_spectrum(memory, afc_plot_grid(memory)?)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    spectrum.write_csv(BufWriter::new(File::create(path)?))?;
    Ok(spectrum)
}
