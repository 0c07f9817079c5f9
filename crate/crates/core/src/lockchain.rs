//! GPS-comb referenced offset-lock chain.
//!
//! Three lasers are driven: the TPC pump (1514 nm, also the photon
//! frequency), the master of the memory control laser (1212 nm) and the
//! conversion pump (1010 nm). The first two are offset-locked to the comb;
//! the conversion pump is steered so that the 606 nm monitor light keeps a
//! fixed beat against the doubled master. Everything else is derived:
//!
//! ```text
//! nu_QM      = 2 * nu_QMmaster
//! nu_AFC     = nu_QM + f_QMpumpAOM
//! nu_monitor = nu_photon + nu_WCpump
//! nu_606     = nu_monitor + f_noisecutAOM
//! ```
//!
//! Frequencies are expressed as offsets from the nominal `nu_QM`. Laser
//! errors are deviations from each laser's nominal lock point; the
//! conversion pump's nominal point puts the monitor beat at the design
//! `f_beat` (the network's `beat_anchor_hz`).

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, SimRng, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaserId {
    TpcPump1514,
    QmMaster1212,
    WcPump1010,
    Monitor606,
    QmControl606,
}

impl LaserId {
    pub fn is_derived(self) -> bool {
        matches!(self, LaserId::Monitor606 | LaserId::QmControl606)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfOffsets {
    pub f_qm_pump_aom_hz: f64,
    pub f_beat_hz: f64,
    pub f_noisecut_aom_hz: f64,
}

impl Default for RfOffsets {
    fn default() -> Self {
        RfOffsets {
            f_qm_pump_aom_hz: 164.3e6,
            f_beat_hz: 83.4e6,
            f_noisecut_aom_hz: 80.9e6,
        }
    }
}

impl RfOffsets {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [
            ("f_qm_pump_aom_hz", self.f_qm_pump_aom_hz),
            ("f_beat_hz", self.f_beat_hz),
            ("f_noisecut_aom_hz", self.f_noisecut_aom_hz),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{prefix}.{name}"), "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    RandomWalk,
    OuProcess,
}

/// Free-running frequency wander of one laser.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftModel {
    pub kind: DriftKind,
    /// Diffusion strength in Hz/sqrt(s).
    pub sigma: f64,
    /// Mean-reversion rate in 1/s, used by the OU process only.
    #[serde(default)]
    pub reversion_rate: f64,
}

impl DriftModel {
    pub fn random_walk(sigma: f64) -> Self {
        DriftModel {
            kind: DriftKind::RandomWalk,
            sigma,
            reversion_rate: 0.0,
        }
    }

    pub fn ou(sigma: f64, reversion_rate: f64) -> Self {
        DriftModel {
            kind: DriftKind::OuProcess,
            sigma,
            reversion_rate,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::invalid(format!("{prefix}.sigma"), "must be >= 0"));
        }
        if !(self.reversion_rate >= 0.0) {
            return Err(Error::invalid(format!("{prefix}.reversion_rate"), "must be >= 0"));
        }
        Ok(())
    }

    fn advance(&self, x: f64, dt: f64, rng: &mut SimRng) -> f64 {
        if self.sigma == 0.0 {
            return match self.kind {
                DriftKind::RandomWalk => x,
                DriftKind::OuProcess => x * (-self.reversion_rate * dt).exp(),
            };
        }
        let z: f64 = rng.sample(StandardNormal);
        match self.kind {
            DriftKind::RandomWalk => x + self.sigma * dt.sqrt() * z,
            DriftKind::OuProcess if self.reversion_rate == 0.0 => x + self.sigma * dt.sqrt() * z,
            DriftKind::OuProcess => {
                // exact transition of dx = -theta x dt + sigma dW
                let theta = self.reversion_rate;
                let decay = (-theta * dt).exp();
                let sd = self.sigma * ((1.0 - decay * decay) / (2.0 * theta)).sqrt();
                x * decay + sd * z
            }
        }
    }
}

/// First-order offset-lock servo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoModel {
    pub setpoint_hz: f64,
    pub gain_per_s: f64,
    pub residual_noise_rms_hz: f64,
    pub enabled: bool,
}

/// Driven-laser frequency errors, in Hz from their nominal lock points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaserNetworkState {
    pub tpc_pump_hz: f64,
    pub qm_master_hz: f64,
    pub wc_pump_hz: f64,
    /// Monitor beat (`nu_monitor - nu_QM`) when every error is zero.
    pub beat_anchor_hz: f64,
    pub time_s: f64,
}

impl LaserNetworkState {
    pub fn new(beat_anchor_hz: f64) -> Self {
        LaserNetworkState {
            tpc_pump_hz: 0.0,
            qm_master_hz: 0.0,
            wc_pump_hz: 0.0,
            beat_anchor_hz,
            time_s: 0.0,
        }
    }

    pub fn error(&self, laser: LaserId) -> Result<f64> {
        match laser {
            LaserId::TpcPump1514 => Ok(self.tpc_pump_hz),
            LaserId::QmMaster1212 => Ok(self.qm_master_hz),
            LaserId::WcPump1010 => Ok(self.wc_pump_hz),
            d => Err(Error::DerivedLaser(d)),
        }
    }

    fn error_mut(&mut self, laser: LaserId) -> Result<&mut f64> {
        match laser {
            LaserId::TpcPump1514 => Ok(&mut self.tpc_pump_hz),
            LaserId::QmMaster1212 => Ok(&mut self.qm_master_hz),
            LaserId::WcPump1010 => Ok(&mut self.wc_pump_hz),
            d => Err(Error::DerivedLaser(d)),
        }
    }

    /// Measured monitor beat `nu_monitor - nu_QM`.
    pub fn monitor_beat_hz(&self) -> f64 {
        self.beat_anchor_hz + self.tpc_pump_hz + self.wc_pump_hz - 2.0 * self.qm_master_hz
    }

    /// Steer the conversion pump so the monitor beat equals `f_beat` exactly.
    pub fn with_ideal_beat_lock(mut self, f_beat_hz: f64) -> Self {
        self.wc_pump_hz += f_beat_hz - self.monitor_beat_hz();
        self
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "must be positive"));
    }
    Ok(())
}

/// Advance one driven laser by its free-running drift.
pub fn step_free_running(
    state: &LaserNetworkState,
    laser: LaserId,
    drift: &DriftModel,
    dt: f64,
    rng: &mut SimRng,
) -> Result<LaserNetworkState> {
    check_dt(dt)?;
    let mut next = *state;
    let e = next.error_mut(laser)?;
    *e = drift.advance(*e, dt, rng);
    Ok(next)
}

/// One update of a proportional servo acting on `actuated_laser`.
///
/// The correction is `(1 - exp(-gain*dt)) * (measured - setpoint)`, which is
/// `gain * dt * (measured - setpoint)` for `gain*dt << 1` and stays stable
/// when the loop is much faster than the update interval.
pub fn step_servo(
    state: &LaserNetworkState,
    servo: &ServoModel,
    measured_beat_hz: f64,
    actuated_laser: LaserId,
    dt: f64,
    rng: &mut SimRng,
) -> Result<LaserNetworkState> {
    check_dt(dt)?;
    let mut next = *state;
    if !servo.enabled {
        return Ok(next);
    }
    if !(servo.gain_per_s > 0.0) {
        return Err(Error::invalid("servo.gain_per_s", "must be positive when enabled"));
    }
    let e = next.error_mut(actuated_laser)?;
    let k = -(-servo.gain_per_s * dt).exp_m1();
    *e -= k * (measured_beat_hz - servo.setpoint_hz);
    if servo.residual_noise_rms_hz > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        *e += servo.residual_noise_rms_hz * z;
    }
    Ok(next)
}

/// Derived frequencies, as offsets from the nominal `nu_QM`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivedFrequencies {
    pub nu_qm_hz: f64,
    pub nu_afc_hz: f64,
    pub nu_monitor_hz: f64,
    pub nu_606photon_hz: f64,
}

pub fn derived_frequencies(state: &LaserNetworkState, rf: &RfOffsets) -> DerivedFrequencies {
    let nu_qm = 2.0 * state.qm_master_hz;
    let nu_afc = nu_qm + rf.f_qm_pump_aom_hz;
    let nu_monitor = state.beat_anchor_hz + state.tpc_pump_hz + state.wc_pump_hz;
    let nu_606 = nu_monitor + rf.f_noisecut_aom_hz;
    DerivedFrequencies {
        nu_qm_hz: nu_qm,
        nu_afc_hz: nu_afc,
        nu_monitor_hz: nu_monitor,
        nu_606photon_hz: nu_606,
    }
}

/// `nu_606photon - nu_AFC`: how far the converted photons sit from the comb.
pub fn matching_residual(state: &LaserNetworkState, rf: &RfOffsets) -> f64 {
    let d = derived_frequencies(state, rf);
    d.nu_606photon_hz - d.nu_afc_hz
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoParams {
    pub gain_per_s: f64,
    pub residual_noise_rms_hz: f64,
    pub enabled: bool,
}

impl ServoParams {
    fn model(&self, setpoint_hz: f64) -> ServoModel {
        ServoModel {
            setpoint_hz,
            gain_per_s: self.gain_per_s,
            residual_noise_rms_hz: self.residual_noise_rms_hz,
            enabled: self.enabled,
        }
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        if self.enabled && !(self.gain_per_s > 0.0) {
            return Err(Error::invalid(format!("{prefix}.gain_per_s"), "must be positive when enabled"));
        }
        if !(self.residual_noise_rms_hz >= 0.0) {
            return Err(Error::invalid(format!("{prefix}.residual_noise_rms_hz"), "must be >= 0"));
        }
        Ok(())
    }
}

/// Drift and servo parameters for a full lock-chain run. The defaults are
/// calibration values: the unlocked lasers wander by several MHz over 12 h,
/// the locked chain holds kHz-level residuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockConfig {
    #[serde(default)]
    pub rf: RfOffsets,
    #[serde(default = "default_drift")]
    pub tpc_pump_drift: DriftModel,
    #[serde(default = "default_drift")]
    pub qm_master_drift: DriftModel,
    #[serde(default = "default_drift")]
    pub wc_pump_drift: DriftModel,
    #[serde(default = "default_comb_servo")]
    pub tpc_comb_servo: ServoParams,
    #[serde(default = "default_comb_servo")]
    pub master_comb_servo: ServoParams,
    #[serde(default = "default_beat_servo")]
    pub beat_servo: ServoParams,
    #[serde(default = "default_lock_dt")]
    pub dt_s: f64,
}

fn default_drift() -> DriftModel {
    DriftModel::random_walk(30e3)
}

fn default_comb_servo() -> ServoParams {
    ServoParams {
        gain_per_s: 100.0,
        residual_noise_rms_hz: 300.0,
        enabled: true,
    }
}

fn default_beat_servo() -> ServoParams {
    ServoParams {
        gain_per_s: 100.0,
        residual_noise_rms_hz: 700.0,
        enabled: true,
    }
}

fn default_lock_dt() -> f64 {
    1.0
}

impl Default for LockConfig {
    fn default() -> Self {
        LockConfig {
            rf: RfOffsets::default(),
            tpc_pump_drift: default_drift(),
            qm_master_drift: default_drift(),
            wc_pump_drift: default_drift(),
            tpc_comb_servo: default_comb_servo(),
            master_comb_servo: default_comb_servo(),
            beat_servo: default_beat_servo(),
            dt_s: default_lock_dt(),
        }
    }
}

impl LockConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        self.rf.validate(&format!("{prefix}.rf"))?;
        self.tpc_pump_drift.validate(&format!("{prefix}.tpc_pump_drift"))?;
        self.qm_master_drift.validate(&format!("{prefix}.qm_master_drift"))?;
        self.wc_pump_drift.validate(&format!("{prefix}.wc_pump_drift"))?;
        self.tpc_comb_servo.validate(&format!("{prefix}.tpc_comb_servo"))?;
        self.master_comb_servo.validate(&format!("{prefix}.master_comb_servo"))?;
        self.beat_servo.validate(&format!("{prefix}.beat_servo"))?;
        if !(self.dt_s > 0.0) {
            return Err(Error::invalid(format!("{prefix}.dt_s"), "must be positive"));
        }
        Ok(())
    }

    pub fn with_servos_enabled(mut self, enabled: bool) -> Self {
        self.tpc_comb_servo.enabled = enabled;
        self.master_comb_servo.enabled = enabled;
        self.beat_servo.enabled = enabled;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LockSample {
    pub t_s: f64,
    pub residual_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LockTelemetry {
    pub dt_s: f64,
    pub samples: Vec<LockSample>,
    pub max_abs_residual_hz: f64,
    pub rms_residual_hz: f64,
    /// Largest excursion of each driven laser: TPC pump, QM master, WC pump.
    pub max_abs_laser_error_hz: [f64; 3],
}

impl LockTelemetry {
    /// Residual in effect at time `t` (sample-and-hold between samples).
    pub fn residual_at(&self, t: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let idx = ((t / self.dt_s).floor() as isize - 1).clamp(0, self.samples.len() as isize - 1);
        self.samples[idx as usize].residual_hz
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_s,residual_hz")?;
        for s in &self.samples {
            writeln!(w, "{},{}", s.t_s, s.residual_hz)?;
        }
        Ok(())
    }
}

/// Simulate the lock chain for `duration` seconds at step `dt`.
///
/// Each laser's drift and each servo's noise draw from their own stream, so a
/// run with servos disabled sees exactly the same free-running wander.
pub fn simulate_lock_run(config: &LockConfig, duration: f64, dt: f64, seed: u64) -> Result<LockTelemetry> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::invalid("duration", "must be positive"));
    }
    check_dt(dt)?;
    config.validate("lock")?;
    let rf = config.rf;
    let steps = (duration / dt).round().max(1.0) as usize;
    let mut drift_rng: Vec<SimRng> = (0..3).map(|i| substream(seed, Stage::Lock, i)).collect();
    let mut servo_rng: Vec<SimRng> = (3..6).map(|i| substream(seed, Stage::Lock, i)).collect();
    let comb_tpc = config.tpc_comb_servo.model(0.0);
    let comb_master = config.master_comb_servo.model(0.0);
    let beat = config.beat_servo.model(rf.f_beat_hz);

    let mut state = LaserNetworkState::new(rf.f_beat_hz);
    let mut samples = Vec::with_capacity(steps);
    let mut max_laser = [0.0f64; 3];
    let mut sum_sq = 0.0;
    let mut max_abs = 0.0f64;
    for k in 1..=steps {
        state = step_free_running(&state, LaserId::TpcPump1514, &config.tpc_pump_drift, dt, &mut drift_rng[0])?;
        state = step_free_running(&state, LaserId::QmMaster1212, &config.qm_master_drift, dt, &mut drift_rng[1])?;
        state = step_free_running(&state, LaserId::WcPump1010, &config.wc_pump_drift, dt, &mut drift_rng[2])?;
        state = step_servo(&state, &comb_tpc, state.tpc_pump_hz, LaserId::TpcPump1514, dt, &mut servo_rng[0])?;
        state = step_servo(&state, &comb_master, state.qm_master_hz, LaserId::QmMaster1212, dt, &mut servo_rng[1])?;
        state = step_servo(&state, &beat, state.monitor_beat_hz(), LaserId::WcPump1010, dt, &mut servo_rng[2])?;
        state.time_s = k as f64 * dt;

        let r = matching_residual(&state, &rf);
        max_abs = max_abs.max(r.abs());
        sum_sq += r * r;
        for (m, e) in max_laser.iter_mut().zip([state.tpc_pump_hz, state.qm_master_hz, state.wc_pump_hz]) {
            *m = m.max(e.abs());
        }
        samples.push(LockSample {
            t_s: state.time_s,
            residual_hz: r,
        });
    }
    Ok(LockTelemetry {
        dt_s: dt,
        rms_residual_hz: (sum_sq / steps as f64).sqrt(),
        max_abs_residual_hz: max_abs,
        max_abs_laser_error_hz: max_laser,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stage;
    use proptest::prelude::*;

    fn rng(i: u64) -> SimRng {
        substream(42, Stage::Test, i)
    }

    #[test]
    fn zero_sigma_drift_is_identity() {
        let s = LaserNetworkState::new(83.4e6);
        let mut r = rng(0);
        let n = step_free_running(&s, LaserId::TpcPump1514, &DriftModel::random_walk(0.0), 1.0, &mut r).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn derived_lasers_cannot_be_stepped() {
        let s = LaserNetworkState::new(83.4e6);
        let mut r = rng(0);
        for l in [LaserId::Monitor606, LaserId::QmControl606] {
            assert!(matches!(
                step_free_running(&s, l, &DriftModel::random_walk(1.0), 1.0, &mut r),
                Err(Error::DerivedLaser(_))
            ));
        }
    }

    #[test]
    fn random_walk_variance() {
        let sigma = 1e3;
        let t = 4.0;
        let drift = DriftModel::random_walk(sigma);
        let mut r = rng(1);
        let trials = 10_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let mut s = LaserNetworkState::new(0.0);
            for _ in 0..4 {
                s = step_free_running(&s, LaserId::WcPump1010, &drift, 1.0, &mut r).unwrap();
            }
            acc += s.wc_pump_hz * s.wc_pump_hz;
        }
        let var = acc / trials as f64;
        let want = sigma * sigma * t;
        assert!((var / want - 1.0).abs() < 0.05, "var {var} want {want}");
    }

    #[test]
    fn ou_stationary_std() {
        let sigma = 2e3;
        let theta = 5.0;
        let drift = DriftModel::ou(sigma, theta);
        let mut r = rng(2);
        let mut s = LaserNetworkState::new(0.0);
        let dt = 0.05;
        let mut acc = 0.0;
        let mut n = 0usize;
        for k in 0..400_000 {
            s = step_free_running(&s, LaserId::QmMaster1212, &drift, dt, &mut r).unwrap();
            if k > 1000 {
                acc += s.qm_master_hz * s.qm_master_hz;
                n += 1;
            }
        }
        let std = (acc / n as f64).sqrt();
        let want = sigma / (2.0 * theta).sqrt();
        assert!((std / want - 1.0).abs() < 0.05, "std {std} want {want}");
    }

    fn servo(gain: f64, noise: f64) -> ServoModel {
        ServoModel {
            setpoint_hz: 0.0,
            gain_per_s: gain,
            residual_noise_rms_hz: noise,
            enabled: true,
        }
    }

    #[test]
    fn servo_at_setpoint_is_identity() {
        let mut s = LaserNetworkState::new(83.4e6);
        s.wc_pump_hz = 123.0;
        let mut r = rng(3);
        let sv = ServoModel { setpoint_hz: 83.4e6 + 123.0, ..servo(10.0, 0.0) };
        let n = step_servo(&s, &sv, s.monitor_beat_hz(), LaserId::WcPump1010, 0.1, &mut r).unwrap();
        assert_eq!(n.wc_pump_hz, 123.0);
    }

    #[test]
    fn servo_step_response_decays_exponentially() {
        // Step disturbance d on the beat, first-order loop: residual d*exp(-g t).
        let d = 10e3;
        let g = 20.0;
        let dt = 1e-4;
        let sv = servo(g, 0.0);
        let mut r = rng(4);
        let mut s = LaserNetworkState::new(0.0);
        s.tpc_pump_hz = d;
        let steps = (10.0 / g / dt).round() as usize;
        for k in 1..=steps {
            s = step_servo(&s, &sv, s.tpc_pump_hz, LaserId::TpcPump1514, dt, &mut r).unwrap();
            let t = k as f64 * dt;
            let want = d * (-g * t).exp();
            assert!((s.tpc_pump_hz - want).abs() <= 0.02 * d);
        }
        assert!(s.tpc_pump_hz.abs() < 0.02 * d);
    }

    #[test]
    fn fast_servo_converges_quickly() {
        let sv = servo(1e6, 0.0);
        let mut r = rng(5);
        let mut s = LaserNetworkState::new(0.0);
        s.tpc_pump_hz = 5e6;
        for _ in 0..5 {
            s = step_servo(&s, &sv, s.tpc_pump_hz, LaserId::TpcPump1514, 1.0, &mut r).unwrap();
        }
        assert!(s.tpc_pump_hz.abs() < 1.0);
    }

    #[test]
    fn identity_examples() {
        let rf = RfOffsets::default();
        let s = LaserNetworkState::new(rf.f_beat_hz);
        assert_eq!(matching_residual(&s, &rf), 0.0);

        let mut s = LaserNetworkState::new(rf.f_beat_hz);
        s.qm_master_hz = 1e3;
        let s = s.with_ideal_beat_lock(rf.f_beat_hz);
        let d = derived_frequencies(&s, &rf);
        assert!((d.nu_afc_hz - (rf.f_qm_pump_aom_hz + 2e3)).abs() < 1e-6);
        assert!(matching_residual(&s, &rf).abs() < 1e-6);

        let mut s = LaserNetworkState::new(rf.f_beat_hz);
        s.wc_pump_hz = 3e3;
        assert!((matching_residual(&s, &rf) - 3e3).abs() < 1e-6);

        let off = RfOffsets { f_beat_hz: 84.4e6, ..rf };
        let s = LaserNetworkState::new(rf.f_beat_hz).with_ideal_beat_lock(off.f_beat_hz);
        assert!((matching_residual(&s, &off) - 1e6).abs() < 1e-6);
    }

    #[test]
    fn zero_drift_run_has_zero_residual() {
        let mut cfg = LockConfig::default();
        for d in [&mut cfg.tpc_pump_drift, &mut cfg.qm_master_drift, &mut cfg.wc_pump_drift] {
            d.sigma = 0.0;
        }
        for s in [&mut cfg.tpc_comb_servo, &mut cfg.master_comb_servo, &mut cfg.beat_servo] {
            s.residual_noise_rms_hz = 0.0;
        }
        let t = simulate_lock_run(&cfg, 100.0, 1.0, 1).unwrap();
        assert_eq!(t.samples.len(), 100);
        assert!(t.samples.iter().all(|s| s.residual_hz == 0.0));
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = LockConfig::default();
        let a = simulate_lock_run(&cfg, 500.0, 1.0, 9).unwrap();
        let b = simulate_lock_run(&cfg, 500.0, 1.0, 9).unwrap();
        assert_eq!(a, b);
        let mut x = Vec::new();
        a.write_csv(&mut x).unwrap();
        assert!(String::from_utf8(x).unwrap().starts_with("t_s,residual_hz\n1,"));
    }

    #[test]
    fn residual_lookup_is_sample_and_hold() {
        let cfg = LockConfig::default();
        let t = simulate_lock_run(&cfg, 10.0, 1.0, 3).unwrap();
        assert_eq!(t.residual_at(0.2), t.samples[0].residual_hz);
        assert_eq!(t.residual_at(3.5), t.samples[2].residual_hz);
        assert_eq!(t.residual_at(1e9), t.samples[9].residual_hz);
    }

    proptest! {
        #[test]
        fn aom_identities_hold(p in -1e7f64..1e7, m in -1e7f64..1e7, w in -1e7f64..1e7,
                               aom in 1e6f64..3e8, beat in 1e6f64..3e8, nc in 1e6f64..3e8) {
            let rf = RfOffsets { f_qm_pump_aom_hz: aom, f_beat_hz: beat, f_noisecut_aom_hz: nc };
            let s = LaserNetworkState { tpc_pump_hz: p, qm_master_hz: m, wc_pump_hz: w, beat_anchor_hz: 83.4e6, time_s: 0.0 };
            let d = derived_frequencies(&s, &rf);
            prop_assert!((d.nu_afc_hz - d.nu_qm_hz - aom).abs() < 1e-6);
            prop_assert!((d.nu_606photon_hz - d.nu_monitor_hz - nc).abs() < 1e-6);
        }

        #[test]
        fn matching_theorem(p in -1e7f64..1e7, m in -1e7f64..1e7, w in -1e7f64..1e7,
                            beat in 1e6f64..2e8, nc in 1e6f64..2e8) {
            // Beat held at f_beat and f_aom = f_beat + f_nc => zero residual.
            let rf = RfOffsets { f_qm_pump_aom_hz: beat + nc, f_beat_hz: beat, f_noisecut_aom_hz: nc };
            let s = LaserNetworkState { tpc_pump_hz: p, qm_master_hz: m, wc_pump_hz: w, beat_anchor_hz: 83.4e6, time_s: 0.0 }
                .with_ideal_beat_lock(beat);
            prop_assert!(matching_residual(&s, &rf).abs() < 1e-6);
        }

        #[test]
        fn open_loop_residual_is_error_combination(p in -1e7f64..1e7, m in -1e7f64..1e7, w in -1e7f64..1e7) {
            let rf = RfOffsets::default();
            let s = LaserNetworkState { tpc_pump_hz: p, qm_master_hz: m, wc_pump_hz: w, beat_anchor_hz: rf.f_beat_hz, time_s: 0.0 };
            let want = p + w - 2.0 * m;
            prop_assert!((matching_residual(&s, &rf) - want).abs() < 1e-6);
        }
    }
}
