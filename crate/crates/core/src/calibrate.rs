//! SOC-trace validation and one-time per-vehicle parameter calibration.
//!
//! Recorded engine traces are replayed through the vehicle model and the
//! simulated SOC is compared with the recorded SOC. Calibration adjusts the
//! two drivetrain efficiencies and the stationary charge rate by cyclic
//! golden-section search on the mean relative SOC error.

use alloc::vec::Vec;

use crate::ems::Replay;
use crate::preprocess::TripProfile;
use crate::vehicle::{simulate_trip, SimError, VehicleParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("trip {index} has no recorded {channel} channel")]
    MissingChannel { index: usize, channel: &'static str },
    #[error("no trips to calibrate against")]
    NoTrips,
    #[error("trip {index}: {source}")]
    Sim { index: usize, source: SimError },
}

/// Mean of `|sim - rec| / rec` over samples with `rec >= 1%`.
pub fn soc_mean_relative_error(simulated: &[f64], recorded: &[f64]) -> f64 {
    let (sum, n) = simulated
        .iter()
        .zip(recorded)
        .filter(|(_, &r)| r >= 1.0)
        .fold((0.0, 0usize), |(s, n), (&x, &r)| (s + libm::fabs(x - r) / r, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Replays the recorded engine channel and returns the SOC error of one trip.
pub fn replay_error(profile: &TripProfile, params: &VehicleParams) -> Result<f64, CalibrationError> {
    replay_error_at(0, profile, params)
}

fn replay_error_at(index: usize, profile: &TripProfile, params: &VehicleParams) -> Result<f64, CalibrationError> {
    let soc = profile
        .soc_recorded
        .as_ref()
        .ok_or(CalibrationError::MissingChannel { index, channel: "SOC" })?;
    let engine = profile
        .engine_on_recorded
        .as_ref()
        .ok_or(CalibrationError::MissingChannel { index, channel: "engine" })?;
    let sim = simulate_trip(profile, &Replay(engine), soc[0].clamp(0.0, 100.0), params)
        .map_err(|source| CalibrationError::Sim { index, source })?;
    Ok(soc_mean_relative_error(&sim.soc, soc))
}

/// Mean replay error across trips.
pub fn fleet_replay_error(trips: &[TripProfile], params: &VehicleParams) -> Result<f64, CalibrationError> {
    if trips.is_empty() {
        return Err(CalibrationError::NoTrips);
    }
    let mut total = 0.0;
    for (i, p) in trips.iter().enumerate() {
        total += replay_error_at(i, p, params)?;
    }
    Ok(total / trips.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub params: VehicleParams,
    pub error_before: f64,
    pub error_after: f64,
}

#[derive(Clone, Copy)]
enum Knob {
    EtaBtw,
    EtaEtw,
    ChargeScale,
}

fn apply(base: &VehicleParams, knob: Knob, x: f64) -> VehicleParams {
    let mut p = base.clone();
    match knob {
        Knob::EtaBtw => p.eta_btw = x,
        Knob::EtaEtw => p.eta_etw = x,
        Knob::ChargeScale => p.charge_rate = base.charge_rate * x,
    }
    p
}

/// Fits `eta_btw`, `eta_etw` and the stationary charge rate to recorded SOC.
pub fn calibrate(trips: &[TripProfile], base: &VehicleParams, rounds: usize) -> Result<Calibration, CalibrationError> {
    let error_before = fleet_replay_error(trips, base)?;
    let mut params = base.clone();
    let mut best = error_before;
    let knobs: Vec<(Knob, f64, f64)> =
        alloc::vec![(Knob::EtaBtw, 0.5, 1.0), (Knob::EtaEtw, 0.4, 1.0), (Knob::ChargeScale, 0.5, 1.5)];
    for _ in 0..rounds {
        for &(knob, lo, hi) in &knobs {
            let (x, err) = golden_section(lo, hi, 30, |x| {
                // Power-limit failures (implausibly low efficiency) are
                // treated as infinitely bad.
                fleet_replay_error(trips, &apply(&params, knob, x)).unwrap_or(f64::INFINITY)
            });
            if err < best {
                params = apply(&params, knob, x);
                best = err;
            }
        }
    }
    Ok(Calibration { params, error_before, error_after: best })
}

fn golden_section(mut a: f64, mut b: f64, iters: usize, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    const R: f64 = 0.618_033_988_749_895;
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
