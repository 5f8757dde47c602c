//! Raw trip telemetry as recorded on the vehicle, before reconstruction.

use alloc::string::String;
use alloc::vec::Vec;

use crate::METERS_PER_MILE;

/// Distance may step backwards by up to this much (sensor quantization)
/// before a trip is rejected.
pub const DISTANCE_JITTER_M: f64 = 1.0;

/// One telemetry row. Missing cells are `None`, never zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RawSample {
    /// Seconds since trip start.
    pub t: f64,
    /// Vehicle speed, m/s.
    pub v: Option<f64>,
    /// Cumulative distance, m.
    pub d: Option<f64>,
    /// State of charge, percent of usable capacity.
    pub soc: Option<f64>,
    pub engine_on: Option<bool>,
    pub v_batt: Option<f64>,
    pub i_batt: Option<f64>,
}

impl RawSample {
    pub fn at(t: f64) -> Self {
        Self { t, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RawTrip {
    pub vehicle_id: String,
    pub samples: Vec<RawSample>,
    /// Nominal sampling period in seconds (median row spacing).
    pub sample_period: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TripError {
    #[error("trip has no samples")]
    Empty,
    #[error("trip needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("row {row}: timestamp {t} is not after the previous one")]
    NonIncreasingTime { row: usize, t: f64 },
    #[error("row {row}: distance decreased by {drop:.3} m")]
    DecreasingDistance { row: usize, drop: f64 },
    #[error("row {row}: speed {v} is negative")]
    NegativeSpeed { row: usize, v: f64 },
    #[error("row {row}: SOC {soc} outside [0, 100]")]
    SocOutOfRange { row: usize, soc: f64 },
    #[error("row {row}: non-finite value in column {column}")]
    NonFinite { row: usize, column: &'static str },
}

impl RawTrip {
    /// Validates the samples and builds a trip.
    ///
    /// Distance steps backwards of at most [`DISTANCE_JITTER_M`] are absorbed
    /// by holding the previous value, so the stored distance is non-decreasing.
    pub fn new(vehicle_id: impl Into<String>, mut samples: Vec<RawSample>) -> Result<Self, TripError> {
        if samples.is_empty() {
            return Err(TripError::Empty);
        }
        if samples.len() < 2 {
            return Err(TripError::TooFewSamples(samples.len()));
        }
        let mut last_d: Option<f64> = None;
        for (row, s) in samples.iter_mut().enumerate() {
            check_finite(row, "time_s", Some(s.t))?;
            check_finite(row, "speed_mps", s.v)?;
            check_finite(row, "distance_m", s.d)?;
            check_finite(row, "soc_pct", s.soc)?;
            check_finite(row, "batt_volts", s.v_batt)?;
            check_finite(row, "batt_amps", s.i_batt)?;
            if let Some(v) = s.v {
                if v < 0.0 {
                    return Err(TripError::NegativeSpeed { row, v });
                }
            }
            if let Some(soc) = s.soc {
                if !(0.0..=100.0).contains(&soc) {
                    return Err(TripError::SocOutOfRange { row, soc });
                }
            }
            if let Some(d) = s.d {
                if let Some(prev) = last_d {
                    if d < prev - DISTANCE_JITTER_M {
                        return Err(TripError::DecreasingDistance { row, drop: prev - d });
                    }
                    if d < prev {
                        s.d = Some(prev);
                    }
                }
                last_d = s.d;
            }
        }
        for row in 1..samples.len() {
            if samples[row].t <= samples[row - 1].t {
                return Err(TripError::NonIncreasingTime { row, t: samples[row].t });
            }
        }
        let sample_period = median_spacing(&samples);
        Ok(Self { vehicle_id: vehicle_id.into(), samples, sample_period })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }

    /// Last recorded distance cell, or 0 when the distance channel is empty.
    pub fn final_distance_m(&self) -> f64 {
        self.samples.iter().rev().find_map(|s| s.d).unwrap_or(0.0)
    }

    pub fn initial_soc(&self) -> Option<f64> {
        self.samples.iter().find_map(|s| s.soc)
    }
}

fn check_finite(row: usize, column: &'static str, x: Option<f64>) -> Result<(), TripError> {
    match x {
        Some(x) if !x.is_finite() => Err(TripError::NonFinite { row, column }),
        _ => Ok(()),
    }
}

fn median_spacing(samples: &[RawSample]) -> f64 {
    let mut gaps: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    if n % 2 == 1 {
        gaps[n / 2]
    } else {
        0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
    }
}

/// Per-trip summary record, as kept alongside the row-level data.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TripSummary {
    pub distance_mi: f64,
    pub duration_s: f64,
    pub start_soc: Option<f64>,
    pub end_soc: Option<f64>,
    /// Engine-on seconds implied by the recorded engine channel, if any.
    pub engine_on_s: Option<f64>,
}

pub fn trip_summary(trip: &RawTrip) -> TripSummary {
    let engine_on_s = if trip.samples.iter().any(|s| s.engine_on.is_some()) {
        Some(
            trip.samples
                .windows(2)
                .filter(|w| w[0].engine_on == Some(true))
                .map(|w| w[1].t - w[0].t)
                .sum(),
        )
    } else {
        None
    };
    TripSummary {
        distance_mi: trip.final_distance_m() / METERS_PER_MILE,
        duration_s: trip.duration_s(),
        start_soc: trip.initial_soc(),
        end_soc: trip.samples.iter().rev().find_map(|s| s.soc),
        engine_on_s,
    }
}
