//! Seeded synthetic delivery fleet.
//!
//! Each vehicle gets a mean and spread of trip distance and a cruise energy
//! intensity. Trips are drive/stop sequences of trapezoidal speed legs at
//! 1 Hz. SOC and engine channels come from simulating the factory `L_set`,
//! then the trip is logged at a coarse period with optional degradations.
//! Every trip is seeded from `(seed, vehicle, trip)`, so any trip can be
//! regenerated on its own and the output never depends on call order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rextune_core::ems::Thermostat;
use rextune_core::preprocess::integrate;
use rextune_core::trip::{RawSample, RawTrip};
use rextune_core::vehicle::{battery_current, simulate_trip, SimError};
use rextune_core::{EmsConfig, TripProfile, VehicleParams, METERS_PER_MILE};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Degradation {
    /// Speed lags distance by a per-trip delay drawn from `0..=max_latency_s`.
    pub max_latency_s: u32,
    /// Expected windows per trip where speed cells are empty (GPS outage;
    /// the odometer distance is still logged).
    pub dropouts_per_trip: f64,
    pub dropout_len_s: (f64, f64),
    /// Expected windows per trip where speed reads zero while distance
    /// keeps advancing.
    pub zero_speed_per_trip: f64,
    pub zero_speed_len_s: (f64, f64),
}

impl Default for Degradation {
    fn default() -> Self {
        Self {
            max_latency_s: 0,
            dropouts_per_trip: 0.0,
            dropout_len_s: (10.0, 60.0),
            zero_speed_per_trip: 0.0,
            zero_speed_len_s: (20.0, 90.0),
        }
    }
}

impl Degradation {
    /// Latency, dropouts and stuck-zero speed all switched on.
    pub fn field() -> Self {
        Self { max_latency_s: 3, dropouts_per_trip: 2.0, zero_speed_per_trip: 2.0, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticFleetSpec {
    pub n_vehicles: usize,
    pub trips_per_vehicle: usize,
    /// Range of per-vehicle mean trip distance, miles.
    pub distance_mean_mi: (f64, f64),
    /// Range of per-vehicle trip-distance standard deviation, miles.
    pub distance_sd_mi: (f64, f64),
    pub min_distance_mi: f64,
    pub max_distance_mi: f64,
    /// Range of per-vehicle cruise energy intensity at the battery, kWh/mile.
    pub intensity_kwh_per_mi: (f64, f64),
    pub seed: u64,
    /// Logging period of the raw files, whole seconds.
    pub sample_period_s: u32,
    pub initial_soc: f64,
    /// `L_set` used to synthesize the recorded SOC and engine channels.
    pub recorded_lset: f64,
    pub degradation: Degradation,
}

impl Default for SyntheticFleetSpec {
    fn default() -> Self {
        Self {
            n_vehicles: 10,
            trips_per_vehicle: 30,
            distance_mean_mi: (30.0, 85.0),
            distance_sd_mi: (4.0, 12.0),
            min_distance_mi: 5.0,
            max_distance_mi: 140.0,
            intensity_kwh_per_mi: (0.5, 0.75),
            seed: 1,
            sample_period_s: 5,
            initial_soc: 100.0,
            recorded_lset: 100.0,
            degradation: Degradation::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FleetError {
    #[error("invalid fleet spec: {0}")]
    Spec(String),
    #[error("vehicle {vehicle} trip {trip}: {source}")]
    Sim { vehicle: String, trip: usize, source: SimError },
}

impl SyntheticFleetSpec {
    pub fn validate(&self) -> Result<(), FleetError> {
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo && hi.is_finite();
        let checks = [
            (range_ok(self.distance_mean_mi), "distance_mean_mi"),
            (range_ok(self.distance_sd_mi), "distance_sd_mi"),
            (range_ok(self.intensity_kwh_per_mi), "intensity_kwh_per_mi"),
            (self.min_distance_mi > 0.0 && self.max_distance_mi > self.min_distance_mi, "min/max_distance_mi"),
            (self.sample_period_s >= 1, "sample_period_s"),
            ((0.0..=100.0).contains(&self.initial_soc), "initial_soc"),
            (self.recorded_lset > 0.0, "recorded_lset"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, name)) => Err(FleetError::Spec(format!("{name} out of range"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleProfile {
    pub vehicle_id: String,
    pub distance_mean_mi: f64,
    pub distance_sd_mi: f64,
    pub intensity_kwh_per_mi: f64,
    /// Steady speed whose battery energy per mile equals the intensity.
    pub cruise_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrip {
    pub vehicle_id: String,
    pub index: usize,
    /// 1 Hz ground truth with the synthesized SOC and engine channels.
    pub truth: TripProfile,
    /// What the logger recorded.
    pub raw: RawTrip,
}

impl GeneratedTrip {
    pub fn file_name(&self) -> String {
        format!("{}__t{:03}.csv", self.vehicle_id, self.index)
    }
}

/// Upper `L_set` used for the feasibility check, miles.
pub const FEASIBILITY_LSET: f64 = 300.0;
/// Lowest minimum SOC accepted at [`FEASIBILITY_LSET`], percent.
pub const FEASIBLE_MIN_SOC: f64 = 12.0;
const MAX_REDRAWS: usize = 5;

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Steady speed at which battery energy per mile equals `kwh_per_mi`,
/// with the engine off.
pub fn cruise_speed_for_intensity(params: &VehicleParams, kwh_per_mi: f64) -> f64 {
    let c = params.lumped();
    let per_mile = |v: f64| (c.a + c.b * v * v) * METERS_PER_MILE / 3.6e6;
    let (mut lo, mut hi) = (0.5, 45.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if per_mile(mid) < kwh_per_mi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub struct FleetGenerator {
    spec: SyntheticFleetSpec,
    params: VehicleParams,
    vehicles: Vec<VehicleProfile>,
}

impl FleetGenerator {
    pub fn new(spec: SyntheticFleetSpec, params: VehicleParams) -> Result<Self, FleetError> {
        spec.validate()?;
        params.validate().map_err(|e| FleetError::Spec(e.to_string()))?;
        let vehicles = (0..spec.n_vehicles)
            .map(|v| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, v as u64, u64::MAX));
                let intensity = uniform(&mut rng, spec.intensity_kwh_per_mi);
                VehicleProfile {
                    vehicle_id: format!("V{v:02}"),
                    distance_mean_mi: uniform(&mut rng, spec.distance_mean_mi),
                    distance_sd_mi: uniform(&mut rng, spec.distance_sd_mi),
                    intensity_kwh_per_mi: intensity,
                    cruise_mps: cruise_speed_for_intensity(&params, intensity),
                }
            })
            .collect();
        Ok(Self { spec, params, vehicles })
    }

    pub fn spec(&self) -> &SyntheticFleetSpec {
        &self.spec
    }

    pub fn vehicles(&self) -> &[VehicleProfile] {
        &self.vehicles
    }

    /// Target distance of one trip, miles.
    pub fn trip_distance_mi(&self, vehicle: usize, trip: usize) -> f64 {
        let mut rng = self.trip_rng(vehicle, trip);
        self.draw_distance(vehicle, &mut rng)
    }

    fn trip_rng(&self, vehicle: usize, trip: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.spec.seed, vehicle as u64, trip as u64))
    }

    fn draw_distance(&self, vehicle: usize, rng: &mut ChaCha8Rng) -> f64 {
        let vp = &self.vehicles[vehicle];
        let normal = Normal::new(vp.distance_mean_mi, vp.distance_sd_mi).expect("positive sd");
        let x: f64 = normal.sample(rng);
        x.clamp(self.spec.min_distance_mi, self.spec.max_distance_mi)
    }

    /// Generates one trip. A draw the controller could not finish above
    /// `FEASIBLE_MIN_SOC` even at `L_set = FEASIBILITY_LSET` is redrawn, and
    /// after `MAX_REDRAWS` the distance is shortened until it fits.
    pub fn trip(&self, vehicle: usize, trip: usize) -> Result<GeneratedTrip, FleetError> {
        let vp = &self.vehicles[vehicle];
        let mut rng = self.trip_rng(vehicle, trip);
        let mut target_mi = self.draw_distance(vehicle, &mut rng);
        let period = self.spec.sample_period_s as usize;
        let mut attempt = 0;
        let mut truth = loop {
            let v = drive_cycle(target_mi * METERS_PER_MILE, vp.cruise_mps, period, &mut rng);
            let profile = TripProfile::from_speeds(vp.vehicle_id.as_str(), &v, 1.0);
            if self.feasible(&profile) || target_mi <= self.spec.min_distance_mi {
                break profile;
            }
            attempt += 1;
            target_mi = if attempt < MAX_REDRAWS {
                self.draw_distance(vehicle, &mut rng)
            } else {
                (0.9 * target_mi).max(self.spec.min_distance_mi)
            };
        };

        let ems = EmsConfig::default().with_lset(self.spec.recorded_lset);
        let sim = simulate_trip(&truth, &Thermostat(ems), self.spec.initial_soc, &self.params)
            .map_err(|source| FleetError::Sim { vehicle: vp.vehicle_id.clone(), trip, source })?;
        truth.soc_recorded = Some(sim.soc);
        truth.engine_on_recorded = Some(sim.engine_on);

        let raw = self.log(&truth, &mut rng);
        Ok(GeneratedTrip { vehicle_id: vp.vehicle_id.clone(), index: trip, truth, raw })
    }

    fn feasible(&self, profile: &TripProfile) -> bool {
        let ems = EmsConfig::default().with_lset(FEASIBILITY_LSET);
        simulate_trip(profile, &Thermostat(ems), self.spec.initial_soc, &self.params)
            .is_ok_and(|r| r.min_soc >= FEASIBLE_MIN_SOC)
    }

    /// Every trip of one vehicle, in order.
    pub fn vehicle_trips(&self, vehicle: usize) -> Result<Vec<GeneratedTrip>, FleetError> {
        (0..self.spec.trips_per_vehicle).map(|t| self.trip(vehicle, t)).collect()
    }

    fn log(&self, truth: &TripProfile, rng: &mut ChaCha8Rng) -> RawTrip {
        let n = truth.len();
        let soc = truth.soc_recorded.as_ref().expect("simulated");
        let engine = truth.engine_on_recorded.as_ref().expect("simulated");
        let lumped = self.params.lumped();
        let deg = &self.spec.degradation;

        // Per-second speed reading after latency and stuck-zero windows.
        let latency = if deg.max_latency_s > 0 { rng.random_range(0..=deg.max_latency_s) as usize } else { 0 };
        let mut v_read: Vec<f64> = (0..n).map(|k| truth.v[k.saturating_sub(latency)]).collect();
        for (start, len) in windows(rng, n, deg.zero_speed_per_trip, deg.zero_speed_len_s) {
            v_read[start..start + len].fill(0.0);
        }
        let mut blank = vec![false; n];
        for (start, len) in windows(rng, n, deg.dropouts_per_trip, deg.dropout_len_s) {
            blank[start..start + len].fill(true);
        }

        let step = self.spec.sample_period_s as usize;
        let samples = (0..n)
            .step_by(step)
            .map(|k| {
                let accel = if k + 1 < n { truth.v[k + 1] - truth.v[k] } else { 0.0 };
                let i_batt = if truth.v[k] == 0.0 && engine[k] {
                    -self.params.charge_rate / 100.0 * self.params.capacity_coulombs()
                } else {
                    let p = rextune_core::vehicle::battery_power(truth.v[k], accel, engine[k], &lumped);
                    battery_current(soc[k], p, &self.params).unwrap_or(f64::NAN)
                };
                let v_batt = self.params.voc(soc[k]) - i_batt * self.params.r0;
                let hidden = blank[k] && k != 0 && k != n - 1;
                RawSample {
                    t: k as f64,
                    v: (!hidden).then_some(v_read[k]),
                    d: Some(truth.d[k]),
                    soc: Some(soc[k]),
                    engine_on: Some(engine[k]),
                    v_batt: v_batt.is_finite().then_some(v_batt),
                    i_batt: i_batt.is_finite().then_some(i_batt),
                }
            })
            .collect();
        RawTrip::new(truth.vehicle_id.as_str(), samples).expect("generator emits valid trips")
    }
}

/// Random windows `(start, len)` inside `[1, n - 1)`, with a count whose
/// mean is `rate`.
fn windows(rng: &mut ChaCha8Rng, n: usize, rate: f64, len_s: (f64, f64)) -> Vec<(usize, usize)> {
    let count = rate.floor() as usize + usize::from(rng.random::<f64>() < rate.fract());
    let mut out = Vec::new();
    for _ in 0..count {
        let len = uniform(rng, len_s).round().max(1.0) as usize;
        if n < len + 3 {
            continue;
        }
        let start = rng.random_range(1..n - len - 1);
        out.push((start, len));
    }
    out
}

/// 1 Hz speed trace of stop-to-stop legs summing to about `target_m`,
/// starting and ending at rest, padded with rest so its duration is a
/// whole number of logging periods.
fn drive_cycle(target_m: f64, cruise: f64, period: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v = vec![0.0];
    let mut covered = 0.0;
    while covered < target_m - 50.0 {
        let remaining = target_m - covered;
        let leg = (uniform(rng, (0.3, 2.5)) * METERS_PER_MILE).min(remaining);
        let speed = (cruise * uniform(rng, (0.85, 1.15))).min(38.0);
        let accel = uniform(rng, (0.8, 1.5));
        let before = v.len() - 1;
        trapezoid_leg(&mut v, leg, speed, accel);
        covered += integrate(&v[before..], 1.0).last().copied().unwrap_or(0.0);
        let dwell = rng.random_range(30..300);
        v.extend(std::iter::repeat_n(0.0, dwell));
    }
    while (v.len() - 1) % period != 0 {
        v.push(0.0);
    }
    v
}

/// Appends an accelerate-cruise-brake leg of about `dist` meters.
fn trapezoid_leg(v: &mut Vec<f64>, dist: f64, speed: f64, accel: f64) {
    // Peak speed drops when the leg is too short to reach cruise.
    let peak = speed.min((dist * accel).sqrt());
    let ramp_t = peak / accel;
    let cruise_t = ((dist - peak * peak / accel) / peak).max(0.0);
    let total = 2.0 * ramp_t + cruise_t;
    let steps = total.ceil() as usize;
    for k in 1..=steps {
        let t = k as f64;
        let s = if t < ramp_t {
            accel * t
        } else if t < ramp_t + cruise_t {
            peak
        } else {
            (accel * (total - t)).max(0.0)
        };
        v.push(s);
    }
    if *v.last().unwrap() != 0.0 {
        v.push(0.0);
    }
}
