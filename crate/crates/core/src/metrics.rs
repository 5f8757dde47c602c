//! Fuel and MPGe accounting, baseline-versus-predicted comparisons, fleet
//! aggregation and plot-ready tables.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::bayes::{init_state, BayesError, PosteriorState, PriorSpec};
use crate::ems::{soc_ref, EmsConfig};
use crate::lset::{best_lset, initial_soc, simulate_with_lset, BestLset, LsetError, LsetSearchConfig, SweepPoint};
use crate::preprocess::TripProfile;
use crate::vehicle::{SimError, SimResult, VehicleParams};
use crate::{LITERS_PER_GALLON, METERS_PER_MILE};

/// kWh of electricity counted as one gallon of gasoline.
pub const KWH_PER_GALLON: f64 = 33.7;

/// Programmed `L_set` before any tuning, miles.
pub const BASELINE_LSET: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("MPGe undefined: fuel {fuel_gal} gal + electric {electric_kwh} kWh is not positive")]
    UndefinedMpge { fuel_gal: f64, electric_kwh: f64 },
    #[error("{arm} arm: {source}")]
    Simulation { arm: Arm, source: SimError },
    #[error("no comparisons to aggregate")]
    Empty,
    #[error("trip {trip}: {source}")]
    Lset { trip: usize, source: LsetError },
    #[error(transparent)]
    Bayes(#[from] BayesError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Baseline,
    Bayes,
}

impl core::fmt::Display for Arm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Arm::Baseline => "baseline",
            Arm::Bayes => "bayes",
        })
    }
}

/// Miles per gallon equivalent.
pub fn mpge(distance_mi: f64, fuel_gal: f64, electric_kwh: f64) -> Result<f64, MetricsError> {
    let denom = fuel_gal + electric_kwh / KWH_PER_GALLON;
    if !(denom > 0.0) {
        return Err(MetricsError::UndefinedMpge { fuel_gal, electric_kwh });
    }
    Ok(distance_mi / denom)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TripComparison {
    pub vehicle_id: String,
    pub trip_id: String,
    pub distance_mi: f64,
    pub l_set_baseline: f64,
    pub l_set_bayes: f64,
    pub fuel_baseline_l: f64,
    pub fuel_bayes_l: f64,
    pub mpge_baseline: Option<f64>,
    pub mpge_bayes: Option<f64>,
    pub fuel_reduction_pct: f64,
    pub min_soc_bayes: f64,
}

/// Both arms of a comparison with their traces.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRun {
    pub comparison: TripComparison,
    pub baseline: SimResult,
    pub bayes: SimResult,
}

fn reduction_pct(baseline: f64, candidate: f64) -> f64 {
    if baseline > 0.0 {
        100.0 * (baseline - candidate) / baseline
    } else {
        0.0
    }
}

/// Simulates the trip twice from the same starting SOC, once per `L_set`.
#[allow(clippy::too_many_arguments)]
pub fn compare_trip(
    trip_id: &str,
    profile: &TripProfile,
    params: &VehicleParams,
    ems: &EmsConfig,
    l_set_baseline: f64,
    l_set_bayes: f64,
    initial_soc: f64,
) -> Result<TripRun, MetricsError> {
    let baseline = simulate_with_lset(profile, params, ems, l_set_baseline, initial_soc)
        .map_err(|source| MetricsError::Simulation { arm: Arm::Baseline, source })?;
    let bayes = simulate_with_lset(profile, params, ems, l_set_bayes, initial_soc)
        .map_err(|source| MetricsError::Simulation { arm: Arm::Bayes, source })?;
    let distance_mi = profile.distance_m() / METERS_PER_MILE;
    let mpge_of = |r: &SimResult| mpge(distance_mi, r.total_fuel_l() / LITERS_PER_GALLON, r.electric_energy_kwh).ok();
    let comparison = TripComparison {
        vehicle_id: profile.vehicle_id.clone(),
        trip_id: trip_id.to_string(),
        distance_mi,
        l_set_baseline,
        l_set_bayes,
        fuel_baseline_l: baseline.total_fuel_l(),
        fuel_bayes_l: bayes.total_fuel_l(),
        mpge_baseline: mpge_of(&baseline),
        mpge_bayes: mpge_of(&bayes),
        fuel_reduction_pct: reduction_pct(baseline.total_fuel_l(), bayes.total_fuel_l()),
        min_soc_bayes: bayes.min_soc,
    };
    Ok(TripRun { comparison, baseline, bayes })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Aggregate {
    pub trips: usize,
    pub fuel_baseline_l: f64,
    pub fuel_bayes_l: f64,
    /// `100 (sum baseline - sum bayes) / sum baseline`.
    pub fuel_reduction_pct: f64,
    /// Unweighted mean of per-trip reductions.
    pub mean_trip_fuel_reduction_pct: f64,
    /// Mean per-trip MPGe improvement over trips where both MPGe exist.
    pub mpge_improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleRow {
    pub vehicle_id: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FleetReport {
    pub total: Aggregate,
    pub per_vehicle: Vec<VehicleRow>,
}

fn aggregate<'a>(items: impl Iterator<Item = &'a TripComparison>) -> Aggregate {
    let mut agg = Aggregate {
        trips: 0,
        fuel_baseline_l: 0.0,
        fuel_bayes_l: 0.0,
        fuel_reduction_pct: 0.0,
        mean_trip_fuel_reduction_pct: 0.0,
        mpge_improvement_pct: 0.0,
    };
    let mut mpge_n = 0usize;
    for c in items {
        agg.trips += 1;
        agg.fuel_baseline_l += c.fuel_baseline_l;
        agg.fuel_bayes_l += c.fuel_bayes_l;
        agg.mean_trip_fuel_reduction_pct += c.fuel_reduction_pct;
        if let (Some(b), Some(y)) = (c.mpge_baseline, c.mpge_bayes) {
            agg.mpge_improvement_pct += 100.0 * (y - b) / b;
            mpge_n += 1;
        }
    }
    if agg.trips > 0 {
        agg.mean_trip_fuel_reduction_pct /= agg.trips as f64;
    }
    if mpge_n > 0 {
        agg.mpge_improvement_pct /= mpge_n as f64;
    }
    agg.fuel_reduction_pct = reduction_pct(agg.fuel_baseline_l, agg.fuel_bayes_l);
    agg
}

/// Fleet totals plus one row per vehicle, in first-seen order.
pub fn fleet_report(comparisons: &[TripComparison]) -> Result<FleetReport, MetricsError> {
    if comparisons.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut ids: Vec<&str> = Vec::new();
    for c in comparisons {
        if !ids.contains(&c.vehicle_id.as_str()) {
            ids.push(&c.vehicle_id);
        }
    }
    let per_vehicle = ids
        .into_iter()
        .map(|id| VehicleRow {
            vehicle_id: id.to_string(),
            aggregate: aggregate(comparisons.iter().filter(|c| c.vehicle_id == id)),
        })
        .collect();
    Ok(FleetReport { total: aggregate(comparisons.iter()), per_vehicle })
}

/// Rectangular numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// SOC and reference trajectories for both arms.
pub fn soc_trajectory_table(profile: &TripProfile, run: &TripRun, ems: &EmsConfig) -> Table {
    let mut t = Table::new(&["time_s", "distance_mi", "soc_baseline", "soc_bayes", "soc_ref_baseline", "soc_ref_bayes"]);
    let base = ems.with_lset(run.comparison.l_set_baseline);
    let bayes = ems.with_lset(run.comparison.l_set_bayes);
    for k in 0..profile.len() {
        let d_mi = profile.d[k] / METERS_PER_MILE;
        t.push(alloc::vec![
            k as f64 * profile.dt,
            d_mi,
            run.baseline.soc[k],
            run.bayes.soc[k],
            soc_ref(d_mi, &base),
            soc_ref(d_mi, &bayes),
        ]);
    }
    t
}

/// Engine on/off for both arms as 0/1.
pub fn engine_trace_table(profile: &TripProfile, run: &TripRun) -> Table {
    let mut t = Table::new(&["time_s", "engine_baseline", "engine_bayes"]);
    for k in 0..profile.len() {
        t.push(alloc::vec![k as f64 * profile.dt, flag(run.baseline.engine_on[k]), flag(run.bayes.engine_on[k])]);
    }
    t
}

/// Fuel and minimum SOC per `L_set`; failed simulations are omitted.
pub fn sweep_table(points: &[SweepPoint]) -> Table {
    let mut t = Table::new(&["l_set_mi", "fuel_l", "min_soc"]);
    for p in points {
        if let Ok(v) = &p.outcome {
            t.push(alloc::vec![p.l_set, v.fuel_l, v.min_soc]);
        }
    }
    t
}

/// Best and predicted `L_set` against trip index.
pub fn lhat_table(replay: &VehicleReplay, baseline: f64) -> Table {
    let mut t = Table::new(&["trip_index", "best_lset_mi", "lhat_mi", "baseline_mi", "engine_not_needed"]);
    for (i, r) in replay.trips.iter().enumerate() {
        t.push(alloc::vec![
            i as f64,
            r.observation.unwrap_or(f64::NAN),
            r.lhat,
            baseline,
            flag(matches!(r.best, BestLset::EngineNotNeeded { .. })),
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTrip {
    pub comparison: TripComparison,
    /// Prediction in force for this trip.
    pub lhat: f64,
    pub best: BestLset,
    /// Value fed to the posterior: best `L_set`, or the trip distance for
    /// trips that never needed the engine. `None` for zero-distance trips.
    pub observation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleReplay {
    pub trips: Vec<ReplayTrip>,
    pub final_state: PosteriorState,
}

/// Observation recorded for a trip: the best `L_set`, or the trip distance
/// (a lower bound) when the engine was not needed.
pub fn observation_for(best: &BestLset, profile: &TripProfile) -> Option<f64> {
    match *best {
        BestLset::Found { l_set, .. } => Some(l_set),
        BestLset::EngineNotNeeded { .. } => {
            let d = profile.distance_mi();
            (d > 0.0).then_some(d)
        }
    }
}

/// Settings shared by a sequential replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySettings {
    pub params: VehicleParams,
    pub ems: EmsConfig,
    pub search: LsetSearchConfig,
    pub prior: PriorSpec,
    pub baseline: f64,
    pub confidence: f64,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        Self {
            params: VehicleParams::default(),
            ems: EmsConfig::default(),
            search: LsetSearchConfig::default(),
            prior: PriorSpec::default(),
            baseline: BASELINE_LSET,
            confidence: crate::bayes::DEFAULT_CONFIDENCE,
        }
    }
}

/// Runs one vehicle's trips in order: predict, drive both arms, extract the
/// trip's best `L_set`, update the posterior.
pub fn replay_vehicle(vehicle_id: &str, profiles: &[TripProfile], s: &ReplaySettings) -> Result<VehicleReplay, MetricsError> {
    let mut state = init_state(&s.prior, vehicle_id);
    let mut trips = Vec::with_capacity(profiles.len());
    for (i, profile) in profiles.iter().enumerate() {
        let lhat = state.predict_lset(s.confidence)?;
        let soc0 = initial_soc(profile, &s.search);
        let trip_id = alloc::format!("{vehicle_id}-{i:03}");
        let run = compare_trip(&trip_id, profile, &s.params, &s.ems, s.baseline, lhat, soc0)?;
        let best = best_lset(profile, &s.params, &s.ems, &s.search).map_err(|source| MetricsError::Lset { trip: i, source })?;
        let observation = observation_for(&best, profile);
        if let Some(x) = observation {
            state = state.update(x)?;
        }
        trips.push(ReplayTrip { comparison: run.comparison, lhat, best, observation });
    }
    Ok(VehicleReplay { trips, final_state: state })
}
