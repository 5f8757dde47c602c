//! Best `L_set` extraction for a recorded trip and fuel-versus-`L_set`
//! sweeps.
//!
//! The trip's minimum SOC under the thermostatic controller is, empirically,
//! non-decreasing in `L_set`: a longer effective trip length keeps the
//! reference higher and fires the engine earlier. Bisection relies on that
//! and falls back to a 1-mile grid scan when an evaluation contradicts it.

use alloc::vec::Vec;

use crate::ems::{EmsConfig, Thermostat};
use crate::preprocess::TripProfile;
use crate::vehicle::{simulate_trip, SimError, SimResult, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LsetSearchConfig {
    /// Lower search bound, miles.
    pub lo: f64,
    /// Upper search bound, miles.
    pub hi: f64,
    /// Target minimum SOC, percent.
    pub soc_target: f64,
    /// Accepted deviation from the target, percent.
    pub soc_band: f64,
    pub max_evals: usize,
    /// Bisection stops once the bracket is this narrow, miles.
    pub resolution: f64,
    /// Overrides the starting SOC; otherwise the recorded initial SOC or 100%.
    pub initial_soc: Option<f64>,
}

impl Default for LsetSearchConfig {
    fn default() -> Self {
        Self {
            lo: 5.0,
            hi: 300.0,
            soc_target: 10.0,
            soc_band: 2.0,
            max_evals: 40,
            resolution: 0.1,
            initial_soc: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LsetError {
    #[error("invalid search config: {0}")]
    Config(&'static str),
    #[error("minimum SOC {min_soc_at_hi:.2}% stays below the band even at L_set = {hi} mi")]
    Infeasible { hi: f64, min_soc_at_hi: f64 },
    #[error("minimum SOC jumps over the band near L_set = {l_set:.2} mi (got {min_soc:.2}%)")]
    BandMissed { l_set: f64, min_soc: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    Bisection,
    GridScan,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BestLset {
    Found { l_set: f64, min_soc: f64, evaluations: usize, method: SearchMethod },
    /// The battery alone keeps the minimum SOC at or above target.
    EngineNotNeeded { natural_min_soc: f64 },
}

impl BestLset {
    pub fn l_set(&self) -> Option<f64> {
        match *self {
            BestLset::Found { l_set, .. } => Some(l_set),
            BestLset::EngineNotNeeded { .. } => None,
        }
    }
}

impl LsetSearchConfig {
    pub fn validate(&self) -> Result<(), LsetError> {
        if !(self.lo > 0.0 && self.lo < self.hi) {
            return Err(LsetError::Config("need 0 < lo < hi"));
        }
        if !(self.soc_band > 0.0) {
            return Err(LsetError::Config("soc_band must be positive"));
        }
        if !(self.resolution > 0.0) {
            return Err(LsetError::Config("resolution must be positive"));
        }
        if self.max_evals < 3 {
            return Err(LsetError::Config("max_evals must be at least 3"));
        }
        Ok(())
    }
}

/// Starting SOC used for best-`L_set` extraction.
pub fn initial_soc(profile: &TripProfile, cfg: &LsetSearchConfig) -> f64 {
    cfg.initial_soc
        .or_else(|| profile.soc_recorded.as_ref().and_then(|s| s.first().copied()))
        .unwrap_or(100.0)
}

pub fn simulate_with_lset(
    profile: &TripProfile,
    params: &VehicleParams,
    ems: &EmsConfig,
    l_set: f64,
    initial_soc: f64,
) -> Result<SimResult, SimError> {
    simulate_trip(profile, &Thermostat(ems.with_lset(l_set)), initial_soc, params)
}

struct Evaluator<'a> {
    profile: &'a TripProfile,
    params: &'a VehicleParams,
    ems: &'a EmsConfig,
    soc0: f64,
    evals: usize,
}

impl Evaluator<'_> {
    fn min_soc(&mut self, l_set: f64) -> Result<f64, SimError> {
        self.evals += 1;
        Ok(simulate_with_lset(self.profile, self.params, self.ems, l_set, self.soc0)?.min_soc)
    }
}

/// Finds the `L_set` at which the trip's minimum SOC reaches the target.
///
/// Returns the upper end of the final bisection bracket, so the reported
/// value never under-shoots the target crossing by more than the resolution.
pub fn best_lset(
    profile: &TripProfile,
    params: &VehicleParams,
    ems: &EmsConfig,
    cfg: &LsetSearchConfig,
) -> Result<BestLset, LsetError> {
    cfg.validate()?;
    let mut ev = Evaluator { profile, params, ems, soc0: initial_soc(profile, cfg), evals: 0 };
    let target = cfg.soc_target;

    let f_lo = ev.min_soc(cfg.lo)?;
    if f_lo >= target {
        return Ok(BestLset::EngineNotNeeded { natural_min_soc: f_lo });
    }
    let f_hi = ev.min_soc(cfg.hi)?;
    if f_hi < target - cfg.soc_band {
        return Err(LsetError::Infeasible { hi: cfg.hi, min_soc_at_hi: f_hi });
    }
    if f_hi < target {
        return Ok(BestLset::Found {
            l_set: cfg.hi,
            min_soc: f_hi,
            evaluations: ev.evals,
            method: SearchMethod::Bisection,
        });
    }

    const MONO_EPS: f64 = 1e-9;
    let (mut a, mut fa) = (cfg.lo, f_lo);
    let (mut b, mut fb) = (cfg.hi, f_hi);
    while b - a > cfg.resolution && ev.evals < cfg.max_evals {
        let mid = 0.5 * (a + b);
        let fm = ev.min_soc(mid)?;
        if fm < fa - MONO_EPS || fm > fb + MONO_EPS {
            return grid_fallback(&mut ev, cfg);
        }
        if fm >= target {
            b = mid;
            fb = fm;
        } else {
            a = mid;
            fa = fm;
        }
    }
    if fb > target + cfg.soc_band {
        return Err(LsetError::BandMissed { l_set: b, min_soc: fb });
    }
    Ok(BestLset::Found { l_set: b, min_soc: fb, evaluations: ev.evals, method: SearchMethod::Bisection })
}

fn grid_fallback(ev: &mut Evaluator<'_>, cfg: &LsetSearchConfig) -> Result<BestLset, LsetError> {
    let mut l = libm::ceil(cfg.lo);
    while l <= cfg.hi {
        let f = ev.min_soc(l)?;
        if f >= cfg.soc_target {
            if f > cfg.soc_target + cfg.soc_band {
                return Err(LsetError::BandMissed { l_set: l, min_soc: f });
            }
            return Ok(BestLset::Found { l_set: l, min_soc: f, evaluations: ev.evals, method: SearchMethod::GridScan });
        }
        l += 1.0;
    }
    Err(LsetError::Infeasible { hi: cfg.hi, min_soc_at_hi: ev.min_soc(cfg.hi)? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub l_set: f64,
    pub outcome: Result<SweepValue, SimError>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepValue {
    pub fuel_l: f64,
    pub min_soc: f64,
}

/// One simulation per `L_set`, in input order. A failed simulation is kept
/// in place and the sweep carries on.
pub fn fuel_vs_lset(
    profile: &TripProfile,
    params: &VehicleParams,
    ems: &EmsConfig,
    lsets: &[f64],
    initial_soc: f64,
) -> Vec<SweepPoint> {
    lsets
        .iter()
        .map(|&l_set| SweepPoint {
            l_set,
            outcome: simulate_with_lset(profile, params, ems, l_set, initial_soc)
                .map(|r| SweepValue { fuel_l: r.total_fuel_l(), min_soc: r.min_soc }),
        })
        .collect()
}
