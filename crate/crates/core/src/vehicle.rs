//! Quasi-static EREV powertrain: road-load battery power, equivalent-circuit
//! SOC dynamics, stationary charging and constant-rate fuel burn.
//!
//! Road grade is fixed at zero. The range extender runs at a single operating
//! point, so its contribution is a constant electrical power while on.

use alloc::vec::Vec;

use libm::sqrt;

use crate::ems::{ControlError, ControlInput, EngineController};
use crate::preprocess::TripProfile;
use crate::METERS_PER_MILE;

/// Simulation step, seconds.
pub const SIM_DT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct VehicleParams {
    /// Total mass, kg.
    pub mass: f64,
    /// Gravity, N/kg.
    pub gravity: f64,
    pub c_rr: f64,
    pub c_d: f64,
    /// Frontal area, m^2.
    pub frontal_area: f64,
    /// Air density, kg/m^3.
    pub air_density: f64,
    pub eta_btw: f64,
    pub eta_etw: f64,
    /// Range-extender electrical power, W.
    pub engine_power: f64,
    /// Battery capacity, Ah.
    pub capacity_ah: f64,
    /// Usable energy, kWh (grid-energy accounting).
    pub usable_capacity_kwh: f64,
    /// Internal resistance, ohm.
    pub r0: f64,
    /// Open-circuit voltage as `(soc_pct, volts)` breakpoints.
    pub voc_breakpoints: Vec<(f64, f64)>,
    /// Stationary charge rate with the engine on, %/s.
    pub charge_rate: f64,
    /// Fuel rate with the engine on, L/s.
    pub fuel_rate: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let engine_power = 11_000.0;
        let usable_capacity_kwh = 56.0;
        let nominal_voltage = 385.0;
        Self {
            mass: 6800.0,
            gravity: 9.81,
            c_rr: 0.008,
            c_d: 0.6,
            frontal_area: 7.0,
            air_density: 1.2,
            eta_btw: 0.85,
            eta_etw: 0.80,
            engine_power,
            capacity_ah: usable_capacity_kwh * 1000.0 / nominal_voltage,
            usable_capacity_kwh,
            r0: 0.05,
            voc_breakpoints: alloc::vec![(0.0, 330.0), (20.0, 360.0), (100.0, 398.0)],
            // 90% generator-to-battery efficiency, expressed in %/s
            charge_rate: engine_power * 0.9 / (usable_capacity_kwh * 3.6e6) * 100.0,
            fuel_rate: 0.00125,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("vehicle parameter {0} must be positive and finite")]
    NonPositive(&'static str),
    #[error("efficiency {0} must lie in (0, 1]")]
    Efficiency(&'static str),
    #[error("open-circuit voltage breakpoints must be at least 2, strictly increasing in SOC, volts in [300, 400]")]
    Breakpoints,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("step {step}: battery power {power_w:.0} W exceeds deliverable power {max_w:.0} W")]
    PowerLimit { step: usize, power_w: f64, max_w: f64 },
    #[error("initial SOC {0} outside [0, 100]")]
    InitialSoc(f64),
    #[error("trip profile is empty")]
    EmptyProfile,
    #[error("step {step}: controller failed: {source}")]
    Controller { step: usize, source: ControlError },
    #[error(transparent)]
    Params(#[from] ParamError),
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, x) in [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("c_rr", self.c_rr),
            ("c_d", self.c_d),
            ("frontal_area", self.frontal_area),
            ("air_density", self.air_density),
            ("engine_power", self.engine_power),
            ("capacity_ah", self.capacity_ah),
            ("usable_capacity_kwh", self.usable_capacity_kwh),
            ("r0", self.r0),
            ("charge_rate", self.charge_rate),
            ("fuel_rate", self.fuel_rate),
        ] {
            if !(x.is_finite() && x > 0.0) {
                return Err(ParamError::NonPositive(name));
            }
        }
        for (name, x) in [("eta_btw", self.eta_btw), ("eta_etw", self.eta_etw)] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(ParamError::Efficiency(name));
            }
        }
        let bp = &self.voc_breakpoints;
        if bp.len() < 2
            || bp.windows(2).any(|w| w[1].0 <= w[0].0)
            || bp.iter().any(|&(_, v)| !(300.0..=400.0).contains(&v))
        {
            return Err(ParamError::Breakpoints);
        }
        Ok(())
    }

    pub fn lumped(&self) -> LumpedCoeffs {
        LumpedCoeffs {
            a: self.c_rr * self.mass * self.gravity / self.eta_btw,
            b: 0.5 * self.c_d * self.frontal_area * self.air_density / self.eta_btw,
            c: self.mass / self.eta_btw,
            d: self.engine_power * self.eta_etw / self.eta_btw,
        }
    }

    /// Open-circuit voltage, linear between breakpoints and held flat outside.
    pub fn voc(&self, soc: f64) -> f64 {
        let bp = &self.voc_breakpoints;
        if soc <= bp[0].0 {
            return bp[0].1;
        }
        for w in bp.windows(2) {
            let ((s0, v0), (s1, v1)) = (w[0], w[1]);
            if soc <= s1 {
                return v0 + (v1 - v0) * (soc - s0) / (s1 - s0);
            }
        }
        bp[bp.len() - 1].1
    }

    /// Capacity in coulombs.
    pub fn capacity_coulombs(&self) -> f64 {
        self.capacity_ah * 3600.0
    }
}

/// Constant groups of the battery-power expression
/// `P_b = a v + b v^3 + c a v - d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LumpedCoeffs {
    /// Rolling resistance, W per m/s.
    pub a: f64,
    /// Aerodynamic drag, W per (m/s)^3.
    pub b: f64,
    /// Inertia, kg.
    pub c: f64,
    /// Engine contribution at the battery while on, W.
    pub d: f64,
}

/// Battery power in W; negative when regenerating or net charging.
pub fn battery_power(v: f64, accel: f64, engine_on: bool, p: &LumpedCoeffs) -> f64 {
    let engine = if engine_on { p.d } else { 0.0 };
    p.a * v + p.b * v * v * v + p.c * accel * v - engine
}

/// Battery current in A for a power draw, from `P = Voc I - R0 I^2`.
///
/// Returns `None` when the demand exceeds `Voc^2 / 4 R0`.
pub fn battery_current(soc: f64, power_w: f64, p: &VehicleParams) -> Option<f64> {
    let voc = p.voc(soc);
    let disc = voc * voc - 4.0 * p.r0 * power_w;
    if disc < 0.0 {
        return None;
    }
    // (voc - sqrt(disc)) / (2 r0), rationalized to avoid cancellation
    Some(2.0 * power_w / (voc + sqrt(disc)))
}

/// SOC rate in %/s, or `None` past the battery's power limit.
pub fn soc_derivative(soc: f64, power_w: f64, p: &VehicleParams) -> Option<f64> {
    battery_current(soc, power_w, p).map(|i| -i / p.capacity_coulombs() * 100.0)
}

/// Largest power the battery can deliver at `soc`, W.
pub fn max_battery_power(soc: f64, p: &VehicleParams) -> f64 {
    let voc = p.voc(soc);
    voc * voc / (4.0 * p.r0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocStep {
    pub soc: f64,
    /// True when the raw update left `[0, 100]` and was clamped.
    pub clamped: bool,
}

/// One explicit-Euler SOC step. A stopped vehicle with the engine on charges
/// at the fixed stationary rate instead of going through the circuit model.
pub fn step_soc(
    soc: f64,
    v: f64,
    accel: f64,
    engine_on: bool,
    dt: f64,
    params: &VehicleParams,
    lumped: &LumpedCoeffs,
) -> Option<SocStep> {
    let raw = if v == 0.0 && engine_on {
        soc + params.charge_rate * dt
    } else {
        let pb = battery_power(v, accel, engine_on, lumped);
        soc + soc_derivative(soc, pb, params)? * dt
    };
    let clamped = raw.clamp(0.0, 100.0);
    Some(SocStep { soc: clamped, clamped: clamped != raw })
}

pub fn step_fuel(fuel_l: f64, engine_on: bool, dt: f64, p: &VehicleParams) -> f64 {
    if engine_on {
        fuel_l + p.fuel_rate * dt
    } else {
        fuel_l
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// SOC at each profile sample, percent.
    pub soc: Vec<f64>,
    /// Engine state over `[t, t + dt)`; the final entry is always off.
    pub engine_on: Vec<bool>,
    /// Cumulative fuel at each sample, L.
    pub fuel_l: Vec<f64>,
    pub min_soc: f64,
    pub final_soc: f64,
    /// Grid energy drawn from the battery, kWh (negative if the trip ended
    /// above its starting SOC).
    pub electric_energy_kwh: f64,
    /// Steps at which the SOC update was clamped to `[0, 100]`.
    pub clamp_steps: Vec<usize>,
}

impl SimResult {
    pub fn total_fuel_l(&self) -> f64 {
        self.fuel_l.last().copied().unwrap_or(0.0)
    }

    pub fn engine_on_seconds(&self) -> f64 {
        self.engine_on.iter().filter(|&&on| on).count() as f64 * SIM_DT
    }
}

/// Runs the vehicle over a 1 Hz profile, asking `controller` for the engine
/// state at every sample. Acceleration is the forward difference of speed.
pub fn simulate_trip<C: EngineController + ?Sized>(
    profile: &TripProfile,
    controller: &C,
    initial_soc: f64,
    params: &VehicleParams,
) -> Result<SimResult, SimError> {
    if !(0.0..=100.0).contains(&initial_soc) {
        return Err(SimError::InitialSoc(initial_soc));
    }
    let n = profile.v.len();
    if n == 0 {
        return Err(SimError::EmptyProfile);
    }
    let lumped = params.lumped();
    let dt = profile.dt;
    let mut soc = Vec::with_capacity(n);
    let mut engine = Vec::with_capacity(n);
    let mut fuel = Vec::with_capacity(n);
    let mut clamp_steps = Vec::new();
    let mut s = initial_soc;
    let mut f = 0.0;
    let mut prev_on = false;
    let mut min_soc = s;
    for k in 0..n {
        soc.push(s);
        fuel.push(f);
        min_soc = min_soc.min(s);
        if k + 1 == n {
            engine.push(false);
            break;
        }
        let v = profile.v[k];
        let accel = (profile.v[k + 1] - v) / dt;
        let input = ControlInput {
            step: k,
            d_mi: profile.d[k] / METERS_PER_MILE,
            soc: s,
            v,
            prev_engine_on: prev_on,
        };
        let on = controller.decide(&input).map_err(|source| SimError::Controller { step: k, source })?;
        let next = step_soc(s, v, accel, on, dt, params, &lumped).ok_or_else(|| SimError::PowerLimit {
            step: k,
            power_w: battery_power(v, accel, on, &lumped),
            max_w: max_battery_power(s, params),
        })?;
        if next.clamped {
            clamp_steps.push(k);
        }
        f = step_fuel(f, on, dt, params);
        engine.push(on);
        prev_on = on;
        s = next.soc;
    }
    let final_soc = s;
    Ok(SimResult {
        electric_energy_kwh: (initial_soc - final_soc) / 100.0 * params.usable_capacity_kwh,
        soc,
        engine_on: engine,
        fuel_l: fuel,
        min_soc,
        final_soc,
        clamp_steps,
    })
}
