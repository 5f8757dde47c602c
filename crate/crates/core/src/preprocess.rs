//! Reconstruction of 1 Hz speed/distance profiles from sparse, laggy,
//! gap-ridden telemetry.
//!
//! Pipeline, in order: fill gaps (speed with zeros, distance forward), linear
//! interpolation to 1 Hz, Gaussian smoothing of both channels, a central
//! difference speed from the smoothed distance, then replacement of stuck-at-
//! zero speed (and the samples smoothing blended it into) with the scaled
//! distance-derived speed. The scale factor is searched until the integrated
//! speed reproduces the recorded trip distance.

use alloc::string::String;
use alloc::vec::Vec;

use libm::{ceil, exp, fabs, floor};

use crate::trip::{RawSample, RawTrip};

/// Smoothed speed at or below this is treated as a stuck-at-zero reading.
const ZERO_SPEED: f64 = 1e-9;

/// Distance-derived speed above this counts as moving, m/s.
const MOVING_SPEED: f64 = 0.5;

/// Reconstructed 1 Hz trip, the simulator's input.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TripProfile {
    pub vehicle_id: String,
    /// Step, seconds.
    pub dt: f64,
    /// Speed, m/s.
    pub v: Vec<f64>,
    /// Distance travelled since trip start, m.
    pub d: Vec<f64>,
    pub soc_recorded: Option<Vec<f64>>,
    pub engine_on_recorded: Option<Vec<bool>>,
}

impl TripProfile {
    /// Builds a profile from a speed series, integrating distance with the
    /// trapezoid rule.
    pub fn from_speeds(vehicle_id: impl Into<String>, v: &[f64], dt: f64) -> Self {
        Self {
            vehicle_id: vehicle_id.into(),
            dt,
            v: v.to_vec(),
            d: integrate(v, dt),
            soc_recorded: None,
            engine_on_recorded: None,
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn distance_m(&self) -> f64 {
        self.d.last().copied().unwrap_or(0.0)
    }

    pub fn distance_mi(&self) -> f64 {
        self.distance_m() / crate::METERS_PER_MILE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PreprocessConfig {
    /// Gaussian width for the distance channel, in 1 Hz samples.
    pub sigma_distance: f64,
    /// Gaussian width for the speed channel, in 1 Hz samples.
    pub sigma_velocity: f64,
    /// Accepted gap between integrated and recorded trip distance, m.
    pub distance_tolerance: f64,
    pub max_iterations: usize,
    pub epsilon_init: f64,
    /// Bracket searched for the scale factor.
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    /// Plausibility limits; exceeding them only raises warnings.
    pub max_accel: f64,
    pub max_speed: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            sigma_distance: 3.0,
            sigma_velocity: 3.0,
            distance_tolerance: 500.0,
            max_iterations: 50,
            epsilon_init: 1.0,
            epsilon_min: 0.1,
            epsilon_max: 10.0,
            max_accel: 5.0,
            max_speed: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocessError {
    #[error("need at least {need} samples, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("cannot smooth an empty series")]
    EmptySeries,
    #[error("invalid preprocessing config: {0}")]
    Config(&'static str),
    #[error("distance match failed after {iterations} iterations; best error {best_error_m:.1} m at epsilon {best_epsilon:.4}")]
    NotConverged { iterations: usize, best_error_m: f64, best_epsilon: f64 },
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.sigma_distance > 0.0 && self.sigma_velocity > 0.0) {
            return Err(PreprocessError::Config("sigmas must be positive"));
        }
        if !(self.distance_tolerance > 0.0) {
            return Err(PreprocessError::Config("distance tolerance must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(PreprocessError::Config("max_iterations must be at least 1"));
        }
        if !(self.epsilon_min > 0.0 && self.epsilon_min < self.epsilon_max) {
            return Err(PreprocessError::Config("epsilon bracket must satisfy 0 < min < max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Warning {
    Acceleration { step: usize, accel: f64 },
    Speed { step: usize, v: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessReport {
    pub epsilon: f64,
    pub iterations: usize,
    /// Integrated minus recorded distance, m.
    pub distance_error_m: f64,
    pub corrected_points: usize,
    pub warnings: Vec<Warning>,
}

/// Zero-fills speed and forward-fills distance (leading gaps become 0).
pub fn fill_missing(trip: &RawTrip) -> RawTrip {
    let mut out = trip.clone();
    let mut last_d = 0.0;
    for s in &mut out.samples {
        s.v = Some(s.v.unwrap_or(0.0));
        match s.d {
            Some(d) => last_d = d,
            None => s.d = Some(last_d),
        }
    }
    out
}

/// Channels on the 1 Hz grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub v: Vec<f64>,
    pub d: Vec<f64>,
    pub soc: Option<Vec<f64>>,
    pub engine_on: Option<Vec<bool>>,
}

/// Linear interpolation onto integer seconds since the first sample; length
/// is `floor(duration) + 1`. Expects gaps already filled.
pub fn interpolate_1hz(trip: &RawTrip) -> Result<Resampled, PreprocessError> {
    let s = &trip.samples;
    if s.len() < 2 {
        return Err(PreprocessError::TooShort { need: 2, got: s.len() });
    }
    let t0 = s[0].t;
    let n = floor(s[s.len() - 1].t - t0) as usize + 1;
    let times: Vec<f64> = s.iter().map(|x| x.t - t0).collect();
    let v: Vec<f64> = s.iter().map(|x| x.v.unwrap_or(0.0)).collect();
    let d: Vec<f64> = s.iter().map(|x| x.d.unwrap_or(0.0)).collect();
    let soc = known_points(s, |x| x.soc).map(|(t, y)| lerp_grid(&t, &y, n));
    let engine_on = hold_grid(s, t0, n);
    Ok(Resampled { v: lerp_grid(&times, &v, n), d: lerp_grid(&times, &d, n), soc, engine_on })
}

fn known_points(s: &[RawSample], f: impl Fn(&RawSample) -> Option<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let t0 = s[0].t;
    let (t, y): (Vec<f64>, Vec<f64>) = s.iter().filter_map(|x| f(x).map(|y| (x.t - t0, y))).unzip();
    if t.is_empty() {
        None
    } else {
        Some((t, y))
    }
}

/// Piecewise-linear interpolation of `(t, y)` at `0, 1, .., n-1`, held flat
/// beyond the end points.
fn lerp_grid(t: &[f64], y: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let x = k as f64;
        while j + 1 < t.len() && t[j + 1] < x {
            j += 1;
        }
        let val = if x <= t[0] {
            y[0]
        } else if j + 1 >= t.len() {
            y[t.len() - 1]
        } else {
            let (t0, t1) = (t[j], t[j + 1]);
            y[j] + (y[j + 1] - y[j]) * (x - t0) / (t1 - t0)
        };
        out.push(val);
    }
    out
}

/// Previous-value hold of the engine channel; leading gaps read as off.
fn hold_grid(s: &[RawSample], t0: f64, n: usize) -> Option<Vec<bool>> {
    if s.iter().all(|x| x.engine_on.is_none()) {
        return None;
    }
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    let mut state = false;
    for k in 0..n {
        let x = k as f64;
        while j < s.len() && s[j].t - t0 <= x {
            if let Some(on) = s[j].engine_on {
                state = on;
            }
            j += 1;
        }
        out.push(state);
    }
    Some(out)
}

/// Normalized Gaussian kernel truncated at `4 sigma`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = ceil(4.0 * sigma) as i64;
    let mut w: Vec<f64> = (-radius..=radius)
        .map(|k| {
            let x = k as f64;
            exp(-0.5 * x * x / (sigma * sigma))
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Discrete Gaussian convolution with nearest-value edge extension.
pub fn gaussian_smooth(series: &[f64], sigma: f64) -> Result<Vec<f64>, PreprocessError> {
    if series.is_empty() {
        return Err(PreprocessError::EmptySeries);
    }
    if !(sigma > 0.0) {
        return Err(PreprocessError::Config("sigma must be positive"));
    }
    let w = gaussian_kernel(sigma);
    let radius = (w.len() / 2) as i64;
    let last = series.len() as i64 - 1;
    let out = (0..series.len() as i64)
        .map(|i| {
            w.iter()
                .enumerate()
                .map(|(j, wj)| {
                    let idx = (i + j as i64 - radius).clamp(0, last) as usize;
                    wj * series[idx]
                })
                .sum()
        })
        .collect();
    Ok(out)
}

/// Central difference speed; both end points are zero.
pub fn velocity_from_distance(d: &[f64], dt: f64) -> Result<Vec<f64>, PreprocessError> {
    if d.len() < 3 {
        return Err(PreprocessError::TooShort { need: 3, got: d.len() });
    }
    let mut v = alloc::vec![0.0; d.len()];
    for k in 1..d.len() - 1 {
        v[k] = (d[k + 1] - d[k - 1]) / (2.0 * dt);
    }
    Ok(v)
}

/// Cumulative trapezoid integral starting at 0.
pub fn integrate(v: &[f64], dt: f64) -> Vec<f64> {
    let mut d = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    for (k, &x) in v.iter().enumerate() {
        if k > 0 {
            acc += 0.5 * (v[k - 1] + x) * dt;
        }
        d.push(acc);
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rescaled {
    pub v: Vec<f64>,
    pub d: Vec<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub distance_error_m: f64,
    pub corrected_points: usize,
}

/// Replaces stuck-at-zero smoothed speed with `epsilon` times the
/// distance-derived speed and searches `epsilon` until the integrated
/// distance is within tolerance of `target_distance_m`.
///
/// `epsilon_init` is tried first; otherwise `epsilon` is bisected over
/// `[epsilon_min, epsilon_max]` on the signed distance error.
pub fn correct_and_rescale(
    v_smooth: &[f64],
    d_smooth: &[f64],
    dt: f64,
    target_distance_m: f64,
    cfg: &PreprocessConfig,
) -> Result<Rescaled, PreprocessError> {
    let v_new = velocity_from_distance(d_smooth, dt)?;
    let mask: Vec<bool> = v_smooth.iter().zip(&v_new).map(|(&vs, &vn)| vs <= ZERO_SPEED && fabs(vn) > ZERO_SPEED).collect();
    rescale_masked(v_smooth, &v_new, &mask, dt, target_distance_m, cfg)
}

/// Samples where the unsmoothed speed reads zero while the distance-derived
/// speed shows motion, widened by `radius` samples on both sides.
///
/// Smoothing blends a stuck-at-zero window into its neighbours, so the
/// smoothed speed there under-reads even though it is no longer zero; the
/// widening covers those samples too.
pub fn stuck_speed_mask(v_raw: &[f64], v_dist: &[f64], radius: usize) -> Vec<bool> {
    let n = v_raw.len();
    let mut mask = alloc::vec![false; n];
    for k in 0..n {
        if v_raw[k] <= ZERO_SPEED && v_dist[k] > MOVING_SPEED {
            let lo = k.saturating_sub(radius);
            let hi = (k + radius).min(n - 1);
            mask[lo..=hi].fill(true);
        }
    }
    mask
}

/// [`correct_and_rescale`] with a caller-chosen set of samples to replace
/// by `epsilon` times `v_dist`.
pub fn rescale_masked(
    v_smooth: &[f64],
    v_dist: &[f64],
    mask: &[bool],
    dt: f64,
    target_distance_m: f64,
    cfg: &PreprocessConfig,
) -> Result<Rescaled, PreprocessError> {
    cfg.validate()?;
    let n = v_smooth.len();
    if n < 3 {
        return Err(PreprocessError::TooShort { need: 3, got: n });
    }
    let v_new = v_dist;
    let corrected_points = mask.iter().filter(|&&m| m).count();

    let build = |eps: f64| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n)
            .map(|k| if mask[k] { (eps * v_new[k]).max(0.0) } else { v_smooth[k].max(0.0) })
            .collect();
        v[0] = 0.0;
        v[n - 1] = 0.0;
        v
    };
    let error_at = |eps: f64| -> f64 {
        let v = build(eps);
        let total: f64 = v.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
        total - target_distance_m
    };
    let finish = |eps: f64, iterations: usize| -> Rescaled {
        let v = build(eps);
        let d = integrate(&v, dt);
        let err = d[n - 1] - target_distance_m;
        Rescaled { v, d, epsilon: eps, iterations, distance_error_m: err, corrected_points }
    };

    let tol = cfg.distance_tolerance;
    let mut iterations = 1;
    let e0 = error_at(cfg.epsilon_init);
    if fabs(e0) < tol {
        return Ok(finish(cfg.epsilon_init, iterations));
    }
    let mut best = (fabs(e0), cfg.epsilon_init);

    let (mut lo, mut hi) = (cfg.epsilon_min, cfg.epsilon_max);
    let mut e_lo = f64::NAN;
    let mut e_hi = f64::NAN;
    for (eps, slot) in [(lo, &mut e_lo), (hi, &mut e_hi)] {
        if iterations >= cfg.max_iterations {
            break;
        }
        iterations += 1;
        let e = error_at(eps);
        if fabs(e) < best.0 {
            best = (fabs(e), eps);
        }
        if fabs(e) < tol {
            return Ok(finish(eps, iterations));
        }
        *slot = e;
    }
    // The error is non-decreasing in epsilon; a bracket needs a sign change.
    if !(e_lo < 0.0 && e_hi > 0.0) {
        return Err(PreprocessError::NotConverged { iterations, best_error_m: best.0, best_epsilon: best.1 });
    }
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let e = error_at(mid);
        if fabs(e) < best.0 {
            best = (fabs(e), mid);
        }
        if fabs(e) < tol {
            return Ok(finish(mid, iterations));
        }
        if e < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(PreprocessError::NotConverged { iterations, best_error_m: best.0, best_epsilon: best.1 })
}

fn plausibility(v: &[f64], dt: f64, cfg: &PreprocessConfig) -> Vec<Warning> {
    let mut out = Vec::new();
    for (step, &x) in v.iter().enumerate() {
        if x > cfg.max_speed {
            out.push(Warning::Speed { step, v: x });
        }
    }
    for (step, w) in v.windows(2).enumerate() {
        let accel = (w[1] - w[0]) / dt;
        if fabs(accel) > cfg.max_accel {
            out.push(Warning::Acceleration { step, accel });
        }
    }
    out
}

/// Full reconstruction of one trip.
pub fn preprocess_trip(trip: &RawTrip, cfg: &PreprocessConfig) -> Result<(TripProfile, PreprocessReport), PreprocessError> {
    cfg.validate()?;
    let filled = fill_missing(trip);
    let grid = interpolate_1hz(&filled)?;
    if grid.v.len() < 3 {
        return Err(PreprocessError::TooShort { need: 3, got: grid.v.len() });
    }
    let v_s = gaussian_smooth(&grid.v, cfg.sigma_velocity)?;
    let d_s = gaussian_smooth(&grid.d, cfg.sigma_distance)?;
    let first = filled.samples[0].d.unwrap_or(0.0);
    let last = filled.samples[filled.samples.len() - 1].d.unwrap_or(0.0);
    let dt = 1.0;
    let v_dist = velocity_from_distance(&d_s, dt)?;
    let radius = ceil(4.0 * cfg.sigma_velocity) as usize;
    let mask: Vec<bool> = stuck_speed_mask(&grid.v, &v_dist, radius)
        .into_iter()
        .zip(v_s.iter().zip(&v_dist))
        .map(|(stuck, (&vs, &vd))| stuck || (vs <= ZERO_SPEED && fabs(vd) > ZERO_SPEED))
        .collect();
    let r = rescale_masked(&v_s, &v_dist, &mask, dt, last - first, cfg)?;
    let warnings = plausibility(&r.v, dt, cfg);
    let report = PreprocessReport {
        epsilon: r.epsilon,
        iterations: r.iterations,
        distance_error_m: r.distance_error_m,
        corrected_points: r.corrected_points,
        warnings,
    };
    let profile = TripProfile {
        vehicle_id: trip.vehicle_id.clone(),
        dt,
        v: r.v,
        d: r.d,
        soc_recorded: grid.soc,
        engine_on_recorded: grid.engine_on,
    };
    Ok((profile, report))
}
