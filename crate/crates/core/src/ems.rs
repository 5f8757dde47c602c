//! Thermostatic range-extender control against a distance-indexed SOC
//! reference.

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EmsConfig {
    /// Effective trip length, miles.
    pub l_set: f64,
    /// Target end-of-trip SOC, percent.
    pub soc_tev: f64,
    /// Upper cap on the reference, percent.
    pub soc_ref_cap: f64,
    /// Turn-off band above the reference, percent.
    pub hysteresis: f64,
}

impl Default for EmsConfig {
    fn default() -> Self {
        Self { l_set: 100.0, soc_tev: 10.0, soc_ref_cap: 60.0, hysteresis: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EmsError {
    #[error("EMS config invalid: need 0 < soc_tev < soc_ref_cap <= 100, l_set > 0, hysteresis >= 0")]
    InvalidConfig,
}

impl EmsConfig {
    pub fn with_lset(self, l_set: f64) -> Self {
        Self { l_set, ..self }
    }

    pub fn validate(&self) -> Result<(), EmsError> {
        let ok = self.soc_tev > 0.0
            && self.soc_tev < self.soc_ref_cap
            && self.soc_ref_cap <= 100.0
            && self.l_set > 0.0
            && self.l_set.is_finite()
            && self.hysteresis >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(EmsError::InvalidConfig)
        }
    }
}

/// Reference SOC after `d_mi` miles: a straight ramp from 100% that reaches
/// `soc_tev` at `l_set`, capped above and clamped at 0.
pub fn soc_ref(d_mi: f64, cfg: &EmsConfig) -> f64 {
    let raw = 100.0 * (1.0 - (1.0 - cfg.soc_tev / 100.0) * d_mi / cfg.l_set);
    raw.clamp(0.0, cfg.soc_ref_cap)
}

/// On below the reference, off at or above reference + hysteresis, hold in
/// between.
pub fn thermostat_decide(d_mi: f64, soc: f64, prev_engine_on: bool, cfg: &EmsConfig) -> bool {
    let r = soc_ref(d_mi, cfg);
    if soc < r {
        true
    } else if soc >= r + cfg.hysteresis {
        false
    } else {
        prev_engine_on
    }
}

/// What the controller sees at each simulation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub step: usize,
    /// Distance travelled this trip, miles.
    pub d_mi: f64,
    pub soc: f64,
    pub v: f64,
    pub prev_engine_on: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("recorded engine trace has {len} entries, step {step} requested")]
    TraceExhausted { step: usize, len: usize },
}

/// Range-extender on/off policy. Must be a pure function of its input.
pub trait EngineController {
    fn decide(&self, input: &ControlInput) -> Result<bool, ControlError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thermostat(pub EmsConfig);

impl EngineController for Thermostat {
    fn decide(&self, input: &ControlInput) -> Result<bool, ControlError> {
        Ok(thermostat_decide(input.d_mi, input.soc, input.prev_engine_on, &self.0))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysOff;

impl EngineController for AlwaysOff {
    fn decide(&self, _: &ControlInput) -> Result<bool, ControlError> {
        Ok(false)
    }
}

/// Replays a recorded engine channel, one entry per simulation step.
#[derive(Debug, Clone, Copy)]
pub struct Replay<'a>(pub &'a [bool]);

impl EngineController for Replay<'_> {
    fn decide(&self, input: &ControlInput) -> Result<bool, ControlError> {
        self.0
            .get(input.step)
            .copied()
            .ok_or(ControlError::TraceExhausted { step: input.step, len: self.0.len() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let cfg = EmsConfig { l_set: 100.0, ..EmsConfig::default() };
        assert_eq!(soc_ref(0.0, &cfg), 60.0);
        assert!((soc_ref(100.0, &cfg) - 10.0).abs() < 1e-12);
        assert!((soc_ref(50.0, &cfg) - 55.0).abs() < 1e-12);
        assert_eq!(soc_ref(500.0, &cfg), 0.0);
    }

    #[test]
    fn thermostat_band() {
        let cfg = EmsConfig { l_set: 100.0, ..EmsConfig::default() };
        // reference is 55 at 50 miles
        assert!(thermostat_decide(50.0, 50.0, false, &cfg));
        assert!(!thermostat_decide(50.0, 62.0, true, &cfg));
        assert!(thermostat_decide(50.0, 55.5, true, &cfg));
        assert!(!thermostat_decide(50.0, 55.5, false, &cfg));
    }

    #[test]
    fn validate() {
        assert!(EmsConfig::default().validate().is_ok());
        assert!(EmsConfig { soc_tev: 70.0, ..EmsConfig::default() }.validate().is_err());
        assert!(EmsConfig { l_set: 0.0, ..EmsConfig::default() }.validate().is_err());
        assert!(EmsConfig { hysteresis: -1.0, ..EmsConfig::default() }.validate().is_err());
    }

    #[test]
    fn replay_runs_out() {
        let trace = [true, false];
        let r = Replay(&trace);
        let input = |step| ControlInput { step, d_mi: 0.0, soc: 50.0, v: 0.0, prev_engine_on: false };
        assert_eq!(r.decide(&input(0)), Ok(true));
        assert_eq!(r.decide(&input(1)), Ok(false));
        assert!(r.decide(&input(2)).is_err());
    }
}
