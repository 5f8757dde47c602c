//! TOML configuration: model defaults, per-vehicle parameter overrides,
//! file layout and directories.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rextune_core::bayes::{PriorSpec, DEFAULT_CONFIDENCE};
use rextune_core::metrics::{ReplaySettings, BASELINE_LSET};
use rextune_core::{EmsConfig, LsetSearchConfig, PreprocessConfig, VehicleParams};
use serde::{Deserialize, Serialize};

use crate::ingest::ColumnMapping;

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "REXTUNE_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("vehicle override '{vehicle}': {message}")]
    Override { vehicle: String, message: String },
    #[error("invalid {section} settings: {message}")]
    Invalid { section: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prediction {
    /// Predictive CDF level used for the next-trip `L_set`.
    pub confidence: f64,
    /// Fixed factory `L_set` the Bayesian setting is compared against, miles.
    pub baseline_lset: f64,
    /// Keep every observation in the posterior file.
    pub keep_history: bool,
}

impl Default for Prediction {
    fn default() -> Self {
        Self { confidence: DEFAULT_CONFIDENCE, baseline_lset: BASELINE_LSET, keep_history: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// One JSON posterior per vehicle.
    pub store: PathBuf,
    pub trips: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { store: "posteriors".into(), trips: "trips".into(), reports: "reports".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub vehicle: VehicleParams,
    /// Partial `vehicle` tables keyed by vehicle id.
    pub vehicles: BTreeMap<String, toml::Table>,
    pub preprocess: PreprocessConfig,
    pub ems: EmsConfig,
    pub search: LsetSearchConfig,
    pub prior: PriorSpec,
    pub prediction: Prediction,
    pub columns: ColumnMapping,
    pub paths: Paths,
}

impl GlobalConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    /// Loads `path` if given, else defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |section, message: String| ConfigError::Invalid { section, message };
        self.vehicle.validate().map_err(|e| invalid("vehicle", e.to_string()))?;
        for id in self.vehicles.keys() {
            self.params_for(id)?;
        }
        self.preprocess.validate().map_err(|e| invalid("preprocess", e.to_string()))?;
        self.ems.validate().map_err(|e| invalid("ems", e.to_string()))?;
        self.search.validate().map_err(|e| invalid("search", e.to_string()))?;
        self.prior.validate().map_err(|e| invalid("prior", e.to_string()))?;
        let c = self.prediction.confidence;
        if !(c > 0.0 && c < 1.0) {
            return Err(invalid("prediction", format!("confidence {c} must lie in (0, 1)")));
        }
        if !(self.prediction.baseline_lset > 0.0) {
            return Err(invalid("prediction", "baseline_lset must be positive".into()));
        }
        Ok(())
    }

    /// Vehicle parameters with any override for `vehicle_id` applied.
    pub fn params_for(&self, vehicle_id: &str) -> Result<VehicleParams, ConfigError> {
        let Some(over) = self.vehicles.get(vehicle_id) else {
            return Ok(self.vehicle.clone());
        };
        let err = |message: String| ConfigError::Override { vehicle: vehicle_id.to_string(), message };
        let mut base = toml::Table::try_from(&self.vehicle).map_err(|e| err(e.to_string()))?;
        for (k, v) in over {
            if !base.contains_key(k) {
                return Err(err(format!("unknown parameter '{k}'")));
            }
            base.insert(k.clone(), v.clone());
        }
        let p: VehicleParams = base.try_into().map_err(|e: toml::de::Error| err(e.to_string()))?;
        p.validate().map_err(|e| err(e.to_string()))?;
        Ok(p)
    }

    pub fn replay_settings(&self, vehicle_id: &str) -> Result<ReplaySettings, ConfigError> {
        Ok(ReplaySettings {
            params: self.params_for(vehicle_id)?,
            ems: self.ems,
            search: self.search,
            prior: self.prior,
            baseline: self.prediction.baseline_lset,
            confidence: self.prediction.confidence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = include_str!("../../../config/rextune.example.toml");

    #[test]
    fn example_parses_to_defaults_plus_overrides() {
        let cfg = GlobalConfig::from_toml(EXAMPLE, Path::new("example")).unwrap();
        assert_eq!(cfg.vehicle, VehicleParams::default());
        assert_eq!(cfg.prior, PriorSpec::default());
        assert_eq!(cfg.preprocess, PreprocessConfig::default());
        let heavy = cfg.params_for("V07").unwrap();
        assert_eq!(heavy.mass, 7400.0);
        assert_eq!(heavy.c_rr, cfg.vehicle.c_rr);
        assert_eq!(cfg.params_for("other").unwrap(), cfg.vehicle);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(GlobalConfig::from_toml("", Path::new("x")).unwrap(), GlobalConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        let bad_override = "[vehicles.V1]\nmas = 7000.0\n";
        assert!(matches!(GlobalConfig::from_toml(bad_override, Path::new("x")), Err(ConfigError::Override { .. })));
        let bad_eff = "[vehicle]\neta_btw = 1.5\n";
        assert!(matches!(GlobalConfig::from_toml(bad_eff, Path::new("x")), Err(ConfigError::Invalid { .. })));
        let typo = "[predction]\nconfidence = 0.9\n";
        assert!(matches!(GlobalConfig::from_toml(typo, Path::new("x")), Err(ConfigError::Parse { .. })));
        let conf = "[prediction]\nconfidence = 1.0\n";
        assert!(GlobalConfig::from_toml(conf, Path::new("x")).is_err());
    }
}
