//! Per-vehicle posterior files.
//!
//! Each vehicle has `<dir>/<vehicle_id>.json`, replaced atomically on every
//! write. Read-modify-write cycles hold an advisory lock on
//! `<dir>/<vehicle_id>.lock`, so concurrent observers of one vehicle are
//! serialized while different vehicles proceed independently.

use std::fs::{self, File, OpenOptions, TryLockError};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use rextune_core::bayes::{init_state, PosteriorState, PriorSpec};
use serde::{Deserialize, Serialize};

use crate::ingest::{write_atomic, IngestError};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: corrupt posterior file: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("vehicle '{vehicle}' is locked by another writer (gave up after {attempts} attempts)")]
    Locked { vehicle: String, attempts: u32 },
    #[error("'{0}' cannot be used as a vehicle id in file names")]
    BadVehicleId(String),
}

/// On-disk posterior document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPosterior {
    pub vehicle_id: String,
    pub mu: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
    pub n_trips: u64,
    /// RFC 3339 timestamp of the last write.
    pub updated_at: String,
    /// Trips whose observation was only the trip distance because the
    /// engine never needed to run.
    #[serde(default)]
    pub engine_not_needed_trips: u64,
    /// Prediction for the next trip at the time of the last write, miles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_lset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<f64>>,
}

impl StoredPosterior {
    pub fn fresh(prior: &PriorSpec, vehicle_id: &str, keep_history: bool) -> Self {
        let mut s = init_state(prior, vehicle_id);
        if keep_history {
            s = s.with_history();
        }
        Self::from_state(&s, 0)
    }

    pub fn from_state(state: &PosteriorState, engine_not_needed_trips: u64) -> Self {
        Self {
            vehicle_id: state.vehicle_id.clone(),
            mu: state.mu,
            kappa: state.kappa,
            a: state.a,
            b: state.b,
            n_trips: state.n_trips,
            updated_at: chrono::Utc::now().to_rfc3339(),
            engine_not_needed_trips,
            next_lset: None,
            history: state.history.clone(),
        }
    }

    pub fn state(&self) -> PosteriorState {
        PosteriorState {
            vehicle_id: self.vehicle_id.clone(),
            mu: self.mu,
            kappa: self.kappa,
            a: self.a,
            b: self.b,
            n_trips: self.n_trips,
            history: self.history.clone(),
        }
    }

    fn check(&self) -> Result<(), String> {
        if !self.mu.is_finite() {
            return Err("mu is not finite".into());
        }
        for (name, x) in [("kappa", self.kappa), ("a", self.a), ("b", self.b)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(format!("{name} = {x} must be positive"));
            }
        }
        Ok(())
    }
}

/// Held while a vehicle's posterior is being rewritten; released on drop.
#[derive(Debug)]
pub struct VehicleLock {
    _file: File,
}

#[derive(Debug, Clone)]
pub struct PosteriorStore {
    dir: PathBuf,
    pub lock_attempts: u32,
    pub lock_retry_delay: Duration,
}

impl PosteriorStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), lock_attempts: 20, lock_retry_delay: Duration::from_millis(100) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn checked_id(vehicle_id: &str) -> Result<&str, StoreError> {
        let bad = vehicle_id.is_empty()
            || vehicle_id.starts_with('.')
            || vehicle_id.chars().any(|c| c == '/' || c == '\\' || c == '\0');
        if bad {
            Err(StoreError::BadVehicleId(vehicle_id.to_string()))
        } else {
            Ok(vehicle_id)
        }
    }

    pub fn path_for(&self, vehicle_id: &str) -> Result<PathBuf, StoreError> {
        Ok(self.dir.join(format!("{}.json", Self::checked_id(vehicle_id)?)))
    }

    pub fn load(&self, vehicle_id: &str) -> Result<Option<StoredPosterior>, StoreError> {
        let path = self.path_for(vehicle_id)?;
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        let doc: StoredPosterior =
            serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { path: path.clone(), message: e.to_string() })?;
        doc.check().map_err(|message| StoreError::Corrupt { path: path.clone(), message })?;
        if doc.vehicle_id != vehicle_id {
            return Err(StoreError::Corrupt { path, message: format!("file belongs to vehicle '{}'", doc.vehicle_id) });
        }
        Ok(Some(doc))
    }

    /// Stored posterior, or a fresh one from `prior` when none exists yet.
    pub fn load_or_init(&self, vehicle_id: &str, prior: &PriorSpec, keep_history: bool) -> Result<StoredPosterior, StoreError> {
        Ok(self.load(vehicle_id)?.unwrap_or_else(|| StoredPosterior::fresh(prior, vehicle_id, keep_history)))
    }

    pub fn save(&self, doc: &StoredPosterior) -> Result<(), StoreError> {
        let path = self.path_for(&doc.vehicle_id)?;
        let mut json = serde_json::to_string_pretty(doc).expect("posterior serializes");
        json.push('\n');
        write_atomic(&path, json.as_bytes()).map_err(|e| match e {
            IngestError::Io { path, source } => StoreError::Io { path, source },
            other => StoreError::Corrupt { path: path.clone(), message: other.to_string() },
        })
    }

    /// Takes the vehicle's advisory lock, retrying `lock_attempts` times.
    pub fn lock(&self, vehicle_id: &str) -> Result<VehicleLock, StoreError> {
        let path = self.dir.join(format!("{}.lock", Self::checked_id(vehicle_id)?));
        fs::create_dir_all(&self.dir).map_err(|source| StoreError::Io { path: self.dir.clone(), source })?;
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|source| StoreError::Io { path: path.clone(), source })?;
        for attempt in 1..=self.lock_attempts {
            match file.try_lock() {
                Ok(()) => return Ok(VehicleLock { _file: file }),
                Err(TryLockError::WouldBlock) => {
                    if attempt < self.lock_attempts {
                        thread::sleep(self.lock_retry_delay);
                    }
                }
                Err(TryLockError::Error(source)) => return Err(StoreError::Io { path, source }),
            }
        }
        Err(StoreError::Locked { vehicle: vehicle_id.to_string(), attempts: self.lock_attempts })
    }

    /// Locked read-modify-write of one vehicle's posterior.
    pub fn modify<E: From<StoreError>>(
        &self,
        vehicle_id: &str,
        prior: &PriorSpec,
        keep_history: bool,
        f: impl FnOnce(StoredPosterior) -> Result<StoredPosterior, E>,
    ) -> Result<StoredPosterior, E> {
        let _guard = self.lock(vehicle_id)?;
        let current = self.load_or_init(vehicle_id, prior, keep_history)?;
        let next = f(current)?;
        self.save(&next)?;
        Ok(next)
    }

    /// Every stored posterior, sorted by vehicle id.
    pub fn list(&self) -> Result<Vec<StoredPosterior>, StoreError> {
        let entries = match fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(StoreError::Io { path: self.dir.clone(), source }),
        };
        let mut out = Vec::new();
        for entry in entries {
            let path = entry.map_err(|source| StoreError::Io { path: self.dir.clone(), source })?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(id) = path.file_stem().and_then(|s| s.to_str()) {
                    if let Some(doc) = self.load(id)? {
                        out.push(doc);
                    }
                }
            }
        }
        out.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file_initializes_from_prior() {
        let dir = tempfile::tempdir().unwrap();
        let store = PosteriorStore::new(dir.path());
        let doc = store.load_or_init("V1", &PriorSpec::default(), false).unwrap();
        assert_eq!((doc.mu, doc.kappa, doc.a, doc.b, doc.n_trips), (74.0, 5.0, 25.0, 2500.0, 0));
        assert!(store.load("V1").unwrap().is_none());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = PosteriorStore::new(dir.path());
        let s = init_state(&PriorSpec::default(), "V2").with_history().update(40.0).unwrap();
        let doc = StoredPosterior::from_state(&s, 1);
        store.save(&doc).unwrap();
        let back = store.load("V2").unwrap().unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.state(), s);
        assert!(!dir.path().join("V2.json.tmp").exists());
    }

    #[test]
    fn rejects_corrupt_and_unsafe() {
        let dir = tempfile::tempdir().unwrap();
        let store = PosteriorStore::new(dir.path());
        fs::write(dir.path().join("V3.json"), "{\"vehicle_id\":\"V3\",\"mu\":1,\"kappa\":-1,\"a\":1,\"b\":1,\"n_trips\":0,\"updated_at\":\"\"}").unwrap();
        assert!(matches!(store.load("V3"), Err(StoreError::Corrupt { .. })));
        assert!(matches!(store.load("../x"), Err(StoreError::BadVehicleId(_))));
    }

    #[test]
    fn contention_retries_then_fails() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = PosteriorStore::new(dir.path());
        store.lock_attempts = 3;
        store.lock_retry_delay = Duration::from_millis(1);
        let held = store.lock("V4").unwrap();
        assert!(matches!(store.lock("V4"), Err(StoreError::Locked { attempts: 3, .. })));
        assert!(store.lock("V5").is_ok());
        drop(held);
        assert!(store.lock("V4").is_ok());
    }
}
