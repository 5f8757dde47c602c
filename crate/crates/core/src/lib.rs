//! Allocation-only core for tuning the `L_set` parameter of a thermostatic
//! range-extender strategy on extended-range electric delivery vehicles.
//!
//! The crate covers the full numerical path from low-rate trip telemetry to a
//! next-trip parameter:
//!
//! - [`trip`]: raw telemetry records and trip summaries.
//! - [`preprocess`]: 0.2 Hz to 1 Hz reconstruction with distance matching.
//! - [`vehicle`]: road-load power, equivalent-circuit SOC dynamics, fuel.
//! - [`ems`]: the distance-indexed SOC reference and engine on/off rule.
//! - [`lset`]: best `L_set` extraction per recorded trip and fuel sweeps.
//! - [`bayes`]: Normal-Gamma posterior, Student-t predictive, 0.99 quantile.
//! - [`metrics`]: MPGe accounting, baseline comparisons, plot-ready tables.
//!
//! Nothing here touches the filesystem; the `rextune` crate carries IO.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bayes;
pub mod calibrate;
pub mod ems;
pub mod lset;
pub mod metrics;
pub mod preprocess;
pub mod special;
pub mod trip;
pub mod vehicle;

/// Meters per statute mile.
pub const METERS_PER_MILE: f64 = 1609.344;

/// Liters per US gallon.
pub const LITERS_PER_GALLON: f64 = 3.785_411_784;

pub use bayes::{PosteriorState, PriorSpec, StudentT};
pub use ems::{ControlInput, EmsConfig, EngineController, Thermostat};
pub use lset::{BestLset, LsetSearchConfig};
pub use preprocess::{PreprocessConfig, TripProfile};
pub use trip::{RawSample, RawTrip, TripSummary};
pub use vehicle::{SimResult, VehicleParams};
