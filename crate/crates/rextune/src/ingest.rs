//! Delimited trip files, 1 Hz profile files and plot-data tables.
//!
//! Trip files carry seven columns. The canonical header is
//! `time_s,speed_mps,distance_m,soc_pct,engine_on,batt_volts,batt_amps`;
//! [`ColumnMapping`] renames and rescales columns for other layouts. Empty
//! cells (and `NA`, `NaN`) are missing values. Preprocessed profiles reuse
//! the same format at a uniform 1 s step.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rextune_core::metrics::Table;
use rextune_core::trip::{RawSample, RawTrip, TripError};
use rextune_core::TripProfile;
use serde::{Deserialize, Serialize};

pub const CANONICAL_HEADER: [&str; 7] = ["time_s", "speed_mps", "distance_m", "soc_pct", "engine_on", "batt_volts", "batt_amps"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: file is empty")]
    Empty { path: PathBuf },
    #[error("{path}: no '{column}' column in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}: cannot parse {column} value '{value}'")]
    Parse { path: PathBuf, line: usize, column: String, value: String },
    #[error("{path}: line {line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source} (file line {line})")]
    Invalid { path: PathBuf, line: usize, source: TripError },
    #[error("{path}: {source}")]
    InvalidTrip { path: PathBuf, source: TripError },
    #[error("{path}: not a 1 Hz profile: {reason}")]
    NotAProfile { path: PathBuf, reason: String },
}

/// Maps file headers onto the seven trip channels.
///
/// Time, speed and distance columns are required; other channels whose
/// header is absent from a file are read as missing.
/// Scales multiply the parsed value (e.g. `speed_scale = 0.27778` for km/h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub time: String,
    pub speed: String,
    pub distance: String,
    pub soc: String,
    pub engine_on: String,
    pub batt_volts: String,
    pub batt_amps: String,
    pub delimiter: char,
    pub time_scale: f64,
    pub speed_scale: f64,
    pub distance_scale: f64,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        let [time, speed, distance, soc, engine_on, batt_volts, batt_amps] = CANONICAL_HEADER.map(String::from);
        Self {
            time,
            speed,
            distance,
            soc,
            engine_on,
            batt_volts,
            batt_amps,
            delimiter: ',',
            time_scale: 1.0,
            speed_scale: 1.0,
            distance_scale: 1.0,
        }
    }
}

/// Vehicle id implied by a trip file name: the stem up to `__`, so
/// `V03__t017.csv` belongs to `V03`.
pub fn vehicle_id_from_path(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("vehicle");
    stem.split("__").next().unwrap_or(stem).to_string()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

fn parse_bool(cell: &str) -> Option<bool> {
    match cell.to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" => Some(true),
        "0" | "false" | "off" | "no" => Some(false),
        _ => None,
    }
}

fn csv_reader<R: Read>(r: R, delimiter: char) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(r)
}

/// Reads one trip file. The vehicle id defaults to [`vehicle_id_from_path`].
pub fn parse_trip_file(path: &Path, mapping: &ColumnMapping, vehicle_id: Option<&str>) -> Result<RawTrip, IngestError> {
    let text = fs::read(path).map_err(io_err(path))?;
    let id = vehicle_id.map(str::to_string).unwrap_or_else(|| vehicle_id_from_path(path));
    parse_trip_bytes(&text, path, mapping, &id)
}

/// Parses trip-file contents; `path` is only used in diagnostics.
pub fn parse_trip_bytes(bytes: &[u8], path: &Path, mapping: &ColumnMapping, vehicle_id: &str) -> Result<RawTrip, IngestError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(IngestError::Empty { path: path.to_path_buf() });
    }
    let mut rdr = csv_reader(bytes, mapping.delimiter);
    let header = rdr
        .headers()
        .map_err(|e| IngestError::Malformed { path: path.to_path_buf(), line: 1, message: e.to_string() })?
        .clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let required = |name: &String| {
        find(name).ok_or_else(|| IngestError::MissingColumn { path: path.to_path_buf(), column: name.clone() })
    };
    let time_col = required(&mapping.time)?;
    let cols = [
        Some(required(&mapping.speed)?),
        Some(required(&mapping.distance)?),
        find(&mapping.soc),
        find(&mapping.engine_on),
        find(&mapping.batt_volts),
        find(&mapping.batt_amps),
    ];

    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| IngestError::Malformed { path: path.to_path_buf(), line, message: e.to_string() })?;
        let num = |col: Option<usize>, name: &str, scale: f64| -> Result<Option<f64>, IngestError> {
            let Some(c) = col else { return Ok(None) };
            let cell = rec.get(c).unwrap_or("");
            if is_missing(cell) {
                return Ok(None);
            }
            cell.parse::<f64>().map(|x| Some(x * scale)).map_err(|_| IngestError::Parse {
                path: path.to_path_buf(),
                line,
                column: name.to_string(),
                value: cell.to_string(),
            })
        };
        let t = num(Some(time_col), &mapping.time, mapping.time_scale)?.ok_or_else(|| IngestError::Parse {
            path: path.to_path_buf(),
            line,
            column: mapping.time.clone(),
            value: String::new(),
        })?;
        let engine_on = match cols[3].map(|c| rec.get(c).unwrap_or("")) {
            None => None,
            Some(cell) if is_missing(cell) => None,
            Some(cell) => Some(parse_bool(cell).ok_or_else(|| IngestError::Parse {
                path: path.to_path_buf(),
                line,
                column: mapping.engine_on.clone(),
                value: cell.to_string(),
            })?),
        };
        samples.push(RawSample {
            t,
            v: num(cols[0], &mapping.speed, mapping.speed_scale)?,
            d: num(cols[1], &mapping.distance, mapping.distance_scale)?,
            soc: num(cols[2], &mapping.soc, 1.0)?,
            engine_on,
            v_batt: num(cols[4], &mapping.batt_volts, 1.0)?,
            i_batt: num(cols[5], &mapping.batt_amps, 1.0)?,
        });
    }
    if samples.is_empty() {
        return Err(IngestError::Empty { path: path.to_path_buf() });
    }
    RawTrip::new(vehicle_id, samples).map_err(|source| match trip_error_row(&source) {
        Some(row) => IngestError::Invalid { path: path.to_path_buf(), line: row + 2, source },
        None => IngestError::InvalidTrip { path: path.to_path_buf(), source },
    })
}

fn trip_error_row(e: &TripError) -> Option<usize> {
    match *e {
        TripError::NonIncreasingTime { row, .. }
        | TripError::DecreasingDistance { row, .. }
        | TripError::NegativeSpeed { row, .. }
        | TripError::SocOutOfRange { row, .. }
        | TripError::NonFinite { row, .. } => Some(row),
        TripError::Empty | TripError::TooFewSamples(_) => None,
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Serializes a trip in the canonical layout. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn trip_to_string(trip: &RawTrip) -> String {
    let mut out = CANONICAL_HEADER.join(",");
    out.push('\n');
    for s in &trip.samples {
        let engine = s.engine_on.map(|b| if b { "1" } else { "0" }).unwrap_or("");
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.t,
            cell(s.v),
            cell(s.d),
            cell(s.soc),
            engine,
            cell(s.v_batt),
            cell(s.i_batt)
        ));
    }
    out
}

pub fn write_trip_file(path: &Path, trip: &RawTrip) -> Result<(), IngestError> {
    write_atomic(path, trip_to_string(trip).as_bytes())
}

/// Writes through a sibling temp file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// A profile as a 1 Hz trip file (battery columns left empty).
pub fn profile_to_trip(profile: &TripProfile) -> RawTrip {
    let samples = (0..profile.len())
        .map(|k| RawSample {
            t: k as f64 * profile.dt,
            v: Some(profile.v[k]),
            d: Some(profile.d[k]),
            soc: profile.soc_recorded.as_ref().map(|s| s[k]),
            engine_on: profile.engine_on_recorded.as_ref().map(|e| e[k]),
            v_batt: None,
            i_batt: None,
        })
        .collect();
    RawTrip { vehicle_id: profile.vehicle_id.clone(), samples, sample_period: profile.dt }
}

/// Accepts a trip only if it already is a profile: uniform 1 s steps from
/// t = 0 and complete speed and distance channels.
pub fn trip_to_profile(trip: &RawTrip, path: &Path) -> Result<TripProfile, IngestError> {
    let reason = |r: String| IngestError::NotAProfile { path: path.to_path_buf(), reason: r };
    for (k, s) in trip.samples.iter().enumerate() {
        if (s.t - k as f64).abs() > 1e-9 {
            return Err(reason(format!("time {} at row {k}, expected {k}", s.t)));
        }
        if s.v.is_none() || s.d.is_none() {
            return Err(reason(format!("missing speed or distance at row {k}")));
        }
    }
    let all = |f: &dyn Fn(&RawSample) -> bool| trip.samples.iter().all(f);
    let soc = all(&|s| s.soc.is_some()).then(|| trip.samples.iter().map(|s| s.soc.unwrap()).collect());
    let engine = all(&|s| s.engine_on.is_some()).then(|| trip.samples.iter().map(|s| s.engine_on.unwrap()).collect());
    Ok(TripProfile {
        vehicle_id: trip.vehicle_id.clone(),
        dt: 1.0,
        v: trip.samples.iter().map(|s| s.v.unwrap()).collect(),
        d: trip.samples.iter().map(|s| s.d.unwrap()).collect(),
        soc_recorded: soc,
        engine_on_recorded: engine,
    })
}

pub fn write_profile(path: &Path, profile: &TripProfile) -> Result<(), IngestError> {
    write_trip_file(path, &profile_to_trip(profile))
}

pub fn read_profile(path: &Path, vehicle_id: Option<&str>) -> Result<TripProfile, IngestError> {
    let trip = parse_trip_file(path, &ColumnMapping::default(), vehicle_id)?;
    trip_to_profile(&trip, path)
}

/// Plot-data table; NaN is written as an empty cell.
pub fn table_to_string(table: &Table, delimiter: char) -> String {
    let d = delimiter.to_string();
    let mut out = table.columns.join(&d);
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|x| if x.is_nan() { String::new() } else { x.to_string() }).collect();
        out.push_str(&cells.join(&d));
        out.push('\n');
    }
    out
}

pub fn write_table(path: &Path, table: &Table, delimiter: char) -> Result<(), IngestError> {
    write_atomic(path, table_to_string(table, delimiter).as_bytes())
}

/// Reads a numeric table with the same delimiter parser as trip files;
/// empty cells come back as NaN.
pub fn read_table(path: &Path, delimiter: char) -> Result<Table, IngestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.is_empty() {
        return Err(IngestError::Empty { path: path.to_path_buf() });
    }
    let mut rdr = csv_reader(bytes.as_slice(), delimiter);
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::Malformed { path: path.to_path_buf(), line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| IngestError::Malformed { path: path.to_path_buf(), line, message: e.to_string() })?;
        let row = rec
            .iter()
            .zip(&columns)
            .map(|(c, name)| {
                if c.is_empty() {
                    Ok(f64::NAN)
                } else {
                    c.parse::<f64>().map_err(|_| IngestError::Parse {
                        path: path.to_path_buf(),
                        line,
                        column: name.clone(),
                        value: c.to_string(),
                    })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Table { columns, rows })
}
