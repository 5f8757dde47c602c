use std::path::Path;

use rextune::ingest::*;
use rextune_core::metrics::Table;
use rextune_core::trip::{RawSample, RawTrip};
use rextune_core::TripProfile;

fn sample_trip() -> RawTrip {
    let samples = (0..6)
        .map(|k| RawSample {
            v: (k != 2).then_some(0.1 * k as f64 + 1.0 / 3.0),
            d: Some(10.0 * k as f64),
            soc: (k != 4).then_some(90.0 - 0.01 * k as f64),
            engine_on: Some(k % 2 == 1),
            v_batt: Some(380.5),
            i_batt: (k != 5).then_some(-12.25),
            ..RawSample::at(5.0 * k as f64)
        })
        .collect();
    RawTrip::new("V01", samples).unwrap()
}

#[test]
fn raw_trip_file_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub/V01__t003.csv");
    let trip = sample_trip();
    write_trip_file(&path, &trip).unwrap();
    let back = parse_trip_file(&path, &ColumnMapping::default(), None).unwrap();
    assert_eq!(back, trip);
    assert_eq!(vehicle_id_from_path(&path), "V01");
}

#[test]
fn profile_file_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("V02__a.csv");
    let v: Vec<f64> = (0..50).map(|k| (k as f64 * 0.37).sin().abs() * 17.0).collect();
    let profile = TripProfile::from_speeds("V02", &v, 1.0);
    write_profile(&path, &profile).unwrap();
    assert_eq!(read_profile(&path, None).unwrap(), profile);
}

#[test]
fn mapped_columns_with_units() {
    let text = "secs;kmh;km;extra\n0;0;0;x\n1;36;0.01;y\n2;NA;0.02;z\n";
    let mapping = ColumnMapping {
        time: "secs".into(),
        speed: "kmh".into(),
        distance: "km".into(),
        delimiter: ';',
        speed_scale: 1.0 / 3.6,
        distance_scale: 1000.0,
        ..ColumnMapping::default()
    };
    let trip = parse_trip_bytes(text.as_bytes(), Path::new("m.csv"), &mapping, "M").unwrap();
    assert_eq!(trip.samples.len(), 3);
    assert!((trip.samples[1].v.unwrap() - 10.0).abs() < 1e-12);
    assert!((trip.samples[2].d.unwrap() - 20.0).abs() < 1e-12);
    assert_eq!(trip.samples[2].v, None);
    assert_eq!(trip.samples[0].soc, None);
}

#[test]
fn bad_rows_are_reported_by_line() {
    let text = "time_s,speed_mps,distance_m\n0,0,0\n1,oops,1\n";
    let err = parse_trip_bytes(text.as_bytes(), Path::new("b.csv"), &ColumnMapping::default(), "B").unwrap_err();
    assert!(matches!(err, IngestError::Parse { line: 3, .. }), "{err}");
    let text = "time_s,speed_mps,distance_m\n0,0,0\n5,1,1\n4,1,2\n";
    let err = parse_trip_bytes(text.as_bytes(), Path::new("b.csv"), &ColumnMapping::default(), "B").unwrap_err();
    assert!(matches!(err, IngestError::Invalid { line: 4, .. }), "{err}");
    let err = parse_trip_bytes(b"time_s,distance_m\n0,0\n1,1\n", Path::new("b.csv"), &ColumnMapping::default(), "B").unwrap_err();
    assert!(matches!(err, IngestError::MissingColumn { .. }), "{err}");
}

#[test]
fn plot_tables_round_trip_with_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Table::new(&["a", "b"]);
    t.push(vec![1.0, f64::NAN]);
    t.push(vec![0.1 + 0.2, -3.5e-7]);
    for delim in [',', '\t'] {
        let path = dir.path().join(format!("t{}.csv", delim as u32));
        write_table(&path, &t, delim).unwrap();
        let back = read_table(&path, delim).unwrap();
        assert_eq!(back.columns, t.columns);
        assert_eq!(back.rows[1], t.rows[1]);
        assert!(back.rows[0][1].is_nan());
    }
}
