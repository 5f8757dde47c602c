use rextune::fleet::{Degradation, FleetGenerator, SyntheticFleetSpec};
use rextune::ingest::trip_to_string;
use rextune_core::preprocess::{preprocess_trip, PreprocessConfig};
use rextune_core::VehicleParams;

fn generator(spec: SyntheticFleetSpec) -> FleetGenerator {
    FleetGenerator::new(spec, VehicleParams::default()).unwrap()
}

#[test]
fn same_seed_same_bytes() {
    let spec = SyntheticFleetSpec { n_vehicles: 2, trips_per_vehicle: 3, degradation: Degradation::field(), ..Default::default() };
    let render = |g: &FleetGenerator| -> Vec<String> {
        (0..2).flat_map(|v| (0..3).map(move |t| (v, t))).map(|(v, t)| trip_to_string(&g.trip(v, t).unwrap().raw)).collect()
    };
    let a = render(&generator(spec.clone()));
    assert_eq!(a, render(&generator(spec.clone())));
    let b = render(&generator(SyntheticFleetSpec { seed: 2, ..spec }));
    assert_ne!(a, b);
}

#[test]
fn distance_distribution_matches_spec() {
    let spec = SyntheticFleetSpec {
        n_vehicles: 1,
        trips_per_vehicle: 100,
        distance_mean_mi: (40.0, 40.0),
        distance_sd_mi: (8.0, 8.0),
        ..Default::default()
    };
    let g = generator(spec);
    let d: Vec<f64> = (0..100).map(|t| g.trip_distance_mi(0, t)).collect();
    let mean = d.iter().sum::<f64>() / 100.0;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
    assert!((mean - 40.0).abs() < 2.0, "mean {mean}");
    assert!((sd - 8.0).abs() < 2.0, "sd {sd}");
    // Generated speed traces cover the drawn distance.
    let t = g.trip(0, 0).unwrap();
    assert!((t.truth.distance_mi() - d[0]).abs() < 0.1, "{} vs {}", t.truth.distance_mi(), d[0]);
}

#[test]
fn clean_generated_trips_reconstruct_within_500_m() {
    let spec = SyntheticFleetSpec { n_vehicles: 3, trips_per_vehicle: 4, seed: 11, ..Default::default() };
    let g = generator(spec);
    for v in 0..3 {
        for t in g.vehicle_trips(v).unwrap() {
            let (p, r) = preprocess_trip(&t.raw, &PreprocessConfig::default()).unwrap();
            assert!((p.distance_m() - t.truth.distance_m()).abs() < 500.0);
            assert!(r.distance_error_m.abs() < 500.0);
        }
    }
}

#[test]
fn degraded_trips_reconstruct_without_spikes() {
    let spec = SyntheticFleetSpec { n_vehicles: 4, trips_per_vehicle: 5, seed: 13, degradation: Degradation::field(), ..Default::default() };
    let g = generator(spec);
    let mut within = 0;
    for v in 0..4 {
        for t in g.vehicle_trips(v).unwrap() {
            let Ok((p, _)) = preprocess_trip(&t.raw, &PreprocessConfig::default()) else { continue };
            let truth_max = t.truth.v.iter().copied().fold(0.0, f64::max);
            let max = p.v.iter().copied().fold(0.0, f64::max);
            assert!(max <= truth_max + 2.0, "reconstructed {max} m/s vs true peak {truth_max}");
            if (p.distance_m() - t.truth.distance_m()).abs() < 500.0 {
                within += 1;
            }
        }
    }
    assert!(within >= 19, "{within}/20");
}
