//! Checks against independent references: statrs, Monte-Carlo sampling,
//! brute-force scans and fine-step integration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};

use rextune_core::bayes::{init_state, PriorSpec};
use rextune_core::ems::EmsConfig;
use rextune_core::lset::{best_lset, fuel_vs_lset, simulate_with_lset, BestLset, LsetSearchConfig};
use rextune_core::preprocess::{correct_and_rescale, integrate, preprocess_trip, PreprocessConfig, TripProfile};
use rextune_core::special::student_t_cdf;
use rextune_core::trip::{RawSample, RawTrip};
use rextune_core::vehicle::{soc_derivative, VehicleParams};
use rextune_core::METERS_PER_MILE;

#[test]
fn t_cdf_matches_statrs() {
    for dof in [1.0, 2.5, 7.0, 50.0, 51.0, 300.0] {
        let reference = StudentsT::new(0.0, 1.0, dof).unwrap();
        for i in -40..=40 {
            let t = i as f64 * 0.25;
            let ours = student_t_cdf(t, dof);
            assert!((ours - reference.cdf(t)).abs() < 1e-10, "dof {dof} t {t}: {ours} vs {}", reference.cdf(t));
        }
    }
}

#[test]
fn table_three_prediction_matches_statrs_quantile() {
    let s = init_state(&PriorSpec::default(), "v");
    let t = s.predictive();
    let reference = StudentsT::new(t.loc, t.scale(), t.dof).unwrap();
    let ours = s.predict_lset(0.99).unwrap();
    assert!((ours - reference.inverse_cdf(0.99)).abs() < 1e-6);
}

#[test]
fn predictive_cdf_matches_monte_carlo() {
    let s = init_state(&PriorSpec::default(), "v").update(55.0).unwrap().update(90.0).unwrap();
    let t = s.predictive();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gamma = Gamma::new(s.a, 1.0 / s.b).unwrap();
    let n = 200_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let lambda: f64 = gamma.sample(&mut rng);
            let mu = Normal::new(s.mu, (1.0 / (s.kappa * lambda)).sqrt()).unwrap().sample(&mut rng);
            Normal::new(mu, (1.0 / lambda).sqrt()).unwrap().sample(&mut rng)
        })
        .collect();
    for q in [0.05, 0.25, 0.5, 0.75, 0.99] {
        let x = t.quantile(q);
        let p = t.cdf(x);
        let emp = draws.iter().filter(|&&d| d <= x).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((emp - p).abs() < 3.0 * se, "q {q}: empirical {emp} vs {p}");
    }
}

#[test]
fn loc_converges_to_sample_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let normal = Normal::new(63.0, 12.0).unwrap();
    let mut s = init_state(&PriorSpec::default(), "v");
    let mut sum = 0.0;
    for _ in 0..10_000 {
        let x = Distribution::<f64>::sample(&normal, &mut rng).max(1.0);
        sum += x;
        s = s.update(x).unwrap();
    }
    assert!((s.predictive().loc - sum / 10_000.0).abs() < 0.5);
}

#[test]
fn soc_derivative_matches_fine_integration() {
    let p = VehicleParams::default();
    for (soc, power) in [(80.0, 40_000.0), (15.0, 90_000.0), (50.0, -30_000.0), (5.0, 10_000.0)] {
        // integrate 2 s at 0.01 s with the midpoint rule
        let rhs = |s: f64| soc_derivative(s, power, &p).unwrap();
        let mut s = soc;
        let mut mid = 0.0;
        for k in 0..200 {
            let half = s + 0.005 * rhs(s);
            s += 0.01 * rhs(half);
            if k == 99 {
                mid = s;
            }
        }
        let central = (s - soc) / 2.0;
        let ours = rhs(mid);
        assert!((ours - central).abs() <= 1e-3 * central.abs(), "soc {soc} P {power}: {ours} vs {central}");
    }
}

/// Repeated drive/stop blocks; `fast_tail` adds a closing high-speed leg.
fn delivery(miles: f64, cruise: f64, fast_tail: f64) -> TripProfile {
    let mut v = vec![0.0];
    let push_block = |v: &mut Vec<f64>, cruise: f64, hold: usize| {
        let mut s: f64 = 0.0;
        while s < cruise {
            s = (s + 1.0).min(cruise);
            v.push(s);
        }
        v.extend(std::iter::repeat_n(cruise, hold));
        while s > 0.0 {
            s = (s - 1.0).max(0.0);
            v.push(s);
        }
        v.extend(std::iter::repeat_n(0.0, 30));
    };
    while integrate(&v, 1.0).last().unwrap() / METERS_PER_MILE < miles {
        push_block(&mut v, cruise, 300);
    }
    if fast_tail > 0.0 {
        let hold = (fast_tail * METERS_PER_MILE / 27.0) as usize;
        push_block(&mut v, 27.0, hold);
    }
    TripProfile::from_speeds("v", &v, 1.0)
}

fn grid_oracle(p: &TripProfile, params: &VehicleParams, ems: &EmsConfig, target: f64) -> f64 {
    let mut l = 5.0;
    while l <= 300.0 {
        if simulate_with_lset(p, params, ems, l, 100.0).unwrap().min_soc >= target {
            return l;
        }
        l += 0.5;
    }
    f64::INFINITY
}

#[test]
fn bisection_agrees_with_grid_scan() {
    let params = VehicleParams::default();
    let ems = EmsConfig::default();
    for (miles, cruise) in [(120.0, 12.0), (80.0, 16.0), (150.0, 10.0)] {
        let p = delivery(miles, cruise, 0.0);
        let r = best_lset(&p, &params, &ems, &LsetSearchConfig::default()).unwrap();
        let BestLset::Found { l_set, min_soc, .. } = r else { panic!("{r:?}") };
        assert!((8.0..=12.0).contains(&min_soc));
        let oracle = grid_oracle(&p, &params, &ems, 10.0);
        assert!((l_set - oracle).abs() <= 2.0, "{miles} mi: bisection {l_set} vs grid {oracle}");
    }
}

#[test]
fn energy_heavy_ending_needs_lset_beyond_distance() {
    let p = delivery(60.0, 14.0, 18.0);
    let r = best_lset(&p, &VehicleParams::default(), &EmsConfig::default(), &LsetSearchConfig::default()).unwrap();
    let l = r.l_set().unwrap();
    assert!(l > p.distance_mi(), "L* {l} vs distance {}", p.distance_mi());
}

#[test]
fn best_lset_burns_no_more_than_baseline() {
    let params = VehicleParams::default();
    let ems = EmsConfig::default();
    let p = delivery(85.0, 18.0, 0.0);
    let l = best_lset(&p, &params, &ems, &LsetSearchConfig::default()).unwrap().l_set().unwrap();
    let sweep = fuel_vs_lset(&p, &params, &ems, &[l, 100.0], 100.0);
    let f: Vec<f64> = sweep.iter().map(|s| s.outcome.as_ref().unwrap().fuel_l).collect();
    assert!(f[0] <= f[1], "{f:?}");
}

#[test]
fn epsilon_matches_linear_root() {
    // Distance advances at 10 m/s throughout; the first 10% of the trip
    // has stuck-zero speed and the rest under-reads.
    let n = 4001;
    let d: Vec<f64> = (0..n).map(|k| 10.0 * k as f64).collect();
    let target = d[n - 1];
    let split = 400;
    let v: Vec<f64> = (0..n).map(|k| if k < split { 0.0 } else { 10.0 * 0.82 / 0.9 }).collect();
    let cfg = PreprocessConfig::default();
    let r = correct_and_rescale(&v, &d, 1.0, target, &cfg).unwrap();

    // error(eps) = base + eps * slope, evaluated with an independent sum
    let trap = |eps: f64| -> f64 {
        let mut w: Vec<f64> = (0..n).map(|k| if k < split && k > 0 { 10.0 * eps } else { v[k] }).collect();
        w[n - 1] = 0.0;
        w.windows(2).map(|p| 0.5 * (p[0] + p[1])).sum::<f64>() - target
    };
    let (mut lo, mut hi) = (0.1, 10.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if trap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let slope = trap(1.0) - trap(0.0);
    assert!((1.5..=2.5).contains(&r.epsilon), "{}", r.epsilon);
    assert!((r.epsilon - lo).abs() <= 500.0 / slope, "eps {} vs root {lo}", r.epsilon);
}

#[test]
fn dropout_is_reconstructed_within_tolerance() {
    // 0.2 Hz log of a 12 m/s cruise with a 60 s speed dropout
    let mut samples = Vec::new();
    for k in 0..=720 {
        let t = 5.0 * k as f64;
        let v = if k == 0 || k == 720 { 0.0 } else { 12.0 };
        let mut s = RawSample::at(t);
        s.v = Some(if (300..312).contains(&k) { 0.0 } else { v });
        s.d = Some(12.0 * t);
        samples.push(s);
    }
    let trip = RawTrip::new("v", samples).unwrap();
    let (p, report) = preprocess_trip(&trip, &PreprocessConfig::default()).unwrap();
    assert!(report.distance_error_m.abs() < 500.0);
    assert!((p.distance_m() - trip.final_distance_m()).abs() < 500.0);
    assert!(report.corrected_points > 0);
}
