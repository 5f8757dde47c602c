use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rextune(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rextune"))
        .current_dir(dir)
        .env_remove("REXTUNE_CONFIG")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&rextune(d, &[])), 1);
    assert_eq!(code(&rextune(d, &["--help"])), 0);
    assert_eq!(code(&rextune(d, &["--version"])), 0);
    assert_eq!(code(&rextune(d, &["frobnicate"])), 1);
    assert_eq!(code(&rextune(d, &["--config", "missing.toml", "predict"])), 3);
    fs::write(d.join("bad.toml"), "[prior]\nmu0 = \"x\"\n").unwrap();
    assert_eq!(code(&rextune(d, &["--config", "bad.toml", "predict"])), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_rextune"))
        .current_dir(d)
        .env("REXTUNE_CONFIG", "bad.toml")
        .arg("predict")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn corrupt_trip_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("V1__x.csv"), "time_s,speed_mps,distance_m\n0,0,0\n5,1,5\n3,1,6\n").unwrap();
    let o = rextune(d, &["preprocess", "V1__x.csv"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
    assert_eq!(code(&rextune(d, &["preprocess", "nope.csv"])), 3);
}

#[test]
fn fleet_to_report_flow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = rextune(d, &["gen-fleet", "--out", "raw", "--vehicles", "2", "--trips", "3", "--seed", "5", "--truth"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("raw/fleet.csv").exists());
    assert!(d.join("raw/truth/V01__t002.csv").exists());

    let o = rextune(d, &["preprocess", "raw/V00__t000.csv", "raw/V00__t001.csv", "raw/V00__t002.csv", "--out", "prof"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).matches(",ok").count(), 3);

    let o = rextune(d, &["best-lset", "prof/V00__t000.csv"]);
    assert_eq!(code(&o), 0);

    let o = rextune(d, &["observe", "prof/V00__t000.csv", "prof/V00__t001.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("posteriors/V00.json")).unwrap()).unwrap();
    assert_eq!(doc["n_trips"], 2);
    let stored_next = doc["next_lset"].as_f64().unwrap();

    let o = rextune(d, &["predict", "V00"]);
    assert_eq!(code(&o), 0);
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let predicted: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
    assert!((predicted - stored_next).abs() < 1e-3);

    let o = rextune(d, &["run-trip", "prof/V00__t002.csv", "--from-posterior", "--plot-dir", "plots"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains(&format!("chosen {predicted:.2}")));
    assert!(d.join("plots/V00__t002_soc.csv").exists());

    let o = rextune(d, &["sweep", "prof/V00__t002.csv", "--from", "20", "--to", "200", "--step", "60", "--out", "sweep.csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 5);

    let mut args = vec!["report", "--raw", "--out", "rep"];
    let files: Vec<String> = (0..2).flat_map(|v| (0..3).map(move |t| format!("raw/V{v:02}__t{t:03}.csv"))).collect();
    args.extend(files.iter().map(String::as_str));
    let o = rextune(d, &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["vehicles.csv", "trips.csv", "lhat_V00.csv", "soc_V01.csv", "engine_V01.csv", "sweep_V00.csv"] {
        assert!(d.join("rep").join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(d.join("rep/trips.csv")).unwrap().lines().count(), 7);
}

#[test]
fn infeasible_trip_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // 200 miles at 30 m/s cannot be held above the SOC floor at any L_set.
    let n = 200 * 1609 / 30;
    let mut text = String::from("time_s,speed_mps,distance_m\n0,0,0\n");
    for k in 1..n {
        text.push_str(&format!("{k},30,{}\n", 30 * k - 15));
    }
    text.push_str(&format!("{n},0,{}\n", 30 * n - 30));
    fs::write(d.join("H__long.csv"), text).unwrap();
    let o = rextune(d, &["best-lset", "H__long.csv"]);
    assert_eq!(code(&o), 2, "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
}

#[test]
fn lock_contention_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = rextune(d, &["gen-fleet", "--out", "raw", "--vehicles", "1", "--trips", "1"]);
    assert_eq!(code(&o), 0);
    let mut store = rextune::store::PosteriorStore::new(d.join("posteriors"));
    store.lock_attempts = 1;
    let _held = store.lock("V00").unwrap();
    let o = rextune(d, &["observe", "--raw", "raw/V00__t000.csv"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn fit_prior_prints_toml() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut text = String::from("vehicle_id,best_lset_mi\n");
    for v in 0..5 {
        for t in 0..20 {
            text.push_str(&format!("V{v},{}\n", 50.0 + 3.0 * v as f64 + ((t * 7) % 11) as f64 - 5.0));
        }
    }
    fs::write(d.join("h.csv"), text).unwrap();
    let o = rextune(d, &["fit-prior", "h.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let toml_text: String = stdout(&o).lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let cfg = rextune::config::GlobalConfig::from_toml(&toml_text, Path::new("fit")).unwrap();
    assert!(cfg.prior.mu0 > 0.0);
}
