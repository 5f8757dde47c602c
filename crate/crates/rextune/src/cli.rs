//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 simulation
//! infeasibility, 3 I/O failure (including posterior lock contention).

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rextune_core::bayes::{fit_prior, BayesError, PriorGrid};
use rextune_core::lset::{best_lset, fuel_vs_lset, initial_soc, BestLset, LsetError};
use rextune_core::metrics::{
    compare_trip, engine_trace_table, fleet_report, lhat_table, observation_for, replay_vehicle, soc_trajectory_table,
    sweep_table, Aggregate, MetricsError, TripComparison,
};
use rextune_core::preprocess::{preprocess_trip, Warning};
use rextune_core::vehicle::SimError;
use rextune_core::TripProfile;

use crate::config::{ConfigError, GlobalConfig, CONFIG_ENV};
use crate::fleet::{Degradation, FleetError, FleetGenerator, SyntheticFleetSpec};
use crate::ingest::{self, vehicle_id_from_path, IngestError};
use crate::store::{PosteriorStore, StoreError, StoredPosterior};

#[derive(Debug, Parser)]
#[command(name = "rextune", version, about = "Tune the range-extender L_set of EREV delivery vehicles from trip telemetry")]
pub struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct 1 Hz profiles from raw trip files.
    Preprocess(PreprocessArgs),
    /// Simulate a trip at the baseline and a chosen L_set and compare.
    RunTrip(RunTripArgs),
    /// Find each trip's best L_set.
    BestLset(BestLsetArgs),
    /// Fuel use and minimum SOC over a range of L_set values.
    Sweep(SweepArgs),
    /// Feed trips to a vehicle's posterior and print the next L_set.
    Observe(ObserveArgs),
    /// Print the next-trip L_set from stored posteriors.
    Predict(PredictArgs),
    /// Grid-search a prior against best-L_set histories.
    FitPrior(FitPriorArgs),
    /// Write a seeded synthetic fleet of raw trip files.
    GenFleet(GenFleetArgs),
    /// Replay trips per vehicle and write fleet savings and plot data.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Input {
    /// Treat inputs as raw trip files and preprocess them first.
    #[arg(long)]
    pub raw: bool,
    /// Vehicle id (default: file name up to `__`).
    #[arg(long)]
    pub vehicle: Option<String>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Output directory for profiles (default: paths.trips).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit 0 even if some trips fail the distance criterion.
    #[arg(long)]
    pub keep_failed: bool,
    #[arg(long)]
    pub vehicle: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunTripArgs {
    pub profile: PathBuf,
    #[command(flatten)]
    pub input: Input,
    /// L_set for the compared arm, miles.
    #[arg(long, conflicts_with = "from_posterior", required_unless_present = "from_posterior")]
    pub lset: Option<f64>,
    /// Use the vehicle's stored prediction.
    #[arg(long)]
    pub from_posterior: bool,
    #[arg(long)]
    pub initial_soc: Option<f64>,
    /// Directory for SOC and engine plot data.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BestLsetArgs {
    #[arg(required = true)]
    pub profiles: Vec<PathBuf>,
    #[command(flatten)]
    pub input: Input,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub profile: PathBuf,
    #[command(flatten)]
    pub input: Input,
    #[arg(long, default_value_t = 10.0)]
    pub from: f64,
    #[arg(long, default_value_t = 300.0)]
    pub to: f64,
    #[arg(long, default_value_t = 10.0)]
    pub step: f64,
    #[arg(long)]
    pub initial_soc: Option<f64>,
    /// Write the sweep as plot data.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ObserveArgs {
    /// Trips in driving order.
    #[arg(required = true)]
    pub profiles: Vec<PathBuf>,
    #[command(flatten)]
    pub input: Input,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Vehicles to predict for (default: every stored vehicle).
    pub vehicles: Vec<String>,
    #[arg(long)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitPriorArgs {
    /// CSV with `vehicle_id,best_lset_mi` rows in trip order.
    pub histories: PathBuf,
    #[arg(long, default_value_t = 5.0)]
    pub baseline_tol: f64,
}

#[derive(Debug, Args)]
pub struct GenFleetArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Fleet spec (TOML); flags below override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub vehicles: Option<usize>,
    #[arg(long)]
    pub trips: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inject latency, dropouts and stuck-zero speed.
    #[arg(long)]
    pub degrade: bool,
    /// Also write the 1 Hz ground-truth profiles under `<out>/truth`.
    #[arg(long)]
    pub truth: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Profiles, grouped by vehicle and replayed in file-name order.
    #[arg(required = true)]
    pub profiles: Vec<PathBuf>,
    #[arg(long)]
    pub raw: bool,
    /// Output directory (default: paths.reports).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Infeasible(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Infeasible(m) | Failure::Io(m) => m,
        }
    }
}

fn invalid(e: impl Display) -> Failure {
    Failure::Invalid(e.to_string())
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } | StoreError::Locked { .. } => Failure::Io(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => Failure::Io(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::PowerLimit { .. } => Failure::Infeasible(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<LsetError> for Failure {
    fn from(e: LsetError) -> Self {
        match e {
            LsetError::Config(_) => Failure::Invalid(e.to_string()),
            LsetError::Sim(s) => s.into(),
            _ => Failure::Infeasible(e.to_string()),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Simulation { source: SimError::PowerLimit { .. }, .. } | MetricsError::Lset { .. } => {
                Failure::Infeasible(e.to_string())
            }
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<BayesError> for Failure {
    fn from(e: BayesError) -> Self {
        match e {
            BayesError::Infeasible { .. } => Failure::Infeasible(e.to_string()),
            _ => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<FleetError> for Failure {
    fn from(e: FleetError) -> Self {
        match e {
            FleetError::Spec(_) => Failure::Invalid(e.to_string()),
            FleetError::Sim { .. } => Failure::Infeasible(e.to_string()),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn execute(cli: Cli) -> Outcome {
    let cfg = GlobalConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Preprocess(a) => cmd_preprocess(&cfg, a),
        Command::RunTrip(a) => cmd_run_trip(&cfg, a),
        Command::BestLset(a) => cmd_best_lset(&cfg, a),
        Command::Sweep(a) => cmd_sweep(&cfg, a),
        Command::Observe(a) => cmd_observe(&cfg, a),
        Command::Predict(a) => cmd_predict(&cfg, a),
        Command::FitPrior(a) => cmd_fit_prior(&cfg, a),
        Command::GenFleet(a) => cmd_gen_fleet(&cfg, a),
        Command::Report(a) => cmd_report(&cfg, a),
    }
}

fn load_profile(cfg: &GlobalConfig, path: &Path, raw: bool, vehicle: Option<&str>) -> Outcome<TripProfile> {
    if raw {
        let trip = ingest::parse_trip_file(path, &cfg.columns, vehicle)?;
        let (profile, _) =
            preprocess_trip(&trip, &cfg.preprocess).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
        Ok(profile)
    } else {
        Ok(ingest::read_profile(path, vehicle)?)
    }
}

fn describe_warnings(w: &[Warning]) -> String {
    let accel = w.iter().filter(|x| matches!(x, Warning::Acceleration { .. })).count();
    let speed = w.len() - accel;
    format!("{accel} accel, {speed} speed")
}

fn cmd_preprocess(cfg: &GlobalConfig, a: PreprocessArgs) -> Outcome {
    let out = a.out.unwrap_or_else(|| cfg.paths.trips.clone());
    let mut failed = 0;
    println!("file,distance_mi,distance_error_m,iterations,epsilon,corrected_points,warnings,status");
    for path in &a.files {
        let trip = ingest::parse_trip_file(path, &cfg.columns, a.vehicle.as_deref())?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match preprocess_trip(&trip, &cfg.preprocess) {
            Ok((profile, report)) => {
                ingest::write_profile(&out.join(&name), &profile)?;
                println!(
                    "{name},{:.3},{:.1},{},{:.4},{},{},ok",
                    profile.distance_mi(),
                    report.distance_error_m,
                    report.iterations,
                    report.epsilon,
                    report.corrected_points,
                    describe_warnings(&report.warnings)
                );
            }
            Err(e) => {
                failed += 1;
                println!("{name},,,,,,,failed: {e}");
            }
        }
    }
    if failed > 0 && !a.keep_failed {
        return Err(Failure::Invalid(format!("{failed} trip(s) failed preprocessing")));
    }
    Ok(())
}

fn store(cfg: &GlobalConfig) -> PosteriorStore {
    PosteriorStore::new(cfg.paths.store.clone())
}

fn stored_prediction(cfg: &GlobalConfig, vehicle: &str) -> Outcome<f64> {
    let doc = store(cfg).load_or_init(vehicle, &cfg.prior, cfg.prediction.keep_history)?;
    Ok(doc.state().predict_lset(cfg.prediction.confidence)?)
}

fn print_comparison(c: &TripComparison) {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into());
    println!("trip            {}", c.trip_id);
    println!("distance_mi     {:.2}", c.distance_mi);
    println!("l_set           baseline {:.2}  chosen {:.2}", c.l_set_baseline, c.l_set_bayes);
    println!("fuel_l          baseline {:.3}  chosen {:.3}", c.fuel_baseline_l, c.fuel_bayes_l);
    println!("mpge            baseline {}  chosen {}", opt(c.mpge_baseline), opt(c.mpge_bayes));
    println!("fuel_reduction  {:.2}%", c.fuel_reduction_pct);
    println!("min_soc_chosen  {:.2}%", c.min_soc_bayes);
}

fn cmd_run_trip(cfg: &GlobalConfig, a: RunTripArgs) -> Outcome {
    let profile = load_profile(cfg, &a.profile, a.input.raw, a.input.vehicle.as_deref())?;
    let vehicle = profile.vehicle_id.clone();
    let params = cfg.params_for(&vehicle)?;
    let l_set = match a.lset {
        Some(l) => l,
        None => stored_prediction(cfg, &vehicle)?,
    };
    if !(l_set > 0.0) {
        return Err(invalid(format!("L_set {l_set} must be positive")));
    }
    let search = rextune_core::LsetSearchConfig { initial_soc: a.initial_soc.or(cfg.search.initial_soc), ..cfg.search };
    let soc0 = initial_soc(&profile, &search);
    let trip_id = a.profile.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let run = compare_trip(&trip_id, &profile, &params, &cfg.ems, cfg.prediction.baseline_lset, l_set, soc0)?;
    print_comparison(&run.comparison);
    if let Some(dir) = a.plot_dir {
        let d = cfg.columns.delimiter;
        ingest::write_table(&dir.join(format!("{trip_id}_soc.csv")), &soc_trajectory_table(&profile, &run, &cfg.ems), d)?;
        ingest::write_table(&dir.join(format!("{trip_id}_engine.csv")), &engine_trace_table(&profile, &run), d)?;
    }
    Ok(())
}

fn describe_best(b: &BestLset) -> String {
    match *b {
        BestLset::Found { l_set, min_soc, evaluations, method } => {
            format!("{l_set:.2},{min_soc:.2},{evaluations},{method:?}")
        }
        BestLset::EngineNotNeeded { natural_min_soc } => format!("engine-not-needed,{natural_min_soc:.2},,"),
    }
}

fn cmd_best_lset(cfg: &GlobalConfig, a: BestLsetArgs) -> Outcome {
    println!("file,distance_mi,best_lset_mi,min_soc,evaluations,method");
    let mut first_err = None;
    for path in &a.profiles {
        let profile = load_profile(cfg, path, a.input.raw, a.input.vehicle.as_deref())?;
        let params = cfg.params_for(&profile.vehicle_id)?;
        match best_lset(&profile, &params, &cfg.ems, &cfg.search) {
            Ok(b) => println!("{},{:.2},{}", path.display(), profile.distance_mi(), describe_best(&b)),
            Err(e) => {
                println!("{},{:.2},error: {e},,,", path.display(), profile.distance_mi());
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), |e| Err(e.into()))
}

fn cmd_sweep(cfg: &GlobalConfig, a: SweepArgs) -> Outcome {
    if !(a.step > 0.0 && a.from > 0.0 && a.to >= a.from) {
        return Err(invalid("need 0 < from <= to and step > 0"));
    }
    let profile = load_profile(cfg, &a.profile, a.input.raw, a.input.vehicle.as_deref())?;
    let params = cfg.params_for(&profile.vehicle_id)?;
    let search = rextune_core::LsetSearchConfig { initial_soc: a.initial_soc.or(cfg.search.initial_soc), ..cfg.search };
    let soc0 = initial_soc(&profile, &search);
    let n = ((a.to - a.from) / a.step + 1e-9).floor() as usize;
    let lsets: Vec<f64> = (0..=n).map(|i| a.from + i as f64 * a.step).collect();
    let points = fuel_vs_lset(&profile, &params, &cfg.ems, &lsets, soc0);
    println!("l_set_mi,fuel_l,min_soc");
    for p in &points {
        match &p.outcome {
            Ok(v) => println!("{},{:.4},{:.3}", p.l_set, v.fuel_l, v.min_soc),
            Err(e) => println!("{},error: {e},", p.l_set),
        }
    }
    if let Some(out) = a.out {
        ingest::write_table(&out, &sweep_table(&points), cfg.columns.delimiter)?;
    }
    Ok(())
}

fn cmd_observe(cfg: &GlobalConfig, a: ObserveArgs) -> Outcome {
    let store = store(cfg);
    println!("file,vehicle,best_lset_mi,min_soc,evaluations,method,observation_mi,n_trips,next_lset_mi");
    for path in &a.profiles {
        let profile = load_profile(cfg, path, a.input.raw, a.input.vehicle.as_deref())?;
        let vehicle = profile.vehicle_id.clone();
        let params = cfg.params_for(&vehicle)?;
        let best = best_lset(&profile, &params, &cfg.ems, &cfg.search)?;
        let observation = observation_for(&best, &profile);
        let not_needed = u64::from(matches!(best, BestLset::EngineNotNeeded { .. }) && observation.is_some());
        let doc = store.modify(&vehicle, &cfg.prior, cfg.prediction.keep_history, |doc| -> Outcome<StoredPosterior> {
            let mut state = doc.state();
            if let Some(x) = observation {
                state = state.update(x)?;
            }
            let mut next = StoredPosterior::from_state(&state, doc.engine_not_needed_trips + not_needed);
            next.next_lset = Some(state.predict_lset(cfg.prediction.confidence)?);
            Ok(next)
        })?;
        println!(
            "{},{vehicle},{},{},{},{:.3}",
            path.display(),
            describe_best(&best),
            observation.map(|x| format!("{x:.2}")).unwrap_or_default(),
            doc.n_trips,
            doc.next_lset.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn cmd_predict(cfg: &GlobalConfig, a: PredictArgs) -> Outcome {
    let confidence = a.confidence.unwrap_or(cfg.prediction.confidence);
    let store = store(cfg);
    let docs = if a.vehicles.is_empty() {
        store.list()?
    } else {
        a.vehicles
            .iter()
            .map(|v| store.load_or_init(v, &cfg.prior, cfg.prediction.keep_history))
            .collect::<Result<Vec<_>, _>>()?
    };
    println!("vehicle,n_trips,mu,kappa,a,b,next_lset_mi");
    for d in docs {
        let l = d.state().predict_lset(confidence)?;
        println!("{},{},{:.4},{},{},{:.4},{:.3}", d.vehicle_id, d.n_trips, d.mu, d.kappa, d.a, d.b, l);
    }
    Ok(())
}

fn read_histories(path: &Path) -> Outcome<BTreeMap<String, Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| invalid(format!("{}: line {}: {e}", path.display(), i + 2)))?;
        let (Some(id), Some(x)) = (rec.get(0), rec.get(1)) else {
            return Err(invalid(format!("{}: line {}: expected vehicle_id,best_lset_mi", path.display(), i + 2)));
        };
        let x: f64 = x.parse().map_err(|_| invalid(format!("{}: line {}: bad value '{x}'", path.display(), i + 2)))?;
        out.entry(id.to_string()).or_default().push(x);
    }
    Ok(out)
}

fn cmd_fit_prior(cfg: &GlobalConfig, a: FitPriorArgs) -> Outcome {
    let fleet = read_histories(&a.histories)?;
    let fit = fit_prior(&fleet, cfg.prediction.baseline_lset, a.baseline_tol, &PriorGrid::default())?;
    let p = fit.prior;
    println!("# initial prediction {:.2} mi, mean gap {:.2} mi, min margin {:.2} mi", fit.initial_prediction, fit.mean_gap, fit.min_margin);
    println!("[prior]\nmu0 = {:?}\nn_mu0 = {:?}\nlambda0 = {:?}\nn_lambda0 = {:?}", p.mu0, p.n_mu0, p.lambda0, p.n_lambda0);
    Ok(())
}

fn cmd_gen_fleet(cfg: &GlobalConfig, a: GenFleetArgs) -> Outcome {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            toml::from_str::<SyntheticFleetSpec>(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
        }
        None => SyntheticFleetSpec::default(),
    };
    if let Some(v) = a.vehicles {
        spec.n_vehicles = v;
    }
    if let Some(t) = a.trips {
        spec.trips_per_vehicle = t;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if a.degrade {
        spec.degradation = Degradation::field();
    }
    let gen = FleetGenerator::new(spec, cfg.vehicle.clone())?;
    let mut manifest = String::from("vehicle_id,distance_mean_mi,distance_sd_mi,intensity_kwh_per_mi,cruise_mps\n");
    for (vi, vp) in gen.vehicles().iter().enumerate() {
        manifest.push_str(&format!(
            "{},{},{},{},{}\n",
            vp.vehicle_id, vp.distance_mean_mi, vp.distance_sd_mi, vp.intensity_kwh_per_mi, vp.cruise_mps
        ));
        for t in 0..gen.spec().trips_per_vehicle {
            let trip = gen.trip(vi, t)?;
            ingest::write_trip_file(&a.out.join(trip.file_name()), &trip.raw)?;
            if a.truth {
                ingest::write_profile(&a.out.join("truth").join(trip.file_name()), &trip.truth)?;
            }
        }
    }
    let path = a.out.join("fleet.csv");
    fs::write(&path, manifest).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    println!(
        "wrote {} trips for {} vehicles to {}",
        gen.spec().n_vehicles * gen.spec().trips_per_vehicle,
        gen.spec().n_vehicles,
        a.out.display()
    );
    Ok(())
}

fn aggregate_row(id: &str, a: &Aggregate) -> String {
    format!(
        "{id},{},{:.4},{:.4},{:.3},{:.3},{:.3}",
        a.trips, a.fuel_baseline_l, a.fuel_bayes_l, a.fuel_reduction_pct, a.mean_trip_fuel_reduction_pct, a.mpge_improvement_pct
    )
}

fn write_text(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn cmd_report(cfg: &GlobalConfig, a: ReportArgs) -> Outcome {
    let out = a.out.unwrap_or_else(|| cfg.paths.reports.clone());
    let d = cfg.columns.delimiter;
    let mut by_vehicle: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for p in a.profiles {
        by_vehicle.entry(vehicle_id_from_path(&p)).or_default().push(p);
    }
    let mut comparisons = Vec::new();
    let mut trips_csv = String::from("vehicle_id,trip_id,distance_mi,l_set_bayes,best_lset_mi,fuel_baseline_l,fuel_bayes_l,fuel_reduction_pct,min_soc_bayes\n");
    for (vehicle, mut paths) in by_vehicle {
        paths.sort();
        let profiles = paths.iter().map(|p| load_profile(cfg, p, a.raw, Some(&vehicle))).collect::<Outcome<Vec<_>>>()?;
        let settings = cfg.replay_settings(&vehicle)?;
        let replay = replay_vehicle(&vehicle, &profiles, &settings)?;
        for r in &replay.trips {
            let c = &r.comparison;
            trips_csv.push_str(&format!(
                "{},{},{:.3},{:.3},{},{:.4},{:.4},{:.3},{:.3}\n",
                c.vehicle_id,
                c.trip_id,
                c.distance_mi,
                c.l_set_bayes,
                r.best.l_set().map(|x| format!("{x:.3}")).unwrap_or_default(),
                c.fuel_baseline_l,
                c.fuel_bayes_l,
                c.fuel_reduction_pct,
                c.min_soc_bayes
            ));
            comparisons.push(c.clone());
        }
        ingest::write_table(&out.join(format!("lhat_{vehicle}.csv")), &lhat_table(&replay, settings.baseline), d)?;

        // Trip-level plot data for the vehicle's last trip.
        if let (Some(profile), Some(last)) = (profiles.last(), replay.trips.last()) {
            let soc0 = initial_soc(profile, &settings.search);
            let run = compare_trip(&last.comparison.trip_id, profile, &settings.params, &settings.ems, settings.baseline, last.lhat, soc0)?;
            ingest::write_table(&out.join(format!("soc_{vehicle}.csv")), &soc_trajectory_table(profile, &run, &settings.ems), d)?;
            ingest::write_table(&out.join(format!("engine_{vehicle}.csv")), &engine_trace_table(profile, &run), d)?;
            let lsets: Vec<f64> = (1..=60).map(|i| 5.0 * i as f64).collect();
            let sweep = fuel_vs_lset(profile, &settings.params, &settings.ems, &lsets, soc0);
            ingest::write_table(&out.join(format!("sweep_{vehicle}.csv")), &sweep_table(&sweep), d)?;
        }
    }
    let report = fleet_report(&comparisons)?;
    let header = "vehicle_id,trips,fuel_baseline_l,fuel_bayes_l,fuel_reduction_pct,mean_trip_fuel_reduction_pct,mpge_improvement_pct\n";
    let mut vehicles_csv = String::from(header);
    for row in &report.per_vehicle {
        vehicles_csv.push_str(&aggregate_row(&row.vehicle_id, &row.aggregate));
        vehicles_csv.push('\n');
    }
    vehicles_csv.push_str(&aggregate_row("total", &report.total));
    vehicles_csv.push('\n');
    write_text(&out.join("vehicles.csv"), &vehicles_csv)?;
    write_text(&out.join("trips.csv"), &trips_csv)?;
    print!("{vehicles_csv}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["rextune", "no-such-command"]), 1);
        assert_eq!(run(["rextune", "run-trip", "x.csv"]), 1);
        assert_eq!(run(["rextune", "--help"]), 0);
    }

    #[test]
    fn failure_codes() {
        assert_eq!(Failure::from(LsetError::Infeasible { hi: 300.0, min_soc_at_hi: 1.0 }).code(), 2);
        assert_eq!(Failure::from(StoreError::Locked { vehicle: "v".into(), attempts: 1 }).code(), 3);
        assert_eq!(Failure::from(SimError::EmptyProfile).code(), 1);
    }
}
