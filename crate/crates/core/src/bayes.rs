//! Online Normal-Gamma estimation of a vehicle's best-`L_set` distribution.
//!
//! Each vehicle's best `L_set` is modelled as `N(mu, 1/lambda)` with unknown
//! mean and precision under a conjugate Normal-Gamma prior. After every trip
//! the posterior rolls over into the prior for the next observation, and the
//! next trip's parameter is the 0.99 quantile of the Student-t posterior
//! predictive.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use libm::sqrt;

use crate::special::{student_t_cdf, student_t_quantile};

/// Default quantile used when programming the next trip.
pub const DEFAULT_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BayesError {
    #[error("observed best L_set must be positive and finite, got {0}")]
    BadObservation(f64),
    #[error("prior field {field} must be positive and finite, got {value}")]
    BadPrior { field: &'static str, value: f64 },
    #[error("confidence must lie in (0, 1), got {0}")]
    BadConfidence(f64),
    #[error("no fleet histories supplied")]
    NoHistories,
    #[error("no prior on the search grid satisfies the constraints; violating vehicles: {violators:?}")]
    Infeasible { violators: Vec<String> },
}

/// Prior expressed in pseudo-sample terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PriorSpec {
    /// Prior mean of best `L_set`, miles.
    pub mu0: f64,
    /// Pseudo-samples behind `mu0`.
    pub n_mu0: f64,
    /// Prior precision, 1/mile^2.
    pub lambda0: f64,
    /// Pseudo-samples behind `lambda0`.
    pub n_lambda0: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { mu0: 74.0, n_mu0: 5.0, lambda0: 0.01, n_lambda0: 50.0 }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<(), BayesError> {
        for (field, value) in [
            ("mu0", self.mu0),
            ("n_mu0", self.n_mu0),
            ("lambda0", self.lambda0),
            ("n_lambda0", self.n_lambda0),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(BayesError::BadPrior { field, value });
            }
        }
        Ok(())
    }

    pub fn kappa0(&self) -> f64 {
        self.n_mu0
    }

    pub fn a0(&self) -> f64 {
        0.5 * self.n_lambda0
    }

    /// `n_lambda0 / (2 lambda0)`, so that the prior mean precision `a0/b0`
    /// equals `lambda0`.
    pub fn b0(&self) -> f64 {
        self.n_lambda0 / (2.0 * self.lambda0)
    }
}

/// Per-vehicle posterior `NormalGamma(mu, kappa, a, b)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PosteriorState {
    pub vehicle_id: String,
    pub mu: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
    pub n_trips: u64,
    /// Observed best `L_set` values, kept only when requested.
    pub history: Option<Vec<f64>>,
}

/// Location-scale Student-t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentT {
    pub dof: f64,
    pub loc: f64,
    pub scale2: f64,
}

impl StudentT {
    pub fn scale(&self) -> f64 {
        sqrt(self.scale2)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        student_t_cdf((x - self.loc) / self.scale(), self.dof)
    }

    /// Bisection on the standardized variable over `loc +- 50 scale`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.loc + self.scale() * student_t_quantile(p, self.dof)
    }
}

pub fn init_state(prior: &PriorSpec, vehicle_id: impl Into<String>) -> PosteriorState {
    PosteriorState {
        vehicle_id: vehicle_id.into(),
        mu: prior.mu0,
        kappa: prior.kappa0(),
        a: prior.a0(),
        b: prior.b0(),
        n_trips: 0,
        history: None,
    }
}

impl PosteriorState {
    pub fn with_history(mut self) -> Self {
        self.history.get_or_insert_with(Vec::new);
        self
    }

    /// One-observation conjugate update; the current posterior acts as prior.
    pub fn update(&self, observed: f64) -> Result<Self, BayesError> {
        if !(observed.is_finite() && observed > 0.0) {
            return Err(BayesError::BadObservation(observed));
        }
        let (mu0, kappa0, a0, b0) = (self.mu, self.kappa, self.a, self.b);
        let kappa = kappa0 + 1.0;
        let mu = (kappa0 * mu0 + observed) / kappa;
        let a = a0 + 0.5;
        let dev = observed - mu0;
        let b = b0 + kappa0 / (2.0 * kappa) * dev * dev;
        let history = self.history.as_ref().map(|h| {
            let mut h = h.clone();
            h.push(observed);
            h
        });
        Ok(Self {
            vehicle_id: self.vehicle_id.clone(),
            mu,
            kappa,
            a,
            b,
            n_trips: self.n_trips + 1,
            history,
        })
    }

    pub fn predictive(&self) -> StudentT {
        StudentT {
            dof: 2.0 * self.a,
            loc: self.mu,
            scale2: self.b * (self.kappa + 1.0) / (self.a * self.kappa),
        }
    }

    /// Conservative next-trip parameter: the `confidence` quantile of the
    /// posterior predictive.
    pub fn predict_lset(&self, confidence: f64) -> Result<f64, BayesError> {
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(BayesError::BadConfidence(confidence));
        }
        Ok(self.predictive().quantile(confidence))
    }
}

/// Closed-form posterior after a batch of observations. Uses the biased
/// (divide-by-N) sample variance, which is what makes the batch and
/// sequential routes agree.
pub fn batch_posterior(prior: &PriorSpec, vehicle_id: impl Into<String>, obs: &[f64]) -> PosteriorState {
    let mut state = init_state(prior, vehicle_id);
    if obs.is_empty() {
        return state;
    }
    let n = obs.len() as f64;
    let mean = obs.iter().sum::<f64>() / n;
    let var = obs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let (mu0, kappa0, a0, b0) = (state.mu, state.kappa, state.a, state.b);
    let kappa = kappa0 + n;
    state.mu = (kappa0 * mu0 + n * mean) / kappa;
    state.kappa = kappa;
    state.a = 0.5 * (2.0 * a0 + n);
    state.b = b0 + 0.5 * n * var + kappa0 * n / (2.0 * kappa) * (mean - mu0) * (mean - mu0);
    state.n_trips = obs.len() as u64;
    state
}

/// Running predictions for one vehicle: element `i` is the prediction made
/// before observing trip `i`.
pub fn running_predictions(prior: &PriorSpec, observations: &[f64], confidence: f64) -> Result<Vec<f64>, BayesError> {
    let mut state = init_state(prior, "");
    let mut out = Vec::with_capacity(observations.len());
    for &x in observations {
        out.push(state.predict_lset(confidence)?);
        state = state.update(x)?;
    }
    Ok(out)
}

/// Grid searched by [`fit_prior`].
#[derive(Debug, Clone, PartialEq)]
pub struct PriorGrid {
    pub mu0: Vec<f64>,
    pub n_mu0: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub n_lambda0: Vec<f64>,
}

impl Default for PriorGrid {
    fn default() -> Self {
        Self {
            mu0: (0..=25).map(|i| 50.0 + 2.0 * i as f64).collect(),
            n_mu0: alloc::vec![1.0, 2.0, 5.0, 10.0, 20.0],
            lambda0: alloc::vec![0.005, 0.01, 0.02, 0.05],
            n_lambda0: alloc::vec![10.0, 25.0, 50.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorFit {
    pub prior: PriorSpec,
    pub initial_prediction: f64,
    /// Mean of `prediction - best L_set` over all trips.
    pub mean_gap: f64,
    /// Smallest `prediction - best L_set` over all trips (>= 0 when feasible).
    pub min_margin: f64,
}

/// Evaluation of a single prior against fleet histories.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorCheck {
    pub initial_prediction: f64,
    pub mean_gap: f64,
    pub min_margin: f64,
    pub trips: usize,
    pub violations: usize,
    pub violating_vehicles: Vec<String>,
}

/// Replays every history under `prior` and tallies the conservativeness
/// constraint `prediction >= best L_set`.
pub fn check_prior(prior: &PriorSpec, fleet: &BTreeMap<String, Vec<f64>>, confidence: f64) -> Result<PriorCheck, BayesError> {
    let mut quantiles = QuantileCache::new(confidence);
    check_prior_cached(prior, fleet, &mut quantiles)
}

fn check_prior_cached(
    prior: &PriorSpec,
    fleet: &BTreeMap<String, Vec<f64>>,
    quantiles: &mut QuantileCache,
) -> Result<PriorCheck, BayesError> {
    prior.validate()?;
    let init = init_state(prior, "");
    let initial_prediction = quantiles.predict(&init);
    let mut check = PriorCheck {
        initial_prediction,
        mean_gap: 0.0,
        min_margin: f64::INFINITY,
        trips: 0,
        violations: 0,
        violating_vehicles: Vec::new(),
    };
    let mut gap_sum = 0.0;
    for (vehicle, history) in fleet {
        let mut state = init.clone();
        let mut violated = false;
        for &x in history {
            let pred = quantiles.predict(&state);
            let margin = pred - x;
            gap_sum += margin;
            check.min_margin = check.min_margin.min(margin);
            check.trips += 1;
            if margin < 0.0 {
                check.violations += 1;
                violated = true;
            }
            state = state.update(x)?;
        }
        if violated {
            check.violating_vehicles.push(vehicle.clone());
        }
    }
    if check.trips > 0 {
        check.mean_gap = gap_sum / check.trips as f64;
    }
    Ok(check)
}

/// Memoizes standard-t quantiles by degrees of freedom; along a replay the
/// dof only takes the values `n_lambda0 + N`.
struct QuantileCache {
    confidence: f64,
    by_dof: BTreeMap<u64, f64>,
}

impl QuantileCache {
    fn new(confidence: f64) -> Self {
        Self { confidence, by_dof: BTreeMap::new() }
    }

    fn predict(&mut self, state: &PosteriorState) -> f64 {
        let t = state.predictive();
        let key = t.dof.to_bits();
        let confidence = self.confidence;
        let q = *self.by_dof.entry(key).or_insert_with(|| student_t_quantile(confidence, t.dof));
        t.loc + t.scale() * q
    }
}

/// Grid search for the prior with the smallest mean gap between running
/// predictions and best `L_set`, subject to the initial prediction lying
/// within `baseline +- baseline_tol` and no trip being under-predicted.
pub fn fit_prior(
    fleet: &BTreeMap<String, Vec<f64>>,
    baseline: f64,
    baseline_tol: f64,
    grid: &PriorGrid,
) -> Result<PriorFit, BayesError> {
    if fleet.is_empty() {
        return Err(BayesError::NoHistories);
    }
    let mut quantiles = QuantileCache::new(DEFAULT_CONFIDENCE);
    let mut best: Option<PriorFit> = None;
    // Vehicles that blocked the least-violating candidate, for the report.
    let mut fewest: Option<(usize, Vec<String>)> = None;
    for &mu0 in &grid.mu0 {
        for &n_mu0 in &grid.n_mu0 {
            for &lambda0 in &grid.lambda0 {
                for &n_lambda0 in &grid.n_lambda0 {
                    let prior = PriorSpec { mu0, n_mu0, lambda0, n_lambda0 };
                    let check = check_prior_cached(&prior, fleet, &mut quantiles)?;
                    if (check.initial_prediction - baseline).abs() > baseline_tol {
                        continue;
                    }
                    if check.violations > 0 {
                        if fewest.as_ref().is_none_or(|(v, _)| check.violations < *v) {
                            fewest = Some((check.violations, check.violating_vehicles));
                        }
                        continue;
                    }
                    if best.as_ref().is_none_or(|b| check.mean_gap < b.mean_gap) {
                        best = Some(PriorFit {
                            prior,
                            initial_prediction: check.initial_prediction,
                            mean_gap: check.mean_gap,
                            min_margin: check.min_margin,
                        });
                    }
                }
            }
        }
    }
    best.ok_or_else(|| BayesError::Infeasible { violators: fewest.map(|(_, v)| v).unwrap_or_default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn table_prior_initial_state() {
        let s = init_state(&PriorSpec::default(), "T12");
        assert_eq!((s.mu, s.kappa, s.a, s.b, s.n_trips), (74.0, 5.0, 25.0, 2500.0, 0));
        let t = s.predictive();
        assert_eq!((t.dof, t.loc), (50.0, 74.0));
        assert!((t.scale2 - 120.0).abs() < 1e-12);
    }

    #[test]
    fn same_prior_same_state() {
        let p = PriorSpec::default();
        let mut a = init_state(&p, "A");
        let b = init_state(&p, "B");
        a.vehicle_id = "B".into();
        assert_eq!(a, b);
    }

    #[test]
    fn observe_prior_mean() {
        let s = init_state(&PriorSpec::default(), "v").update(74.0).unwrap();
        assert_eq!((s.mu, s.kappa, s.a, s.b, s.n_trips), (74.0, 6.0, 25.5, 2500.0, 1));
    }

    #[test]
    fn observe_forty() {
        // (5*74 + 40)/6 and 2500 + (5/12)*34^2, by hand
        let s = init_state(&PriorSpec::default(), "v").update(40.0).unwrap();
        assert!((s.mu - 410.0 / 6.0).abs() < 1e-12);
        assert!((s.b - (2500.0 + 5.0 / 12.0 * 1156.0)).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_positive() {
        let s = init_state(&PriorSpec::default(), "v");
        assert_eq!(s.update(0.0), Err(BayesError::BadObservation(0.0)));
        assert!(s.update(f64::NAN).is_err());
        assert!(s.predict_lset(1.0).is_err());
    }

    #[test]
    fn batch_two_observations() {
        let p = PriorSpec::default();
        let b = batch_posterior(&p, "v", &[60.0, 80.0]);
        assert!((b.mu - 510.0 / 7.0).abs() < 1e-12);
        let s = init_state(&p, "v").update(60.0).unwrap().update(80.0).unwrap();
        for (x, y) in [(b.mu, s.mu), (b.kappa, s.kappa), (b.a, s.a), (b.b, s.b)] {
            assert!(close(x, y, 1e-12), "{x} vs {y}");
        }
    }

    #[test]
    fn batch_empty_and_constant() {
        let p = PriorSpec::default();
        assert_eq!(batch_posterior(&p, "v", &[]), init_state(&p, "v"));
        let b = batch_posterior(&p, "v", &[74.0; 10]);
        assert_eq!((b.mu, b.b), (74.0, 2500.0));
    }

    #[test]
    fn predictions() {
        let s = init_state(&PriorSpec::default(), "v");
        // 74 + t_50^{-1}(0.99) * sqrt(120), t quantile from scipy
        let want = 74.0 + 2.403_271_916_674_171_4 * libm::sqrt(120.0);
        assert!((s.predict_lset(0.99).unwrap() - want).abs() < 1e-6);
        assert!((s.predict_lset(0.5).unwrap() - 74.0).abs() < 1e-8);
        // after one 40-mile trip; reference value from scipy.stats.t.ppf
        let one = s.update(40.0).unwrap().predict_lset(0.99).unwrap();
        assert!((one - 96.384_748_534_400_23).abs() < 1e-5, "{one}");
    }

    #[test]
    fn cdf_inverts_quantile() {
        let s = init_state(&PriorSpec::default(), "v").update(55.0).unwrap();
        let t = s.predictive();
        for p in [0.01, 0.3, 0.9, 0.99, 0.999] {
            assert!((t.cdf(t.quantile(p)) - p).abs() < 1e-6);
        }
        assert_eq!(t.cdf(f64::INFINITY), 1.0);
        assert_eq!(t.cdf(f64::NEG_INFINITY), 0.0);
        assert!((t.cdf(t.loc) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn history_is_optional() {
        let s = init_state(&PriorSpec::default(), "v").update(50.0).unwrap();
        assert_eq!(s.history, None);
        let s = init_state(&PriorSpec::default(), "v").with_history().update(50.0).unwrap();
        assert_eq!(s.history, Some(vec![50.0]));
    }

    #[test]
    fn fit_prior_degenerate_fleet() {
        let mut fleet = BTreeMap::new();
        fleet.insert(String::from("v"), vec![74.0; 20]);
        let fit = fit_prior(&fleet, 100.0, 5.0, &PriorGrid::default()).unwrap();
        assert!(fit.min_margin >= 0.0);
        assert!((fit.initial_prediction - 100.0).abs() <= 5.0);
        // Every feasible grid member has a gap at least as large.
        let grid = PriorGrid::default();
        for &mu0 in &grid.mu0 {
            for &n_lambda0 in &grid.n_lambda0 {
                let p = PriorSpec { mu0, n_mu0: 5.0, lambda0: 0.01, n_lambda0 };
                let c = check_prior(&p, &fleet, 0.99).unwrap();
                if c.violations == 0 && (c.initial_prediction - 100.0).abs() <= 5.0 {
                    assert!(c.mean_gap >= fit.mean_gap - 1e-12);
                }
            }
        }
    }

    #[test]
    fn fit_prior_infeasible_reports_vehicles() {
        let mut fleet = BTreeMap::new();
        fleet.insert(String::from("long-haul"), vec![400.0; 5]);
        match fit_prior(&fleet, 100.0, 5.0, &PriorGrid::default()) {
            Err(BayesError::Infeasible { violators }) => assert_eq!(violators, vec![String::from("long-haul")]),
            other => panic!("{other:?}"),
        }
        assert_eq!(fit_prior(&BTreeMap::new(), 100.0, 5.0, &PriorGrid::default()), Err(BayesError::NoHistories));
    }
}
