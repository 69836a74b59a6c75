//! Monte Carlo encounter-graph simulator used to check the mean-field closed
//! forms at finite population size.
//!
//! Each trial realizes the probabilistic model directly:
//!
//! 1. every user caches file `f` independently with probability `x_{u,f}`;
//! 2. every user issues one request drawn from the popularity law;
//! 3. every unordered pair of users meets independently with probability `rho`;
//! 4. a request is served locally if cached, otherwise by a uniformly chosen
//!    neighbor holding the file, otherwise over the cellular link.
//!
//! Trial `t` draws from its own ChaCha stream `t` under the run seed, so
//! results do not depend on how trials are spread over worker threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::ContentCatalog;
use crate::error::{invalid, Error, Result};
use crate::meanfield::{MeanFieldState, MobilityModel, PopulationProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Draws, per request, the number of met holders as
    /// `Binomial(K_f, rho)` from the trial's realized holder count `K_f`.
    /// Exact for every per-request quantity; no graph is stored.
    #[default]
    Counting,
    /// Materializes the encounter graph and picks concrete servers.
    FullGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    pub trials: usize,
    pub seed: u64,
    pub mode: SamplingMode,
    /// Storage capacity used to report how often realized caches overflow.
    pub storage_capacity: Option<f64>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0x5eed,
            mode: SamplingMode::Counting,
            storage_capacity: None,
        }
    }
}

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
    /// Number of underlying observations; zero means the estimate is empty.
    pub samples: u64,
}

impl Estimate {
    fn empty() -> Self {
        Self {
            value: f64::NAN,
            standard_error: f64::NAN,
            samples: 0,
        }
    }
}

/// Per-user mean traffic volumes observed across all trials.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmpiricalLoads {
    pub local: f64,
    pub d2d_in: f64,
    pub cellular: f64,
    pub d2d_out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// Fraction of non-local requests for `f` served over D2D.
    pub empirical_hit: Vec<Estimate>,
    /// D2D requests for `f` served per realized holder of `f`.
    pub empirical_requesters: Vec<Estimate>,
    pub empirical_loads: EmpiricalLoads,
    /// Request counts by outcome, summed over trials.
    pub local_requests: u64,
    pub d2d_requests: u64,
    pub cellular_requests: u64,
    pub trial_count: usize,
    pub seed: u64,
    /// Fraction of (user, trial) pairs whose realized cache exceeded the
    /// storage capacity, when a capacity was supplied.
    pub storage_exceedance: Option<f64>,
}

#[derive(Debug, Clone, Default)]
struct TrialCounts {
    nonlocal: Vec<u64>,
    d2d: Vec<u64>,
    local: Vec<u64>,
    holders: Vec<u64>,
    over_capacity: u64,
}

impl TrialCounts {
    fn new(files: usize) -> Self {
        Self {
            nonlocal: vec![0; files],
            d2d: vec![0; files],
            local: vec![0; files],
            holders: vec![0; files],
            over_capacity: 0,
        }
    }
}

/// Symmetric neighbor lists of a `G(U, rho)` graph.
pub fn edge_sampling<R: Rng + ?Sized>(
    population: usize,
    encounter_probability: f64,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut neighbors = vec![Vec::new(); population];
    if encounter_probability <= 0.0 {
        return neighbors;
    }
    for u in 0..population {
        for v in (u + 1)..population {
            if encounter_probability >= 1.0 || rng.random::<f64>() < encounter_probability {
                neighbors[u].push(v);
                neighbors[v].push(u);
            }
        }
    }
    neighbors
}

/// Graph for `seed`, drawn from the same stream layout as trial 0.
pub fn edge_sampling_seeded(
    population: usize,
    encounter_probability: f64,
    seed: u64,
) -> Vec<Vec<usize>> {
    edge_sampling(population, encounter_probability, &mut trial_rng(seed, 0))
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn draw_file<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cumulative
        .partition_point(|&c| c <= u)
        .min(cumulative.len() - 1)
}

fn run_trial(
    users: &[&[f64]],
    catalog: &ContentCatalog,
    cumulative: &[f64],
    rho: f64,
    settings: &OracleSettings,
    trial: usize,
) -> TrialCounts {
    let files = catalog.file_count();
    let population = users.len();
    let mut rng = trial_rng(settings.seed, trial);
    let mut counts = TrialCounts::new(files);

    let mut cached = vec![false; population * files];
    for (u, x) in users.iter().enumerate() {
        let mut volume = 0.0;
        for f in 0..files {
            if rng.random::<f64>() < x[f] {
                cached[u * files + f] = true;
                counts.holders[f] += 1;
                volume += catalog.sizes()[f];
            }
        }
        if settings
            .storage_capacity
            .is_some_and(|c| volume > c + 1e-12)
        {
            counts.over_capacity += 1;
        }
    }
    let requests: Vec<usize> = (0..population)
        .map(|_| draw_file(cumulative, &mut rng))
        .collect();

    match settings.mode {
        SamplingMode::Counting => {
            for (u, &f) in requests.iter().enumerate() {
                if cached[u * files + f] {
                    counts.local[f] += 1;
                    continue;
                }
                counts.nonlocal[f] += 1;
                // The requester is not a holder, so all K_f holders are
                // potential neighbors.
                let met = if rho <= 0.0 || counts.holders[f] == 0 {
                    0
                } else if rho >= 1.0 {
                    counts.holders[f]
                } else {
                    Binomial::new(counts.holders[f], rho)
                        .expect("valid binomial parameters")
                        .sample(&mut rng)
                };
                if met > 0 {
                    counts.d2d[f] += 1;
                }
            }
        }
        SamplingMode::FullGraph => {
            let graph = edge_sampling(population, rho, &mut rng);
            let mut holders = Vec::new();
            for (u, &f) in requests.iter().enumerate() {
                if cached[u * files + f] {
                    counts.local[f] += 1;
                    continue;
                }
                counts.nonlocal[f] += 1;
                holders.clear();
                holders.extend(graph[u].iter().copied().filter(|&v| cached[v * files + f]));
                if !holders.is_empty() {
                    // The chosen server is drawn to keep the random stream
                    // aligned with a per-server accounting.
                    let _server = holders[rng.random_range(0..holders.len())];
                    counts.d2d[f] += 1;
                }
            }
        }
    }
    counts
}

/// Runs `settings.trials` independent realizations of the caching and
/// encounter model for `profile`.
pub fn simulate(
    profile: &PopulationProfile,
    catalog: &ContentCatalog,
    mobility: &MobilityModel,
    settings: &OracleSettings,
) -> Result<TrialOutcome> {
    if settings.trials == 0 {
        return Err(invalid("oracle needs at least one trial"));
    }
    if profile.file_count() != catalog.file_count() {
        return Err(Error::DimensionMismatch {
            what: "profile files",
            expected: catalog.file_count(),
            found: profile.file_count(),
        });
    }
    if profile.population() != mobility.population() {
        return Err(Error::DimensionMismatch {
            what: "profile population",
            expected: mobility.population(),
            found: profile.population(),
        });
    }
    if mobility.population() < 2 {
        return Err(invalid("oracle needs at least two users"));
    }

    let users: Vec<&[f64]> = profile.per_user().map(|s| s.as_slice()).collect();
    let mut cumulative: Vec<f64> = catalog
        .popularity()
        .iter()
        .scan(0.0, |acc, q| {
            *acc += q;
            Some(*acc)
        })
        .collect();
    if let Some(last) = cumulative.last_mut() {
        *last = 1.0;
    }
    let rho = mobility.encounter_probability();

    let per_trial: Vec<TrialCounts> = (0..settings.trials)
        .into_par_iter()
        .map(|t| run_trial(&users, catalog, &cumulative, rho, settings, t))
        .collect();
    Ok(summarize(&per_trial, catalog, users.len(), settings))
}

/// Ratio of summed counts across trials, with its between-trial standard
/// error. Requests in one trial share a single cache and encounter
/// realization and are not independent, so trials are the sampling units.
///
/// Sharing a realization only adds variance, so the result is floored at
/// `independent_se(numerator, denominator)`, the error under independent
/// sampling. The floor also covers a single trial, and samples with no
/// variation at all (every request served, for instance).
fn ratio_estimate(
    per_trial: &[TrialCounts],
    numerator: impl Fn(&TrialCounts) -> u64,
    denominator: impl Fn(&TrialCounts) -> u64,
    independent_se: impl Fn(f64, f64) -> f64,
) -> Estimate {
    let num: u64 = per_trial.iter().map(&numerator).sum();
    let den: u64 = per_trial.iter().map(&denominator).sum();
    if den == 0 {
        return Estimate::empty();
    }
    let ratio = num as f64 / den as f64;
    let t = per_trial.len() as f64;
    let between_trials = if per_trial.len() > 1 {
        let ss: f64 = per_trial
            .iter()
            .map(|c| (numerator(c) as f64 - ratio * denominator(c) as f64).powi(2))
            .sum();
        (ss * t / (t - 1.0)).sqrt() / den as f64
    } else {
        0.0
    };
    Estimate {
        value: ratio,
        standard_error: between_trials.max(independent_se(num as f64, den as f64)),
        samples: den,
    }
}

fn summarize(
    per_trial: &[TrialCounts],
    catalog: &ContentCatalog,
    population: usize,
    settings: &OracleSettings,
) -> TrialOutcome {
    let files = catalog.file_count();
    let mut total = TrialCounts::new(files);
    for t in per_trial {
        for f in 0..files {
            total.nonlocal[f] += t.nonlocal[f];
            total.d2d[f] += t.d2d[f];
            total.local[f] += t.local[f];
            total.holders[f] += t.holders[f];
        }
        total.over_capacity += t.over_capacity;
    }

    let trials = per_trial.len();
    let empirical_hit = (0..files)
        .map(|f| {
            ratio_estimate(
                per_trial,
                |t| t.d2d[f],
                |t| t.nonlocal[f],
                // Binomial, with the Agresti-Coull adjustment so that
                // all-or-nothing samples keep a positive width.
                |x, n| {
                    let p = (x + 2.0) / (n + 4.0);
                    (p * (1.0 - p) / (n + 4.0)).sqrt()
                },
            )
        })
        .collect();
    let empirical_requesters = (0..files)
        .map(|f| {
            ratio_estimate(
                per_trial,
                |t| t.d2d[f],
                |t| t.holders[f],
                // Poisson count, with one pseudo-count for empty samples.
                |x, n| (x + 1.0).sqrt() / n,
            )
        })
        .collect();

    let denom = (population * trials) as f64;
    let sizes = catalog.sizes();
    let volume = |counts: &[u64]| -> f64 {
        counts
            .iter()
            .zip(sizes)
            .map(|(c, s)| *c as f64 * s)
            .sum::<f64>()
            / denom
    };
    let cellular: Vec<u64> = (0..files)
        .map(|f| total.nonlocal[f] - total.d2d[f])
        .collect();
    let d2d_volume = volume(&total.d2d);
    let empirical_loads = EmpiricalLoads {
        local: volume(&total.local),
        d2d_in: d2d_volume,
        cellular: volume(&cellular),
        // Every D2D transfer is one user's input and another's output.
        d2d_out: d2d_volume,
    };

    TrialOutcome {
        empirical_hit,
        empirical_requesters,
        empirical_loads,
        local_requests: total.local.iter().sum(),
        d2d_requests: total.d2d.iter().sum(),
        cellular_requests: cellular.iter().sum(),
        trial_count: trials,
        seed: settings.seed,
        storage_exceedance: settings
            .storage_capacity
            .map(|_| total.over_capacity as f64 / denom),
    }
}

/// Acceptance band for one closed-form versus empirical comparison:
/// `|hat - closed| <= max(floor, sigmas * se) + allowance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Band {
    pub absolute_floor: f64,
    pub sigmas: f64,
    /// Coefficient `k` of the finite-population allowance `k (1 + psi) / U`.
    /// Zero disables it.
    pub finite_size_coefficient: f64,
}

impl Default for Band {
    fn default() -> Self {
        Self {
            absolute_floor: 0.01,
            sigmas: 4.0,
            finite_size_coefficient: 0.0,
        }
    }
}

impl Band {
    pub fn allowance(&self, mobility: &MobilityModel) -> f64 {
        self.finite_size_coefficient * (1.0 + mobility.mean_neighbors())
            / mobility.population() as f64
    }

    pub fn width(&self, estimate: &Estimate, mobility: &MobilityModel) -> f64 {
        self.absolute_floor
            .max(self.sigmas * estimate.standard_error)
            + self.allowance(mobility)
    }

    /// Empty estimates carry no evidence and always pass.
    pub fn contains(&self, closed: f64, estimate: &Estimate, mobility: &MobilityModel) -> bool {
        estimate.samples == 0 || (estimate.value - closed).abs() <= self.width(estimate, mobility)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub file_id: usize,
    pub eta: f64,
    pub p_closed: f64,
    pub p_hat: Estimate,
    pub n_closed: f64,
    pub n_hat: Estimate,
    pub p_in_band: bool,
    pub n_in_band: bool,
}

/// Lines the oracle estimates up against the closed-form state.
pub fn compare(
    outcome: &TrialOutcome,
    state: &MeanFieldState,
    mobility: &MobilityModel,
    band: &Band,
) -> Vec<ComparisonRow> {
    (0..state.file_count())
        .map(|f| {
            let p_hat = outcome.empirical_hit[f];
            let n_hat = outcome.empirical_requesters[f];
            ComparisonRow {
                file_id: f + 1,
                eta: state.cache_fraction[f],
                p_closed: state.hit_probability[f],
                p_hat,
                n_closed: state.expected_requesters[f],
                n_hat,
                p_in_band: band.contains(state.hit_probability[f], &p_hat, mobility),
                n_in_band: band.contains(state.expected_requesters[f], &n_hat, mobility),
            }
        })
        .collect()
}

/// CSV columns: `file_id, eta, P_closed, P_hat, P_se, N_closed, N_hat, N_se,
/// trials, seed`.
pub fn write_comparison_csv<W: Write>(
    rows: &[ComparisonRow],
    outcome: &TrialOutcome,
    out: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "file_id", "eta", "P_closed", "P_hat", "P_se", "N_closed", "N_hat", "N_se", "trials",
        "seed",
    ])?;
    for r in rows {
        writer.write_record([
            r.file_id.to_string(),
            r.eta.to_string(),
            r.p_closed.to_string(),
            r.p_hat.value.to_string(),
            r.p_hat.standard_error.to_string(),
            r.n_closed.to_string(),
            r.n_hat.value.to_string(),
            r.n_hat.standard_error.to_string(),
            outcome.trial_count.to_string(),
            outcome.seed.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::user_model::Strategy;

    fn profile(x: &[f64], u: usize) -> PopulationProfile {
        PopulationProfile::homogeneous(Strategy::new(x.to_vec()).unwrap(), u).unwrap()
    }

    #[test]
    fn complete_and_empty_graphs() {
        let mut rng = trial_rng(1, 0);
        let g = edge_sampling(6, 1.0, &mut rng);
        assert!(g.iter().all(|n| n.len() == 5));
        let g = edge_sampling(6, 0.0, &mut rng);
        assert!(g.iter().all(Vec::is_empty));
    }

    #[test]
    fn graph_is_symmetric() {
        let g = edge_sampling_seeded(50, 0.2, 9);
        for (u, ns) in g.iter().enumerate() {
            for &v in ns {
                assert!(g[v].contains(&u));
            }
        }
    }

    #[test]
    fn zero_rho_means_no_d2d() {
        let catalog = ContentCatalog::uniform(3, 1.0, 0.8, 0.0).unwrap();
        let mobility = MobilityModel::new(200, 0.0).unwrap();
        for mode in [SamplingMode::Counting, SamplingMode::FullGraph] {
            let settings = OracleSettings {
                trials: 5,
                mode,
                ..Default::default()
            };
            let out = simulate(
                &profile(&[0.5, 0.3, 0.1], 200),
                &catalog,
                &mobility,
                &settings,
            )
            .unwrap();
            assert_eq!(out.d2d_requests, 0);
            assert!(out.empirical_hit.iter().all(|e| e.value == 0.0));
            assert_eq!(out.local_requests + out.cellular_requests, 1000);
        }
    }

    #[test]
    fn full_caching_is_all_local() {
        let catalog = ContentCatalog::uniform(3, 1.0, 0.8, 0.0).unwrap();
        let mobility = MobilityModel::new(100, 0.1).unwrap();
        let settings = OracleSettings {
            trials: 3,
            ..Default::default()
        };
        let out = simulate(&profile(&[1.0; 3], 100), &catalog, &mobility, &settings).unwrap();
        assert_eq!(out.local_requests, 300);
        assert!(out.empirical_requesters.iter().all(|e| e.value == 0.0));
        assert!(out.empirical_hit.iter().all(|e| e.samples == 0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let catalog = ContentCatalog::uniform(2, 1.0, 0.8, 0.0).unwrap();
        let mobility = MobilityModel::new(10, 0.1).unwrap();
        let p = profile(&[0.5, 0.5], 10);
        let zero = OracleSettings {
            trials: 0,
            ..Default::default()
        };
        assert!(simulate(&p, &catalog, &mobility, &zero).is_err());
        let one_user = MobilityModel::new(1, 0.1).unwrap();
        let q = profile(&[0.5, 0.5], 1);
        assert!(simulate(&q, &catalog, &one_user, &OracleSettings::default()).is_err());
        let wrong = profile(&[0.5, 0.5], 9);
        assert!(simulate(&wrong, &catalog, &mobility, &OracleSettings::default()).is_err());
    }

    #[test]
    fn exceedance_is_reported() {
        let catalog = ContentCatalog::uniform(4, 1.0, 0.0, 0.0).unwrap();
        let mobility = MobilityModel::new(50, 0.05).unwrap();
        let settings = OracleSettings {
            trials: 20,
            storage_capacity: Some(1.0),
            ..Default::default()
        };
        let out = simulate(&profile(&[0.5; 4], 50), &catalog, &mobility, &settings).unwrap();
        // P(Bin(4, 0.5) >= 2) = 11/16.
        let e = out.storage_exceedance.unwrap();
        assert!((e - 11.0 / 16.0).abs() < 0.1, "{e}");
    }
}
