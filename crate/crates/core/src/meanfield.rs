//! Large-population closed forms for D2D availability and serving load.
//!
//! Every user meets every other user independently with probability `rho`,
//! so a user has `psi = U * rho` neighbors on average. With a fraction
//! `eta_f` of the population caching file `f`, the number of neighbors
//! holding `f` is asymptotically Poisson with mean `eta_f * psi`, which gives:
//!
//! * hit probability `P_f = 1 - exp(-eta_f psi)`,
//! * selection probability of a given holder `P^C_f = (1 - exp(-eta_f psi)) / (eta_f psi)`,
//! * requesters served per holder `N_f = (1 - eta_f) / eta_f * q_f * (1 - exp(-eta_f psi))`.
//!
//! The forms are applied at finite `U`; the Monte Carlo oracle measures the
//! resulting gap.

use crate::catalog::ContentCatalog;
use crate::error::{invalid, Error, Result};
use crate::user_model::Strategy;

/// Below this value of `eta * psi` the removable singularity of
/// `(1 - e^-z) / z` is evaluated by its Taylor series.
pub const SMALL_ARGUMENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityModel {
    population: usize,
    encounter_probability: f64,
    mean_neighbors: f64,
}

impl MobilityModel {
    pub fn new(population: usize, encounter_probability: f64) -> Result<Self> {
        if population == 0 {
            return Err(invalid("population must be positive"));
        }
        if !(0.0..=1.0).contains(&encounter_probability) {
            return Err(invalid(format!(
                "encounter probability must lie in [0, 1], got {encounter_probability}"
            )));
        }
        Ok(Self {
            population,
            encounter_probability,
            mean_neighbors: population as f64 * encounter_probability,
        })
    }

    /// Builds the model from the mean neighbor count, `rho = psi / U`.
    pub fn from_mean_neighbors(population: usize, mean_neighbors: f64) -> Result<Self> {
        if population == 0 {
            return Err(invalid("population must be positive"));
        }
        if !(mean_neighbors.is_finite() && mean_neighbors >= 0.0) {
            return Err(invalid(format!(
                "mean neighbor count must be nonnegative, got {mean_neighbors}"
            )));
        }
        let rho = mean_neighbors / population as f64;
        if rho > 1.0 {
            return Err(invalid(format!(
                "mean neighbor count {mean_neighbors} exceeds population {population}"
            )));
        }
        Ok(Self {
            population,
            encounter_probability: rho,
            mean_neighbors,
        })
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn encounter_probability(&self) -> f64 {
        self.encounter_probability
    }

    /// `psi = U * rho`.
    pub fn mean_neighbors(&self) -> f64 {
        self.mean_neighbors
    }
}

/// Caching strategies of the whole population, stored as distinct rows with
/// multiplicities. A full `U x F` matrix is the case where every count is 1;
/// a homogeneous population is a single row with count `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationProfile {
    rows: Vec<Strategy>,
    counts: Vec<usize>,
}

impl PopulationProfile {
    pub fn new(rows: Vec<Strategy>, counts: Vec<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(invalid("population profile has no users"));
        }
        if rows.len() != counts.len() {
            return Err(Error::DimensionMismatch {
                what: "profile row counts",
                expected: rows.len(),
                found: counts.len(),
            });
        }
        if counts.iter().sum::<usize>() == 0 {
            return Err(invalid("population profile has no users"));
        }
        let file_count = rows[0].len();
        if let Some(row) = rows.iter().find(|r| r.len() != file_count) {
            return Err(Error::DimensionMismatch {
                what: "profile row length",
                expected: file_count,
                found: row.len(),
            });
        }
        Ok(Self { rows, counts })
    }

    /// One row per user.
    pub fn from_matrix(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let rows = matrix
            .into_iter()
            .map(Strategy::new)
            .collect::<Result<Vec<_>>>()?;
        let counts = vec![1; rows.len()];
        Self::new(rows, counts)
    }

    pub fn homogeneous(strategy: Strategy, population: usize) -> Result<Self> {
        Self::new(vec![strategy], vec![population])
    }

    pub fn rows(&self) -> &[Strategy] {
        &self.rows
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn population(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn file_count(&self) -> usize {
        self.rows[0].len()
    }

    /// Expands the rows into one strategy per user.
    pub fn per_user(&self) -> impl Iterator<Item = &Strategy> {
        self.rows
            .iter()
            .zip(&self.counts)
            .flat_map(|(row, &n)| std::iter::repeat_n(row, n))
    }
}

/// Population-level quantities every user treats as fixed within a round.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub cache_fraction: Vec<f64>,
    pub hit_probability: Vec<f64>,
    pub selection_probability: Vec<f64>,
    pub expected_requesters: Vec<f64>,
}

impl MeanFieldState {
    /// Derives the state from population cache fractions directly.
    pub fn from_cache_fraction(
        cache_fraction: Vec<f64>,
        mobility: &MobilityModel,
        catalog: &ContentCatalog,
    ) -> Result<Self> {
        if cache_fraction.len() != catalog.file_count() {
            return Err(Error::DimensionMismatch {
                what: "cache fraction",
                expected: catalog.file_count(),
                found: cache_fraction.len(),
            });
        }
        if let Some(bad) = cache_fraction.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(invalid(format!("cache fraction {bad} outside [0, 1]")));
        }
        let psi = mobility.mean_neighbors();
        let hit_probability = cache_fraction
            .iter()
            .map(|&eta| hit_probability(eta, psi))
            .collect();
        let selection_probability = cache_fraction
            .iter()
            .map(|&eta| selection_probability(eta, psi))
            .collect();
        let expected_requesters = cache_fraction
            .iter()
            .zip(catalog.popularity())
            .map(|(&eta, &q)| expected_requesters(eta, psi, q))
            .collect();
        Ok(Self {
            cache_fraction,
            hit_probability,
            selection_probability,
            expected_requesters,
        })
    }

    pub fn file_count(&self) -> usize {
        self.cache_fraction.len()
    }

    /// A state with externally chosen `P_f` and `N_f`, for exercising the
    /// user model in isolation. Cache fraction and selection probability are
    /// left at zero and one.
    pub fn from_parts(hit_probability: Vec<f64>, expected_requesters: Vec<f64>) -> Result<Self> {
        if hit_probability.len() != expected_requesters.len() {
            return Err(Error::DimensionMismatch {
                what: "mean-field parts",
                expected: hit_probability.len(),
                found: expected_requesters.len(),
            });
        }
        let n = hit_probability.len();
        Ok(Self {
            cache_fraction: vec![0.0; n],
            hit_probability,
            selection_probability: vec![1.0; n],
            expected_requesters,
        })
    }
}

/// Fraction of the population caching each file, averaged over all users
/// (the evaluating user included).
pub fn cache_fraction(profile: &PopulationProfile) -> Result<Vec<f64>> {
    let population = profile.population();
    if population == 0 {
        return Err(invalid("empty population"));
    }
    let mut eta = vec![0.0; profile.file_count()];
    for (row, &count) in profile.rows().iter().zip(profile.counts()) {
        for (acc, &x) in eta.iter_mut().zip(row.as_slice()) {
            *acc += count as f64 * x;
        }
    }
    let u = population as f64;
    for e in &mut eta {
        *e = (*e / u).clamp(0.0, 1.0);
    }
    Ok(eta)
}

/// Probability that a requester meets at least one holder of the file.
pub fn hit_probability(cache_fraction: f64, mean_neighbors: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&cache_fraction));
    debug_assert!(mean_neighbors >= 0.0);
    -(-cache_fraction * mean_neighbors).exp_m1()
}

/// `(1 - e^-z) / z` with the singularity at `z = 0` filled by its limit.
fn one_minus_exp_over(z: f64) -> f64 {
    if z < SMALL_ARGUMENT {
        1.0 - z / 2.0 + z * z / 6.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// Probability that a specific holder is the one picked by a requester.
pub fn selection_probability(cache_fraction: f64, mean_neighbors: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&cache_fraction));
    debug_assert!(mean_neighbors >= 0.0);
    one_minus_exp_over(cache_fraction * mean_neighbors)
}

/// Mean number of requesters served by each holder of the file.
///
/// Written as `(1 - eta) * q * psi * (1 - e^-z) / z` with `z = eta * psi`,
/// which tends to `q * psi` as `eta -> 0`.
pub fn expected_requesters(cache_fraction: f64, mean_neighbors: f64, popularity: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&cache_fraction));
    (1.0 - cache_fraction)
        * popularity
        * mean_neighbors
        * one_minus_exp_over(cache_fraction * mean_neighbors)
}

pub fn build_state(
    profile: &PopulationProfile,
    mobility: &MobilityModel,
    catalog: &ContentCatalog,
) -> Result<MeanFieldState> {
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
    MeanFieldState::from_cache_fraction(cache_fraction(profile)?, mobility, catalog)
}
