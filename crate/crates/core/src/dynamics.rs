//! Damped best-response iteration toward the evolutionary equilibrium.
//!
//! Starting from the all-zero profile, every round computes the mean-field
//! state of the current profile, lets each user type play its best response
//! against it, and mixes: `X_next = gamma * X + (1 - gamma) * BR(X)`. The
//! loop stops once the mixed step is below the tolerance.
//!
//! Users of one type face the same mean field and start from the same
//! strategy, so a type is tracked as a single row with a head count and the
//! `U x F` matrix is never materialized.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::best_response::{best_response, BestResponseSolution};
use crate::catalog::ContentCatalog;
use crate::error::{invalid, Error, Result};
use crate::meanfield::{build_state, MeanFieldState, MobilityModel, PopulationProfile};
use crate::user_model::{self, Strategy, UserType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StepNorm {
    /// Largest absolute entry change.
    #[default]
    Max,
    /// Frobenius norm over the full user-by-file matrix.
    Frobenius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Weight kept on the previous profile each round.
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub norm: StepNorm,
    /// Also compute the equilibrium gap every this many rounds.
    pub gap_every: Option<usize>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            damping: 0.98,
            tolerance: 1e-12,
            max_iterations: 10_000,
            norm: StepNorm::Max,
            gap_every: None,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(invalid(format!(
                "damping must lie in (0, 1), got {}",
                self.damping
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(invalid(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be positive"));
        }
        if self.gap_every == Some(0) {
            return Err(invalid("gap_every must be positive when set"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub step_norm: f64,
    /// Population cache fractions after the update.
    pub cache_fraction: Vec<f64>,
    /// Utility of each type's updated strategy under the updated mean field.
    pub utility_per_type: Vec<f64>,
    pub equilibrium_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    /// One row per user type, weighted by the type's head count.
    pub profile: PopulationProfile,
    pub mean_field: MeanFieldState,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<IterationRecord>,
    /// Largest utility improvement any type can get by deviating alone.
    pub equilibrium_gap: f64,
}

impl EquilibriumResult {
    pub fn final_step_norm(&self) -> f64 {
        self.trajectory
            .last()
            .map_or(f64::INFINITY, |r| r.step_norm)
    }
}

pub fn validate_population(
    population: &[UserType],
    catalog: &ContentCatalog,
    mobility: &MobilityModel,
) -> Result<()> {
    if population.is_empty() {
        return Err(invalid("population needs at least one user type"));
    }
    for t in population {
        t.params.validate()?;
    }
    let total: usize = population.iter().map(|t| t.count).sum();
    if total != mobility.population() {
        return Err(Error::DimensionMismatch {
            what: "user type counts",
            expected: mobility.population(),
            found: total,
        });
    }
    if catalog.file_count() == 0 {
        return Err(invalid("catalog has no files"));
    }
    Ok(())
}

fn profile_of(population: &[UserType], rows: Vec<Strategy>) -> Result<PopulationProfile> {
    PopulationProfile::new(rows, population.iter().map(|t| t.count).collect())
}

/// Best responses of every type against one mean-field snapshot.
pub fn best_responses(
    population: &[UserType],
    catalog: &ContentCatalog,
    state: &MeanFieldState,
) -> Result<Vec<BestResponseSolution>> {
    population
        .par_iter()
        .map(|t| best_response(catalog, state, &t.params))
        .collect()
}

/// `gamma * current + (1 - gamma) * response`, entrywise.
pub fn damped_update(current: &Strategy, response: &Strategy, damping: f64) -> Strategy {
    let mixed = current
        .as_slice()
        .iter()
        .zip(response.as_slice())
        .map(|(x, b)| (damping * x + (1.0 - damping) * b).clamp(0.0, 1.0))
        .collect();
    Strategy::new(mixed).expect("convex combination stays in [0, 1]")
}

fn step_norm(norm: StepNorm, population: &[UserType], prev: &[Strategy], next: &[Strategy]) -> f64 {
    let diffs = prev
        .iter()
        .zip(next)
        .zip(population)
        .flat_map(|((a, b), t)| {
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .map(move |(x, y)| ((x - y).abs(), t.count))
        });
    match norm {
        StepNorm::Max => diffs
            .filter(|(_, n)| *n > 0)
            .map(|(d, _)| d)
            .fold(0.0, f64::max),
        StepNorm::Frobenius => diffs.map(|(d, n)| n as f64 * d * d).sum::<f64>().sqrt(),
    }
}

/// Runs the damped best-response loop from the all-zero profile.
///
/// Hitting `max_iterations` is not an error: the result comes back with
/// `converged = false` and the full trajectory.
pub fn evolve(
    population: &[UserType],
    catalog: &ContentCatalog,
    mobility: &MobilityModel,
    config: &EvolutionConfig,
) -> Result<EquilibriumResult> {
    config.validate()?;
    validate_population(population, catalog, mobility)?;

    let mut rows = vec![Strategy::zeros(catalog.file_count()); population.len()];
    let mut profile = profile_of(population, rows.clone())?;
    let mut state = build_state(&profile, mobility, catalog)?;
    let mut trajectory = Vec::new();
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        let responses = best_responses(population, catalog, &state)?;
        let next: Vec<Strategy> = rows
            .iter()
            .zip(&responses)
            .map(|(x, br)| damped_update(x, &br.strategy, config.damping))
            .collect();
        let step = step_norm(config.norm, population, &rows, &next);
        rows = next;
        profile = profile_of(population, rows.clone())?;
        state = build_state(&profile, mobility, catalog)?;

        let utility_per_type = population
            .iter()
            .zip(&rows)
            .map(|(t, x)| user_model::utility(x, catalog, &state, &t.params))
            .collect();
        let equilibrium_gap = match config.gap_every {
            Some(k) if iteration % k == 0 => Some(gap_against(population, catalog, &state, &rows)?),
            _ => None,
        };
        trajectory.push(IterationRecord {
            iteration,
            step_norm: step,
            cache_fraction: state.cache_fraction.clone(),
            utility_per_type,
            equilibrium_gap,
        });
        if step <= config.tolerance {
            converged = true;
            break;
        }
    }

    let gap = gap_against(population, catalog, &state, &rows)?;
    if let Some(last) = trajectory.last_mut() {
        last.equilibrium_gap = Some(gap);
    }
    Ok(EquilibriumResult {
        iterations: trajectory.len(),
        profile,
        mean_field: state,
        converged,
        trajectory,
        equilibrium_gap: gap,
    })
}

fn gap_against(
    population: &[UserType],
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    rows: &[Strategy],
) -> Result<f64> {
    let responses = best_responses(population, catalog, state)?;
    Ok(population
        .iter()
        .zip(rows)
        .zip(&responses)
        .filter(|((t, _), _)| t.count > 0)
        .map(|((t, x), br)| {
            let current = user_model::utility(x, catalog, state, &t.params);
            (br.utility_value - current).max(0.0)
        })
        .fold(0.0, f64::max))
}

/// Largest gain any user type can obtain by unilaterally switching to its
/// best response, with the population's mean field held at `profile`.
///
/// `profile` must carry one row per user type, in the same order.
pub fn equilibrium_gap(
    profile: &PopulationProfile,
    catalog: &ContentCatalog,
    mobility: &MobilityModel,
    population: &[UserType],
) -> Result<f64> {
    validate_population(population, catalog, mobility)?;
    if profile.rows().len() != population.len() {
        return Err(Error::DimensionMismatch {
            what: "profile rows per user type",
            expected: population.len(),
            found: profile.rows().len(),
        });
    }
    if profile
        .counts()
        .iter()
        .zip(population)
        .any(|(n, t)| *n != t.count)
    {
        return Err(invalid("profile row counts differ from user type counts"));
    }
    let state = build_state(profile, mobility, catalog)?;
    gap_against(population, catalog, &state, profile.rows())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaScanEntry {
    pub damping: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_step_norm: f64,
    pub equilibrium_gap: f64,
}

/// Runs [`evolve`] once per damping value, otherwise with `config`.
pub fn gamma_scan(
    population: &[UserType],
    catalog: &ContentCatalog,
    mobility: &MobilityModel,
    config: &EvolutionConfig,
    dampings: &[f64],
) -> Result<Vec<GammaScanEntry>> {
    dampings
        .iter()
        .map(|&damping| {
            let cfg = EvolutionConfig { damping, ..*config };
            let result = evolve(population, catalog, mobility, &cfg)?;
            Ok(GammaScanEntry {
                damping,
                converged: result.converged,
                iterations: result.iterations,
                final_step_norm: result.final_step_norm(),
                equilibrium_gap: result.equilibrium_gap,
            })
        })
        .collect()
}

/// Writes the trajectory as CSV with columns `iteration, step_norm,
/// eta_1..eta_F, utility_type_1..utility_type_T, equilibrium_gap`.
pub fn write_trajectory_csv<W: Write>(result: &EquilibriumResult, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let files = result.mean_field.file_count();
    let types = result.profile.rows().len();
    let mut header = vec!["iteration".to_string(), "step_norm".to_string()];
    header.extend((1..=files).map(|f| format!("eta_{f}")));
    header.extend((1..=types).map(|t| format!("utility_type_{t}")));
    header.push("equilibrium_gap".to_string());
    writer.write_record(&header)?;
    for rec in &result.trajectory {
        let mut row = vec![rec.iteration.to_string(), rec.step_norm.to_string()];
        row.extend(rec.cache_fraction.iter().map(f64::to_string));
        row.extend(rec.utility_per_type.iter().map(f64::to_string));
        row.push(
            rec.equilibrium_gap
                .map(|g| g.to_string())
                .unwrap_or_default(),
        );
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
