//! Per-user traffic loads, caching cost and utility.
//!
//! All quantities are expectations over one request of the user and take the
//! mean-field state (`P_f`, `N_f`) as given.

use serde::{Deserialize, Serialize};

use crate::catalog::ContentCatalog;
use crate::error::{invalid, Error, Result};
use crate::meanfield::MeanFieldState;

/// Cost, reward and resource parameters shared by a group of users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserParams {
    /// Cost per squared unit of cached volume.
    pub cache_cost_coefficient: f64,
    /// Storage capacity in size units.
    pub storage_capacity: f64,
    pub local_unit_cost: f64,
    pub d2d_unit_cost: f64,
    pub cellular_unit_cost: f64,
    /// Net reward per unit served over D2D.
    pub d2d_reward: f64,
    pub privacy_price: f64,
    /// Energy spent per unit of D2D output traffic.
    pub d2d_energy_per_unit: f64,
    pub energy_budget: f64,
}

impl Default for UserParams {
    fn default() -> Self {
        Self {
            // Small enough that storage binds and isolated users reproduce
            // most-popular caching; see the README for the calibration.
            cache_cost_coefficient: 0.15,
            storage_capacity: 3.0,
            local_unit_cost: 0.01,
            d2d_unit_cost: 2.0,
            cellular_unit_cost: 10.0,
            d2d_reward: 1.5,
            privacy_price: 0.1,
            d2d_energy_per_unit: 0.7,
            energy_budget: 75.0,
        }
    }
}

impl UserParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("cache_cost_coefficient", self.cache_cost_coefficient),
            ("storage_capacity", self.storage_capacity),
            ("local_unit_cost", self.local_unit_cost),
            ("d2d_unit_cost", self.d2d_unit_cost),
            ("cellular_unit_cost", self.cellular_unit_cost),
            ("d2d_reward", self.d2d_reward),
            ("privacy_price", self.privacy_price),
            ("d2d_energy_per_unit", self.d2d_energy_per_unit),
            ("energy_budget", self.energy_budget),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(invalid(format!(
                    "{name} must be finite and nonnegative, got {value}"
                )));
            }
        }
        if self.cache_cost_coefficient <= 0.0 {
            return Err(invalid("cache_cost_coefficient must be strictly positive"));
        }
        if !(self.local_unit_cost < self.d2d_unit_cost
            && self.d2d_unit_cost < self.cellular_unit_cost)
        {
            return Err(invalid(format!(
                "unit costs must satisfy local < d2d < cellular, got {} / {} / {}",
                self.local_unit_cost, self.d2d_unit_cost, self.cellular_unit_cost
            )));
        }
        Ok(())
    }
}

/// Caching probability of each file for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy(Vec<f64>);

impl Strategy {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if let Some(bad) = probabilities.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(invalid(format!("caching probability {bad} outside [0, 1]")));
        }
        Ok(Self(probabilities))
    }

    /// Skips the range check; for evaluating the utility polynomial outside
    /// the feasible box.
    pub(crate) fn unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(file_count: usize) -> Self {
        Self(vec![0.0; file_count])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Expected storage occupied, `sum_f x_f * s_f`.
    pub fn occupancy(&self, catalog: &ContentCatalog) -> f64 {
        self.0.iter().zip(catalog.sizes()).map(|(x, s)| x * s).sum()
    }
}

/// A group of users with identical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserType {
    pub count: usize,
    #[serde(default)]
    pub params: UserParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadBreakdown {
    pub local: f64,
    pub d2d_in: f64,
    pub cellular: f64,
    pub d2d_out: f64,
}

impl LoadBreakdown {
    pub fn compute(strategy: &Strategy, catalog: &ContentCatalog, state: &MeanFieldState) -> Self {
        Self {
            local: local_load(strategy, catalog),
            d2d_in: d2d_in_load(strategy, catalog, state),
            cellular: cellular_load(strategy, catalog, state),
            d2d_out: d2d_out_load(strategy, catalog, state),
        }
    }

    /// `T^L w_L + T^in w_D + T^B w_B`.
    pub fn transmission_cost(&self, params: &UserParams) -> f64 {
        self.local * params.local_unit_cost
            + self.d2d_in * params.d2d_unit_cost
            + self.cellular * params.cellular_unit_cost
    }
}

pub(crate) fn check_dims(
    strategy: &Strategy,
    catalog: &ContentCatalog,
    state: &MeanFieldState,
) -> Result<()> {
    let f = catalog.file_count();
    for (what, found) in [
        ("strategy", strategy.len()),
        ("mean-field state", state.file_count()),
    ] {
        if found != f {
            return Err(Error::DimensionMismatch {
                what,
                expected: f,
                found,
            });
        }
    }
    Ok(())
}

pub fn local_load(strategy: &Strategy, catalog: &ContentCatalog) -> f64 {
    zip3(strategy.as_slice(), catalog.popularity(), catalog.sizes())
        .map(|(x, q, s)| x * q * s)
        .sum()
}

pub fn d2d_in_load(strategy: &Strategy, catalog: &ContentCatalog, state: &MeanFieldState) -> f64 {
    zip3(strategy.as_slice(), catalog.popularity(), catalog.sizes())
        .zip(&state.hit_probability)
        .map(|((x, q, s), p)| (1.0 - x) * p * q * s)
        .sum()
}

pub fn cellular_load(strategy: &Strategy, catalog: &ContentCatalog, state: &MeanFieldState) -> f64 {
    zip3(strategy.as_slice(), catalog.popularity(), catalog.sizes())
        .zip(&state.hit_probability)
        .map(|((x, q, s), p)| (1.0 - x) * (1.0 - p) * q * s)
        .sum()
}

pub fn d2d_out_load(strategy: &Strategy, catalog: &ContentCatalog, state: &MeanFieldState) -> f64 {
    strategy
        .as_slice()
        .iter()
        .zip(&state.expected_requesters)
        .zip(catalog.sizes())
        .map(|((x, n), s)| x * n * s)
        .sum()
}

/// Convex storage cost `alpha * sum_f (x_f s_f)^2`.
pub fn cache_cost(strategy: &Strategy, catalog: &ContentCatalog, params: &UserParams) -> f64 {
    strategy
        .as_slice()
        .iter()
        .zip(catalog.sizes())
        .map(|(x, s)| (x * s).powi(2))
        .sum::<f64>()
        * params.cache_cost_coefficient
}

/// Net utility: sharing reward minus caching cost, transmission cost and
/// privacy price.
pub fn utility(
    strategy: &Strategy,
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
) -> f64 {
    let loads = LoadBreakdown::compute(strategy, catalog, state);
    loads.d2d_out * params.d2d_reward
        - cache_cost(strategy, catalog, params)
        - loads.transmission_cost(params)
        - loads.d2d_out * params.privacy_price
}

/// Same as [`utility`] after checking that all dimensions agree.
pub fn checked_utility(
    strategy: &Strategy,
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
) -> Result<f64> {
    check_dims(strategy, catalog, state)?;
    Ok(utility(strategy, catalog, state, params))
}

/// Marginal utility of caching each file, holding `P_f` and `N_f` fixed:
/// `s_f [N_f (r - theta) - 2 alpha x_f s_f - q_f w_L + P_f q_f w_D + (1 - P_f) q_f w_B]`.
pub fn utility_gradient(
    strategy: &Strategy,
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
) -> Vec<f64> {
    (0..catalog.file_count())
        .map(|f| {
            let s = catalog.sizes()[f];
            let x = strategy.as_slice()[f];
            s * (marginal_gain(f, catalog, state, params)
                - 2.0 * params.cache_cost_coefficient * x * s)
        })
        .collect()
}

/// Per-unit-size gain of caching file `f` before the quadratic cost:
/// `N_f (r - theta) - q_f w_L + P_f q_f w_D + (1 - P_f) q_f w_B`.
pub(crate) fn marginal_gain(
    f: usize,
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
) -> f64 {
    let q = catalog.popularity()[f];
    let p = state.hit_probability[f];
    let n = state.expected_requesters[f];
    n * (params.d2d_reward - params.privacy_price) - q * params.local_unit_cost
        + p * q * params.d2d_unit_cost
        + (1.0 - p) * q * params.cellular_unit_cost
}

fn zip3<'a>(
    a: &'a [f64],
    b: &'a [f64],
    c: &'a [f64],
) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
    a.iter().zip(b).zip(c).map(|((x, y), z)| (*x, *y, *z))
}
