//! Per-user best response: maximize utility subject to storage and D2D
//! energy budgets, with the mean-field state held fixed.
//!
//! The objective is separable with a diagonal negative-definite quadratic
//! term, so for given multipliers `(lambda, mu)` the maximizer is the clipped
//! stationarity point of each file. The multipliers are found by alternating
//! one-dimensional bisections on the two monotone constraint maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::ContentCatalog;
use crate::error::{invalid, Error, Result};
use crate::meanfield::MeanFieldState;
use crate::user_model::{self, marginal_gain, Strategy, UserParams};

/// Stop alternating once both multipliers move by less than this.
pub const MULTIPLIER_TOLERANCE: f64 = 1e-10;
pub const MAX_DUAL_ROUNDS: usize = 10_000;
/// Absolute slack allowed on the storage and energy constraints.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;
/// Scaled tolerance for complementary slackness and stationarity.
pub const KKT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActiveConstraints {
    pub storage: bool,
    pub energy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseSolution {
    pub strategy: Strategy,
    pub utility_value: f64,
    /// Multiplier of the storage budget.
    pub storage_multiplier: f64,
    /// Multiplier of the energy budget.
    pub energy_multiplier: f64,
    pub active_constraints: ActiveConstraints,
    pub dual_rounds: usize,
}

/// Maximizer of the Lagrangian for file `f`, clipped to `[0, 1]`.
pub fn stationarity_point(
    f: usize,
    storage_multiplier: f64,
    energy_multiplier: f64,
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
) -> f64 {
    let numerator = marginal_gain(f, catalog, state, params)
        - storage_multiplier
        - energy_multiplier * params.d2d_energy_per_unit * state.expected_requesters[f];
    (numerator / (2.0 * params.cache_cost_coefficient * catalog.sizes()[f])).clamp(0.0, 1.0)
}

/// Precomputed per-file terms so the inner bisections avoid recomputing
/// marginal gains.
struct Problem<'a> {
    gain: Vec<f64>,
    sizes: &'a [f64],
    /// `e * N_f * s_f`, energy used per unit of `x_f`.
    energy_weight: Vec<f64>,
    /// `e * N_f`, how the energy multiplier enters the numerator.
    energy_coupling: Vec<f64>,
    curvature: Vec<f64>,
    storage_budget: f64,
    energy_budget: f64,
}

impl<'a> Problem<'a> {
    fn new(catalog: &'a ContentCatalog, state: &MeanFieldState, params: &UserParams) -> Self {
        let e = params.d2d_energy_per_unit;
        let sizes = catalog.sizes();
        let n = &state.expected_requesters;
        Self {
            gain: (0..catalog.file_count())
                .map(|f| marginal_gain(f, catalog, state, params))
                .collect(),
            sizes,
            energy_weight: n.iter().zip(sizes).map(|(n, s)| e * n * s).collect(),
            energy_coupling: n.iter().map(|n| e * n).collect(),
            curvature: sizes
                .iter()
                .map(|s| 2.0 * params.cache_cost_coefficient * s)
                .collect(),
            storage_budget: params.storage_capacity,
            energy_budget: params.energy_budget,
        }
    }

    fn primal(&self, lambda: f64, mu: f64) -> impl Iterator<Item = f64> + '_ {
        (0..self.gain.len()).map(move |f| {
            ((self.gain[f] - lambda - mu * self.energy_coupling[f]) / self.curvature[f])
                .clamp(0.0, 1.0)
        })
    }

    fn storage_used(&self, lambda: f64, mu: f64) -> f64 {
        self.primal(lambda, mu)
            .zip(self.sizes)
            .map(|(x, s)| x * s)
            .sum()
    }

    fn energy_used(&self, lambda: f64, mu: f64) -> f64 {
        self.primal(lambda, mu)
            .zip(&self.energy_weight)
            .map(|(x, w)| x * w)
            .sum()
    }

    /// Smallest storage multiplier that satisfies the storage budget.
    fn solve_storage(&self, mu: f64) -> f64 {
        if self.storage_used(0.0, mu) <= self.storage_budget {
            return 0.0;
        }
        // Every x_f is zero once lambda exceeds the largest gain.
        let hi = self.gain.iter().cloned().fold(0.0, f64::max);
        bisect(|l| self.storage_used(l, mu) <= self.storage_budget, hi)
    }

    fn solve_energy(&self, lambda: f64) -> f64 {
        if self.energy_used(lambda, 0.0) <= self.energy_budget {
            return 0.0;
        }
        let hi = self
            .gain
            .iter()
            .zip(&self.energy_coupling)
            .filter(|(_, c)| **c > 0.0)
            .map(|(g, c)| (g - lambda).max(0.0) / c)
            .fold(0.0, f64::max);
        bisect(|m| self.energy_used(lambda, m) <= self.energy_budget, hi)
    }
}

/// Smallest `t` in `[0, hi]` with `feasible(t)`, assuming `feasible` is
/// monotone and holds at `hi`. Returns a point on the feasible side.
fn bisect(feasible: impl Fn(f64) -> bool, hi: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, hi);
    for _ in 0..256 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Utility-maximizing strategy against a fixed mean-field state.
pub fn best_response(
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
) -> Result<BestResponseSolution> {
    if state.file_count() != catalog.file_count() {
        return Err(Error::DimensionMismatch {
            what: "mean-field state",
            expected: catalog.file_count(),
            found: state.file_count(),
        });
    }
    if params.cache_cost_coefficient <= 0.0 {
        return Err(invalid(
            "best response needs a strictly positive cache cost coefficient",
        ));
    }
    let problem = Problem::new(catalog, state, params);

    let (mut lambda, mut mu) = (0.0, 0.0);
    let mut rounds = 0;
    let mut change = f64::INFINITY;
    while rounds < MAX_DUAL_ROUNDS {
        rounds += 1;
        let next_lambda = problem.solve_storage(mu);
        let next_mu = problem.solve_energy(next_lambda);
        change = (next_lambda - lambda).abs().max((next_mu - mu).abs());
        lambda = next_lambda;
        mu = next_mu;
        if change < MULTIPLIER_TOLERANCE {
            break;
        }
    }
    let x: Vec<f64> = problem.primal(lambda, mu).collect();
    if change >= MULTIPLIER_TOLERANCE {
        return Err(Error::SolverNonConvergence {
            iterations: rounds,
            last_change: change,
            best_iterate: x,
        });
    }

    let strategy = Strategy::new(x)?;
    let utility_value = user_model::utility(&strategy, catalog, state, params);
    Ok(BestResponseSolution {
        utility_value,
        storage_multiplier: lambda,
        energy_multiplier: mu,
        active_constraints: ActiveConstraints {
            storage: lambda > 0.0,
            energy: mu > 0.0,
        },
        dual_rounds: rounds,
        strategy,
    })
}

/// Scaled KKT residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub storage_violation: f64,
    pub energy_violation: f64,
    pub storage_slackness: f64,
    pub energy_slackness: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.storage_violation,
            self.energy_violation,
            self.storage_slackness,
            self.energy_slackness,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn kkt_residuals(
    solution: &BestResponseSolution,
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
) -> KktResiduals {
    let x = solution.strategy.as_slice();
    let lambda = solution.storage_multiplier;
    let mu = solution.energy_multiplier;
    let e = params.d2d_energy_per_unit;

    let mut stationarity: f64 = 0.0;
    for (f, &xf) in x.iter().enumerate() {
        let gain = marginal_gain(f, catalog, state, params);
        let penalty = lambda + mu * e * state.expected_requesters[f];
        let slope = gain - 2.0 * params.cache_cost_coefficient * xf * catalog.sizes()[f] - penalty;
        let violation = if xf <= 0.0 {
            slope.max(0.0)
        } else if xf >= 1.0 {
            (-slope).max(0.0)
        } else {
            slope.abs()
        };
        stationarity = stationarity.max(violation / (1.0 + gain.abs() + penalty));
    }

    let storage = solution.strategy.occupancy(catalog);
    let energy = e * user_model::d2d_out_load(&solution.strategy, catalog, state);
    let c = params.storage_capacity;
    let budget = params.energy_budget;
    KktResiduals {
        stationarity,
        storage_violation: (storage - c).max(0.0),
        energy_violation: (energy - budget).max(0.0),
        storage_slackness: (lambda * (c - storage)).abs() / (1.0 + lambda * c),
        energy_slackness: (mu * (budget - energy)).abs() / (1.0 + mu * budget),
    }
}

/// Exhaustive search over the grid `{0, 1/R, ..., 1}^F` with feasibility
/// filtering, followed by a local refinement of the incumbent.
///
/// Intended as a test oracle for small `F`; the enumeration visits
/// `(R + 1)^(F - 1)` prefixes.
pub fn brute_force_best_response(
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
    grid_resolution: usize,
) -> Strategy {
    assert!(grid_resolution > 0);
    let f_count = catalog.file_count();
    let grid: Vec<Vec<f64>> = (0..f_count)
        .map(|_| {
            (0..=grid_resolution)
                .map(|k| k as f64 / grid_resolution as f64)
                .collect()
        })
        .collect();
    let best = grid_search(catalog, state, params, &grid);

    let best = refine(catalog, state, params, best, 2.0 / grid_resolution as f64);
    Strategy::new(best).expect("grid points lie in [0, 1]")
}

/// Pattern search around `start` on shrinking windows of `2 * ZOOM_STEPS + 1`
/// grid values per file, except one file per round whose value is chosen
/// continuously: the maximizer of its own utility term clipped to the
/// budget the other files leave. Rotating that file lets the incumbent slide
/// along binding constraints, which a purely axis-aligned grid cannot do.
fn refine(
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
    start: Vec<f64>,
    initial_half_width: f64,
) -> Vec<f64> {
    const ZOOM_STEPS: usize = 8;
    let f_count = catalog.file_count();
    let base = user_model::utility(&Strategy::zeros(f_count), catalog, state, params);
    let term = |f: usize, v: f64| {
        let mut x = vec![0.0; f_count];
        x[f] = v;
        user_model::utility(&Strategy::unchecked(x), catalog, state, params) - base
    };
    // Unconstrained maximizer of each concave per-file term on [0, 1].
    let peak: Vec<f64> = (0..f_count)
        .map(|f| golden_section_max(|v| term(f, v), 0.0, 1.0))
        .collect();
    let storage_w = catalog.sizes();
    let energy_w: Vec<f64> = state
        .expected_requesters
        .iter()
        .zip(storage_w)
        .map(|(n, s)| params.d2d_energy_per_unit * n * s)
        .collect();
    let storage_budget = params.storage_capacity + 1e-12;
    let energy_budget = params.energy_budget + 1e-12;
    let total = |x: &[f64]| (0..f_count).map(|f| term(f, x[f])).sum::<f64>();

    let mut best = start;
    let mut best_value = total(&best);
    let mut half_width = initial_half_width;
    let mut stalled = 0;
    let mut round = 0usize;
    while half_width > 1e-12 && round < 100_000 {
        let last = round % f_count;
        round += 1;
        let others: Vec<usize> = (0..f_count).filter(|&f| f != last).collect();
        let axes: Vec<Vec<f64>> = others
            .iter()
            .map(|&f| {
                let mut axis: Vec<f64> = (0..=2 * ZOOM_STEPS)
                    .map(|k| best[f] + half_width * (k as f64 / ZOOM_STEPS as f64 - 1.0))
                    .map(|v| v.clamp(0.0, 1.0))
                    .collect();
                axis.push(best[f]);
                axis.sort_by(f64::total_cmp);
                axis.dedup();
                axis
            })
            .collect();
        let tables: Vec<Vec<f64>> = others
            .iter()
            .zip(&axes)
            .map(|(&f, axis)| axis.iter().map(|&v| term(f, v)).collect())
            .collect();

        let mut improved: Option<(f64, Vec<f64>)> = None;
        let mut idx = vec![0usize; others.len()];
        loop {
            let (mut value, mut storage, mut energy) = (0.0, 0.0, 0.0);
            for (j, &f) in others.iter().enumerate() {
                let v = axes[j][idx[j]];
                value += tables[j][idx[j]];
                storage += v * storage_w[f];
                energy += v * energy_w[f];
            }
            let mut cap = ((storage_budget - storage) / storage_w[last]).min(1.0);
            if energy_w[last] > 0.0 {
                cap = cap.min((energy_budget - energy) / energy_w[last]);
            } else if energy > energy_budget {
                cap = -1.0;
            }
            if cap >= 0.0 {
                let v = peak[last].min(cap);
                let candidate = value + term(last, v);
                let incumbent = improved.as_ref().map_or(best_value, |(b, _)| *b);
                if candidate > incumbent + 1e-15 {
                    let mut x = best.clone();
                    for (j, &f) in others.iter().enumerate() {
                        x[f] = axes[j][idx[j]];
                    }
                    x[last] = v;
                    improved = Some((candidate, x));
                }
            }
            // Odometer over the grid files.
            let mut j = 0;
            while j < idx.len() {
                idx[j] += 1;
                if idx[j] < axes[j].len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == idx.len() {
                break;
            }
        }

        match improved {
            Some((v, x)) => {
                best = x;
                best_value = v;
                stalled = 0;
            }
            None => {
                stalled += 1;
                if stalled >= f_count {
                    half_width *= 0.5;
                    stalled = 0;
                }
            }
        }
    }
    best
}

/// Maximizer of a unimodal function on `[lo, hi]`.
fn golden_section_max(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut ga, mut gb) = (g(a), g(b));
    while hi - lo > 1e-13 {
        if ga < gb {
            lo = a;
            a = b;
            ga = gb;
            b = lo + ratio * (hi - lo);
            gb = g(b);
        } else {
            hi = b;
            b = a;
            gb = ga;
            a = hi - ratio * (hi - lo);
            ga = g(a);
        }
    }
    let mid = 0.5 * (lo + hi);
    // The ends are candidates too when the peak sits on a bound.
    [0.0, 1.0, mid]
        .into_iter()
        .filter(|v| (lo - 1e-12..=hi + 1e-12).contains(v) || *v == mid)
        .max_by(|x, y| g(*x).total_cmp(&g(*y)))
        .unwrap_or(mid)
}

/// Best feasible point of the product grid `axes[0] x ... x axes[F-1]`.
///
/// Utility is evaluated through per-file increments `U(v e_f) - U(0)`, which
/// is exact because the utility is a sum of per-file terms.
fn grid_search(
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
    axes: &[Vec<f64>],
) -> Vec<f64> {
    let f_count = catalog.file_count();
    let zero = Strategy::zeros(f_count);
    let base = user_model::utility(&zero, catalog, state, params);
    let tables: Vec<Vec<f64>> = axes
        .iter()
        .enumerate()
        .map(|(f, axis)| {
            axis.iter()
                .map(|&v| {
                    let mut x = vec![0.0; f_count];
                    x[f] = v;
                    let s = Strategy::new(x).expect("axis values lie in [0, 1]");
                    user_model::utility(&s, catalog, state, params) - base
                })
                .collect()
        })
        .collect();
    let e = params.d2d_energy_per_unit;
    let storage_w: Vec<f64> = catalog.sizes().to_vec();
    let energy_w: Vec<f64> = state
        .expected_requesters
        .iter()
        .zip(catalog.sizes())
        .map(|(n, s)| e * n * s)
        .collect();

    // For the last file: argmax of the table over every prefix of its axis.
    let last = f_count - 1;
    let mut prefix_best = Vec::with_capacity(axes[last].len());
    for (k, &v) in tables[last].iter().enumerate() {
        let keep = match prefix_best.last() {
            Some(&j) if tables[last][j] >= v => j,
            _ => k,
        };
        prefix_best.push(keep);
    }

    let search = Search {
        axes,
        tables: &tables,
        storage_w: &storage_w,
        energy_w: &energy_w,
        storage_budget: params.storage_capacity + 1e-12,
        energy_budget: params.energy_budget + 1e-12,
        prefix_best: &prefix_best,
    };
    let mut current = vec![0usize; f_count];
    let mut best_idx = vec![0usize; f_count];
    let mut best_val = f64::NEG_INFINITY;
    search.descend(0, 0.0, 0.0, 0.0, &mut current, &mut best_idx, &mut best_val);
    best_idx
        .iter()
        .enumerate()
        .map(|(f, &k)| axes[f][k])
        .collect()
}

struct Search<'a> {
    axes: &'a [Vec<f64>],
    tables: &'a [Vec<f64>],
    storage_w: &'a [f64],
    energy_w: &'a [f64],
    storage_budget: f64,
    energy_budget: f64,
    prefix_best: &'a [usize],
}

impl Search<'_> {
    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        f: usize,
        value: f64,
        storage: f64,
        energy: f64,
        current: &mut [usize],
        best_idx: &mut [usize],
        best_val: &mut f64,
    ) {
        let last = self.axes.len() - 1;
        let fits = |v: f64| {
            storage + v * self.storage_w[f] <= self.storage_budget
                && energy + v * self.energy_w[f] <= self.energy_budget
        };
        if f == last {
            // Feasible values of the last coordinate form a prefix of its
            // sorted axis.
            let axis = &self.axes[f];
            let count = axis.partition_point(|&v| fits(v));
            if count == 0 {
                return;
            }
            let k = self.prefix_best[count - 1];
            let total = value + self.tables[f][k];
            if total > *best_val {
                *best_val = total;
                current[f] = k;
                best_idx.copy_from_slice(current);
            }
            return;
        }
        for (k, &v) in self.axes[f].iter().enumerate() {
            if !fits(v) {
                break;
            }
            current[f] = k;
            self.descend(
                f + 1,
                value + self.tables[f][k],
                storage + v * self.storage_w[f],
                energy + v * self.energy_w[f],
                current,
                best_idx,
                best_val,
            );
        }
    }
}

/// Projected-gradient ascent with random restarts, used as an oracle where
/// exhaustive enumeration is too expensive.
///
/// Gradients are central differences of [`user_model::utility`]; the
/// projection onto `box ∩ storage ∩ energy` is exact, by bisection on the
/// two constraint multipliers.
pub fn projected_gradient_best_response(
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
    restarts: usize,
    seed: u64,
) -> Strategy {
    let f_count = catalog.file_count();
    let sizes = catalog.sizes();
    let energy_w: Vec<f64> = state
        .expected_requesters
        .iter()
        .zip(sizes)
        .map(|(n, s)| params.d2d_energy_per_unit * n * s)
        .collect();
    let project = |y: &[f64]| {
        project_box_two_halfspaces(
            y,
            (sizes, params.storage_capacity),
            (&energy_w, params.energy_budget),
        )
    };
    let lipschitz =
        2.0 * params.cache_cost_coefficient * sizes.iter().map(|s| s * s).fold(0.0, f64::max);
    let step = 1.0 / lipschitz;
    let value = |x: &[f64]| {
        let s = Strategy::new(x.to_vec()).expect("projected point lies in [0, 1]");
        user_model::utility(&s, catalog, state, params)
    };
    let gradient = |x: &[f64]| -> Vec<f64> {
        let h = 1e-4;
        (0..f_count)
            .map(|f| {
                let mut up = x.to_vec();
                let mut down = x.to_vec();
                up[f] += h;
                down[f] -= h;
                // The utility polynomial extends past the box, so probes
                // straddling a bound are fine.
                let eval = |v: Vec<f64>| {
                    user_model::utility(&Strategy::unchecked(v), catalog, state, params)
                };
                (eval(up) - eval(down)) / (2.0 * h)
            })
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..restarts.max(1) {
        let start: Vec<f64> = if restart == 0 {
            vec![0.0; f_count]
        } else {
            (0..f_count).map(|_| rng.random::<f64>()).collect()
        };
        let mut x = project(&start);
        for _ in 0..200_000 {
            let g = gradient(&x);
            let y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi).collect();
            let next = project(&y);
            let moved = next
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            x = next;
            // Finite-difference noise keeps steps near 1e-12 at the optimum.
            if moved < 1e-10 {
                break;
            }
        }
        let v = value(&x);
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, x));
        }
    }
    Strategy::new(best.expect("at least one restart").1).expect("projected point lies in [0, 1]")
}

/// Smallest `t >= 0` with `load(t) <= budget`, for `load` nonincreasing.
fn bisect_multiplier(load: impl Fn(f64) -> f64, budget: f64) -> f64 {
    if load(0.0) <= budget {
        return 0.0;
    }
    let mut hi = 1.0;
    while load(hi) > budget {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if load(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Euclidean projection of `y` onto `[0,1]^F ∩ {w1.x <= b1} ∩ {w2.x <= b2}`.
///
/// The minimizer is `clamp(y - l w1 - m w2)` for multipliers `l, m >= 0`.
/// With `l` maximized out for each `m`, the dual is concave in `m` and its
/// slope is `b2 - w2.x`, so both multipliers follow from nested bisection.
fn project_box_two_halfspaces(y: &[f64], first: (&[f64], f64), second: (&[f64], f64)) -> Vec<f64> {
    let at = |l: f64, m: f64| -> Vec<f64> {
        y.iter()
            .zip(first.0.iter().zip(second.0))
            .map(|(yi, (w1, w2))| (yi - l * w1 - m * w2).clamp(0.0, 1.0))
            .collect()
    };
    let dot = |x: &[f64], w: &[f64]| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    let inner = |m: f64| bisect_multiplier(|l| dot(&at(l, m), first.0), first.1);
    let m = bisect_multiplier(|m| dot(&at(inner(m), m), second.0), second.1);
    at(inner(m), m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(p: &[f64], n: &[f64]) -> MeanFieldState {
        MeanFieldState::from_parts(p.to_vec(), n.to_vec()).unwrap()
    }

    #[test]
    fn stationarity_point_clips() {
        let c = ContentCatalog::uniform(1, 1.0, 0.0, 0.0).unwrap();
        let params = UserParams {
            cache_cost_coefficient: 1.0,
            ..UserParams::default()
        };
        let s = state(&[0.0], &[0.0]);
        // 9.99 / 2 clipped to 1.
        assert_eq!(stationarity_point(0, 0.0, 0.0, &c, &s, &params), 1.0);
        assert_eq!(stationarity_point(0, 100.0, 0.0, &c, &s, &params), 0.0);
        let x = stationarity_point(0, 8.0, 0.0, &c, &s, &params);
        assert!((x - 0.995).abs() < 1e-12, "{x}");
    }

    #[test]
    fn slack_constraints_give_unconstrained_points() {
        let c = ContentCatalog::uniform(4, 1.0, 1.0, 0.0).unwrap();
        let params = UserParams {
            storage_capacity: 10.0,
            energy_budget: 1e9,
            cache_cost_coefficient: 5.0,
            ..UserParams::default()
        };
        let s = state(&[0.3, 0.5, 0.1, 0.9], &[0.2, 0.1, 0.4, 0.0]);
        let sol = best_response(&c, &s, &params).unwrap();
        assert_eq!(sol.storage_multiplier, 0.0);
        assert_eq!(sol.energy_multiplier, 0.0);
        for f in 0..4 {
            let expected = stationarity_point(f, 0.0, 0.0, &c, &s, &params);
            assert_eq!(sol.strategy.as_slice()[f], expected);
        }
    }

    #[test]
    fn zero_storage_gives_zero_strategy() {
        let c = ContentCatalog::uniform(3, 1.0, 1.0, 0.0).unwrap();
        let params = UserParams {
            storage_capacity: 0.0,
            ..UserParams::default()
        };
        let s = state(&[0.0; 3], &[0.5; 3]);
        let sol = best_response(&c, &s, &params).unwrap();
        assert!(sol.strategy.as_slice().iter().all(|&x| x == 0.0));
        assert!(sol.storage_multiplier > 0.0);
    }

    #[test]
    fn binding_storage_meets_capacity() {
        let c = ContentCatalog::uniform(10, 1.0, 0.8, 0.0).unwrap();
        let params = UserParams::default();
        let s = state(&[0.0; 10], &[0.0; 10]);
        let sol = best_response(&c, &s, &params).unwrap();
        assert!(sol.active_constraints.storage);
        let used = sol.strategy.occupancy(&c);
        assert!(used <= 3.0 + FEASIBILITY_TOLERANCE);
        assert!((used - 3.0).abs() < 1e-9);
        assert!(kkt_residuals(&sol, &c, &s, &params).max() <= KKT_TOLERANCE);
    }

    #[test]
    fn binding_energy_budget() {
        let c = ContentCatalog::uniform(3, 1.0, 0.5, 0.0).unwrap();
        let params = UserParams {
            energy_budget: 0.2,
            storage_capacity: 10.0,
            ..UserParams::default()
        };
        let s = state(&[0.2, 0.2, 0.2], &[2.0, 1.5, 1.0]);
        let sol = best_response(&c, &s, &params).unwrap();
        assert!(sol.active_constraints.energy);
        let energy = params.d2d_energy_per_unit * user_model::d2d_out_load(&sol.strategy, &c, &s);
        assert!(energy <= params.energy_budget + FEASIBILITY_TOLERANCE);
        assert!(kkt_residuals(&sol, &c, &s, &params).max() <= KKT_TOLERANCE);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let c = ContentCatalog::uniform(3, 1.0, 0.5, 0.0).unwrap();
        let s = state(&[0.2], &[2.0]);
        assert!(best_response(&c, &s, &UserParams::default()).is_err());
    }

    #[test]
    fn single_file_grid_matches_clip_formula() {
        let c = ContentCatalog::uniform(1, 1.0, 0.0, 0.0).unwrap();
        let params = UserParams {
            cache_cost_coefficient: 8.0,
            ..UserParams::default()
        };
        let s = state(&[0.6], &[0.0]);
        let exact = best_response(&c, &s, &params).unwrap();
        let grid = brute_force_best_response(&c, &s, &params, 200);
        // Utility is flat to O(dx^2) at the optimum, so x itself is only
        // resolved to about sqrt(machine epsilon).
        assert!((grid.as_slice()[0] - exact.strategy.as_slice()[0]).abs() < 1e-6);
        let u = user_model::utility(&grid, &c, &s, &params);
        assert!((u - exact.utility_value).abs() < 1e-12);
    }

    #[test]
    fn projection_onto_intersection() {
        let y = [0.9, 0.8, -0.2, 1.4];
        let x = project_box_two_halfspaces(&y, (&[1.0; 4], 1.5), (&[1.0, 0.0, 2.0, 1.0], 1.0));
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(x.iter().sum::<f64>() <= 1.5 + 1e-9);
        assert!(x[0] + 2.0 * x[2] + x[3] <= 1.0 + 1e-9);
    }
}
