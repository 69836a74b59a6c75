#![allow(dead_code)]

use edgecache::catalog::ContentCatalog;
use edgecache::meanfield::{MeanFieldState, MobilityModel, PopulationProfile};
use edgecache::user_model::{Strategy, UserParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A best-response problem: catalog, exogenous mean field and parameters.
#[derive(Debug, Clone)]
pub struct Instance {
    pub catalog: ContentCatalog,
    pub state: MeanFieldState,
    pub params: UserParams,
}

pub fn random_catalog<R: Rng>(rng: &mut R, files: usize) -> ContentCatalog {
    let sizes: Vec<f64> = if rng.random_bool(0.5) {
        vec![1.0; files]
    } else {
        (0..files).map(|_| rng.random_range(0.5..2.0)).collect()
    };
    let skew = rng.random_range(0.0..2.0);
    let eps = if rng.random_bool(0.3) {
        rng.random_range(0.0..3.0)
    } else {
        0.0
    };
    let mut ranks: Vec<usize> = (1..=files).collect();
    for i in (1..files).rev() {
        ranks.swap(i, rng.random_range(0..=i));
    }
    ContentCatalog::with_rankings(sizes, skew, eps, ranks).unwrap()
}

pub fn random_strategy<R: Rng>(rng: &mut R, files: usize) -> Strategy {
    Strategy::new((0..files).map(|_| rng.random_range(0.0..=1.0)).collect()).unwrap()
}

pub fn random_state<R: Rng>(rng: &mut R, catalog: &ContentCatalog) -> MeanFieldState {
    let psi = rng.random_range(0.0..20.0);
    let mobility = MobilityModel::from_mean_neighbors(1000, psi).unwrap();
    let eta = (0..catalog.file_count())
        .map(|_| rng.random_range(0.0..=1.0))
        .collect();
    MeanFieldState::from_cache_fraction(eta, &mobility, catalog).unwrap()
}

/// Parameters with a mix of slack and binding storage and energy limits.
pub fn random_params<R: Rng>(
    rng: &mut R,
    catalog: &ContentCatalog,
    state: &MeanFieldState,
) -> UserParams {
    let mut p = UserParams {
        cache_cost_coefficient: rng.random_range(0.05..2.0),
        storage_capacity: rng.random_range(0.2..1.2) * catalog.total_size(),
        d2d_reward: rng.random_range(0.5..3.0),
        privacy_price: rng.random_range(0.0..0.3),
        ..UserParams::default()
    };
    if rng.random_bool(0.4) {
        let full: f64 = state
            .expected_requesters
            .iter()
            .zip(catalog.sizes())
            .map(|(n, s)| n * s)
            .sum();
        p.energy_budget = p.d2d_energy_per_unit * full * rng.random_range(0.05..0.8);
    }
    p
}

pub fn random_instance<R: Rng>(rng: &mut R, files: usize) -> Instance {
    let catalog = random_catalog(rng, files);
    let state = random_state(rng, &catalog);
    let params = random_params(rng, &catalog, &state);
    Instance {
        catalog,
        state,
        params,
    }
}

/// Up to four strategy rows with random head counts summing to `population`.
pub fn random_profile<R: Rng>(rng: &mut R, files: usize, population: usize) -> PopulationProfile {
    let rows = rng.random_range(1..=4);
    let mut counts = vec![0usize; rows];
    for _ in 0..population {
        counts[rng.random_range(0..rows)] += 1;
    }
    let strategies = (0..rows).map(|_| random_strategy(rng, files)).collect();
    PopulationProfile::new(strategies, counts).unwrap()
}
