//! Reference caching policies: most-popular and random-uniform.
//!
//! Both fill storage without regard to the energy budget; use
//! [`energy_excess`] to check a baseline against it.

use crate::catalog::ContentCatalog;
use crate::meanfield::MeanFieldState;
use crate::user_model::{d2d_out_load, Strategy, UserParams};

/// Most Popular Caching: fill storage with whole files in rank order; the
/// first file that does not fit gets the fractional remainder.
pub fn mpc_strategy(catalog: &ContentCatalog, params: &UserParams) -> Strategy {
    let mut x = vec![0.0; catalog.file_count()];
    let mut remaining = params.storage_capacity.max(0.0);
    for f in catalog.files_by_rank() {
        if remaining <= 0.0 {
            break;
        }
        let size = catalog.sizes()[f];
        let take = (remaining / size).min(1.0);
        x[f] = take;
        remaining -= take * size;
    }
    Strategy::new(x).expect("fill fractions lie in [0, 1]")
}

/// Random Uniform Caching in expectation: every file cached with the same
/// probability, chosen so expected occupancy is `min(c, sum_f s_f)`.
pub fn ruc_strategy(catalog: &ContentCatalog, params: &UserParams) -> Strategy {
    let fill = (params.storage_capacity.max(0.0) / catalog.total_size()).min(1.0);
    Strategy::new(vec![fill; catalog.file_count()]).expect("fill fraction lies in [0, 1]")
}

/// Amount by which the strategy's D2D energy exceeds the budget, if it does.
pub fn energy_excess(
    strategy: &Strategy,
    catalog: &ContentCatalog,
    state: &MeanFieldState,
    params: &UserParams,
) -> Option<f64> {
    let used = params.d2d_energy_per_unit * d2d_out_load(strategy, catalog, state);
    (used > params.energy_budget).then_some(used - params.energy_budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_capacity(c: f64) -> UserParams {
        UserParams {
            storage_capacity: c,
            ..UserParams::default()
        }
    }

    #[test]
    fn mpc_top_three() {
        let catalog = ContentCatalog::uniform(10, 1.0, 0.8, 0.0).unwrap();
        let x = mpc_strategy(&catalog, &with_capacity(3.0));
        assert_eq!(
            x.as_slice(),
            &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn mpc_fractional_remainder() {
        let catalog = ContentCatalog::new(vec![2.0, 2.0], 1.0, 0.0).unwrap();
        let x = mpc_strategy(&catalog, &with_capacity(3.0));
        assert_eq!(x.as_slice(), &[1.0, 0.5]);
    }

    #[test]
    fn mpc_follows_rankings() {
        let catalog = ContentCatalog::with_rankings(vec![1.0; 3], 1.0, 0.0, vec![2, 3, 1]).unwrap();
        let x = mpc_strategy(&catalog, &with_capacity(1.5));
        assert_eq!(x.as_slice(), &[0.5, 0.0, 1.0]);
    }

    #[test]
    fn zero_capacity_caches_nothing() {
        let catalog = ContentCatalog::uniform(4, 1.0, 0.8, 0.0).unwrap();
        assert!(mpc_strategy(&catalog, &with_capacity(0.0))
            .as_slice()
            .iter()
            .all(|&x| x == 0.0));
        assert!(ruc_strategy(&catalog, &with_capacity(0.0))
            .as_slice()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn ruc_fill_fraction() {
        let catalog = ContentCatalog::uniform(10, 1.0, 0.8, 0.0).unwrap();
        let x = ruc_strategy(&catalog, &with_capacity(3.0));
        assert!(x.as_slice().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let x = ruc_strategy(&catalog, &with_capacity(25.0));
        assert!(x.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn energy_excess_flags_violations() {
        let catalog = ContentCatalog::uniform(2, 1.0, 0.0, 0.0).unwrap();
        let state = MeanFieldState::from_parts(vec![0.5, 0.5], vec![2.0, 2.0]).unwrap();
        let params = UserParams {
            energy_budget: 1.0,
            ..UserParams::default()
        };
        let full = Strategy::new(vec![1.0, 1.0]).unwrap();
        let excess = energy_excess(&full, &catalog, &state, &params).unwrap();
        assert!((excess - (0.7 * 4.0 - 1.0)).abs() < 1e-12);
        assert!(energy_excess(&Strategy::zeros(2), &catalog, &state, &params).is_none());
    }
}
