//! Content library and Zipf request popularity.

use crate::error::{invalid, Error, Result};

/// Files offered by the content provider, with sizes and request popularity.
///
/// Popularity is computed once at construction from the skew, the stationary
/// factor and the popularity ranking, and then stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentCatalog {
    sizes: Vec<f64>,
    rankings: Vec<usize>,
    skew: f64,
    stationary_factor: f64,
    popularity: Vec<f64>,
}

impl ContentCatalog {
    /// Catalog with the identity ranking: file index `f` has rank `f + 1`.
    pub fn new(sizes: Vec<f64>, skew: f64, stationary_factor: f64) -> Result<Self> {
        let rankings = (1..=sizes.len()).collect();
        Self::with_rankings(sizes, skew, stationary_factor, rankings)
    }

    /// `file_count` files of identical size.
    pub fn uniform(
        file_count: usize,
        size: f64,
        skew: f64,
        stationary_factor: f64,
    ) -> Result<Self> {
        Self::new(vec![size; file_count], skew, stationary_factor)
    }

    pub fn with_rankings(
        sizes: Vec<f64>,
        skew: f64,
        stationary_factor: f64,
        rankings: Vec<usize>,
    ) -> Result<Self> {
        if sizes.len() != rankings.len() {
            return Err(Error::DimensionMismatch {
                what: "catalog rankings",
                expected: sizes.len(),
                found: rankings.len(),
            });
        }
        if let Some(bad) = sizes.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid(format!(
                "file sizes must be positive and finite, got {bad}"
            )));
        }
        let popularity = zipf_popularity(sizes.len(), skew, stationary_factor, &rankings)?;
        Ok(Self {
            sizes,
            rankings,
            skew,
            stationary_factor,
            popularity,
        })
    }

    pub fn file_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn rankings(&self) -> &[usize] {
        &self.rankings
    }

    pub fn skew(&self) -> f64 {
        self.skew
    }

    pub fn stationary_factor(&self) -> f64 {
        self.stationary_factor
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    pub fn total_size(&self) -> f64 {
        self.sizes.iter().sum()
    }

    /// Expected requested volume per user, `sum_f q_f * s_f`.
    pub fn expected_demand(&self) -> f64 {
        self.popularity
            .iter()
            .zip(&self.sizes)
            .map(|(q, s)| q * s)
            .sum()
    }

    /// File indices sorted from most to least popular rank.
    pub fn files_by_rank(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.file_count()).collect();
        order.sort_by_key(|&f| self.rankings[f]);
        order
    }
}

/// Zipf request probabilities `q_f = (R_f + eps)^-beta / sum_i (R_i + eps)^-beta`.
///
/// `rankings[f]` is the 1-based popularity rank of file `f` and must be a
/// permutation of `1..=file_count`.
pub fn zipf_popularity(
    file_count: usize,
    skew: f64,
    stationary_factor: f64,
    rankings: &[usize],
) -> Result<Vec<f64>> {
    if file_count == 0 {
        return Err(invalid("catalog must contain at least one file"));
    }
    if !(skew.is_finite() && skew >= 0.0) {
        return Err(invalid(format!("skew must be nonnegative, got {skew}")));
    }
    if !(stationary_factor.is_finite() && stationary_factor >= 0.0) {
        return Err(invalid(format!(
            "stationary factor must be nonnegative, got {stationary_factor}"
        )));
    }
    if rankings.len() != file_count {
        return Err(Error::DimensionMismatch {
            what: "zipf rankings",
            expected: file_count,
            found: rankings.len(),
        });
    }
    let mut seen = vec![false; file_count];
    for &rank in rankings {
        if rank == 0 || rank > file_count || std::mem::replace(&mut seen[rank - 1], true) {
            return Err(invalid(format!(
                "rankings must be a permutation of 1..={file_count}"
            )));
        }
    }

    // Weights are taken relative to rank 1 so large skews do not underflow
    // the normalizer.
    let base = 1.0 + stationary_factor;
    let weights: Vec<f64> = rankings
        .iter()
        .map(|&rank| ((rank as f64 + stationary_factor) / base).powf(-skew))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Vec<usize> {
        (1..=n).collect()
    }

    #[test]
    fn zero_skew_is_uniform() {
        let q = zipf_popularity(10, 0.0, 0.0, &identity(10)).unwrap();
        for p in q {
            assert!((p - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn two_files_unit_skew() {
        let q = zipf_popularity(2, 1.0, 0.0, &identity(2)).unwrap();
        assert!((q[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((q[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn stationary_factor_shifts_ranks() {
        let q = zipf_popularity(3, 1.0, 1.0, &identity(3)).unwrap();
        let expected = [6.0 / 13.0, 4.0 / 13.0, 3.0 / 13.0];
        for (a, b) in q.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(zipf_popularity(0, 1.0, 0.0, &[]).is_err());
        assert!(zipf_popularity(2, -0.5, 0.0, &identity(2)).is_err());
        assert!(zipf_popularity(2, 1.0, -1.0, &identity(2)).is_err());
        assert!(zipf_popularity(3, 1.0, 0.0, &[1, 1, 3]).is_err());
        assert!(zipf_popularity(3, 1.0, 0.0, &[0, 1, 2]).is_err());
        assert!(zipf_popularity(3, 1.0, 0.0, &[1, 2]).is_err());
        assert!(ContentCatalog::new(vec![1.0, 0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn files_by_rank_follows_rankings() {
        let c = ContentCatalog::with_rankings(vec![1.0; 3], 1.0, 0.0, vec![3, 1, 2]).unwrap();
        assert_eq!(c.files_by_rank(), vec![1, 2, 0]);
        assert!(c.popularity()[1] > c.popularity()[2]);
        assert!(c.popularity()[2] > c.popularity()[0]);
    }
}
