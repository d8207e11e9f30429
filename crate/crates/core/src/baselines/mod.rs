//! Baseline explainers: uniformly random feature subsets and Kernel SHAP.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::QueryGroup;
use crate::error::{Error, Result};
use crate::explain::{Explanation, Method};
use crate::rankers::{MaskPolicy, Ranker};

mod shap;

pub use shap::{
    kernel_shap, sample_background, shap_topk, shap_topk_explanation, CoalitionMode, RankBy, ShapAttribution,
    ShapConfig, ShapVariant,
};

/// A uniform `k`-subset of `0..m`, in draw order.
pub fn random_subset(m: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > m {
        return Err(Error::invalid(format!("cannot pick {} of {} features", k, m)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, m, k).into_vec())
}

pub fn random_explanation(
    model: &dyn Ranker,
    query: &QueryGroup,
    k: usize,
    policy: &MaskPolicy,
    seed: u64,
) -> Result<Explanation> {
    let selected = random_subset(query.feature_count(), k, seed)?;
    Explanation::from_selection(model, query, selected, Method::Random, k, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_draw_is_full_set() {
        let mut s = random_subset(7, 7, 3).unwrap();
        s.sort_unstable();
        assert_eq!(s, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_and_distinct() {
        let a = random_subset(20, 5, 42).unwrap();
        assert_eq!(a, random_subset(20, 5, 42).unwrap());
        let mut d = a.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 5);
    }

    #[test]
    fn too_many_features() {
        assert!(random_subset(3, 4, 0).is_err());
    }

    #[test]
    fn single_draws_are_uniform() {
        let n = 10_000;
        let mut counts = [0u32; 5];
        for s in 0..n {
            counts[random_subset(5, 1, s).unwrap()[0]] += 1;
        }
        let mean = n as f64 * 0.2;
        let sd = (n as f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "{:?}", counts);
        }
    }
}
