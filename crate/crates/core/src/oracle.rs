//! Ground-truth instruments for small instances: exhaustive search for the
//! most valid `k`-subset, and an empirical submodularity ratio of the
//! validity set function.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::QueryGroup;
use crate::error::{Error, Result};
use crate::metrics::validity_against;
use crate::rankers::{rank, FeatureMask, MaskPolicy, Ranker};

pub const DEFAULT_BUDGET: u128 = 1_000_000;
/// Largest `|U|` accepted by [`submodularity_ratio`].
pub const MAX_PROBE_FEATURES: usize = 12;
/// Added to validity so the probed set function is nonnegative.
pub const VALIDITY_SHIFT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Ascending feature ids (0-based).
    pub best_subset: Vec<usize>,
    pub best_validity: f64,
    pub subsets_evaluated: u64,
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn n_choose_k(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.push(c.clone());
        // rightmost position that can still advance
        let Some(i) = (0..k).rev().find(|&i| c[i] < n - k + i) else {
            return out;
        };
        c[i] += 1;
        for j in i + 1..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

/// Evaluates every `k`-subset and returns the most valid one. Ties go to the
/// lexicographically smallest subset.
pub fn brute_force_optimal(
    model: &dyn Ranker,
    query: &QueryGroup,
    k: usize,
    policy: &MaskPolicy,
    budget: u128,
) -> Result<OracleResult> {
    let m = query.feature_count();
    if query.docs.len() < 2 {
        return Err(Error::invalid(format!("query {:?} has fewer than two documents", query.qid)));
    }
    if k == 0 || k > m {
        return Err(Error::invalid(format!("k must be in 1..={}, got {}", m, k)));
    }
    let subsets = n_choose_k(m, k);
    if subsets > budget {
        return Err(Error::BudgetExceeded { subsets, budget });
    }
    let original = rank(model, query, &FeatureMask::full(m), policy)?;
    let candidates = combinations(m, k);
    let scored = candidates
        .into_par_iter()
        .map(|s| {
            let mask = FeatureMask::from_indices(m, &s)?;
            Ok((validity_against(model, query, &mask, policy, &original)?, s))
        })
        .collect::<Result<Vec<(f64, Vec<usize>)>>>()?;
    let evaluated = scored.len() as u64;
    let (best_validity, best_subset) = scored
        .into_iter()
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .expect("at least one subset");
    Ok(OracleResult { best_subset, best_validity, subsets_evaluated: evaluated })
}

fn better(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodularityProbe {
    /// `max(raw_min, 0)`.
    pub gamma: f64,
    /// Smallest ratio over all enumerated pairs, before clamping.
    pub raw_min: f64,
    /// `(L, S)` attaining `raw_min`; `None` when no pair was enumerated.
    pub witness: Option<(Vec<usize>, Vec<usize>)>,
    /// Pairs with a zero joint gain but a nonzero sum of singleton gains.
    pub skipped: u64,
    pub evaluated: u64,
    pub shift: f64,
}

const ZERO_GAIN: f64 = 1e-12;

fn bits_to_ids(bits: u32, universe: &[usize]) -> Vec<usize> {
    universe.iter().enumerate().filter(|(i, _)| bits >> i & 1 == 1).map(|(_, &f)| f).collect()
}

/// Submodularity ratio of `g(A) = validity(A) + 1` restricted to `U`:
/// the minimum over `L ⊆ U` and nonempty `S ⊆ U \ L` with `|S| ≤ k` of
/// `Σ_{x∈S} [g(L∪{x}) − g(L)] / [g(L∪S) − g(L)]`, where `0/0` counts as 1.
pub fn submodularity_ratio(
    model: &dyn Ranker,
    query: &QueryGroup,
    universe: &[usize],
    k: usize,
    policy: &MaskPolicy,
) -> Result<SubmodularityProbe> {
    probe(model, query, universe, k, policy, false)
}

fn probe(
    model: &dyn Ranker,
    query: &QueryGroup,
    universe: &[usize],
    k: usize,
    policy: &MaskPolicy,
    reverse: bool,
) -> Result<SubmodularityProbe> {
    let m = query.feature_count();
    if universe.len() > MAX_PROBE_FEATURES {
        return Err(Error::invalid(format!(
            "probe universe has {} features, at most {} allowed",
            universe.len(),
            MAX_PROBE_FEATURES
        )));
    }
    let mut u = universe.to_vec();
    u.sort_unstable();
    u.dedup();
    if u.len() != universe.len() {
        return Err(Error::invalid("probe universe has repeated features"));
    }
    if let Some(&f) = u.iter().find(|&&f| f >= m) {
        return Err(Error::invalid(format!("feature {} out of range for {} features", f, m)));
    }
    if query.docs.len() < 2 {
        return Err(Error::invalid(format!("query {:?} has fewer than two documents", query.qid)));
    }

    let original = rank(model, query, &FeatureMask::full(m), policy)?;
    let n = u.len();
    let full: u32 = if n == 0 { 0 } else { (1u32 << n) - 1 };
    let g = (0..=full)
        .into_par_iter()
        .map(|bits| {
            let mask = FeatureMask::from_indices(m, &bits_to_ids(bits, &u))?;
            Ok(validity_against(model, query, &mask, policy, &original)? + VALIDITY_SHIFT)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut result = SubmodularityProbe {
        gamma: 1.0,
        raw_min: 1.0,
        witness: None,
        skipped: 0,
        evaluated: 0,
        shift: VALIDITY_SHIFT,
    };
    let mut best: Option<(f64, u32, u32)> = None;
    let order: Vec<u32> = if reverse { (0..=full).rev().collect() } else { (0..=full).collect() };
    for &l in &order {
        let rest = full & !l;
        for &s in &order {
            if s == 0 || s & !rest != 0 || s.count_ones() as usize > k {
                continue;
            }
            let joint = g[(l | s) as usize] - g[l as usize];
            let singles: f64 = (0..n)
                .filter(|i| s >> i & 1 == 1)
                .map(|i| g[(l | 1 << i) as usize] - g[l as usize])
                .sum();
            let ratio = if joint.abs() <= ZERO_GAIN {
                if singles.abs() <= ZERO_GAIN {
                    1.0
                } else {
                    result.skipped += 1;
                    continue;
                }
            } else {
                singles / joint
            };
            result.evaluated += 1;
            // the witness is the smallest (L, S) by bitmask among minimisers,
            // whatever the enumeration order
            let replace = match best {
                None => true,
                Some((r, bl, bs)) => ratio < r || (ratio == r && (l, s) < (bl, bs)),
            };
            if replace {
                best = Some((ratio, l, s));
            }
        }
    }
    if let Some((r, l, s)) = best {
        result.raw_min = r;
        result.gamma = r.max(0.0);
        result.witness = Some((bits_to_ids(l, &u), bits_to_ids(s, &u)));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DocVector;
    use crate::metrics::validity;
    use crate::rankers::{LinearModel, Node, RegressionTree, TreeEnsemble};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn query(vs: Vec<Vec<f64>>) -> QueryGroup {
        QueryGroup {
            qid: "q".into(),
            docs: vs
                .into_iter()
                .enumerate()
                .map(|(i, f)| DocVector { doc_index: i, label: 0, features: f, comment: None })
                .collect(),
        }
    }

    fn random_query(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QueryGroup {
        query((0..n).map(|_| (0..m).map(|_| rng.random()).collect()).collect())
    }

    #[test]
    fn binomials() {
        assert_eq!(n_choose_k(6, 2), 15);
        assert_eq!(n_choose_k(46, 5), 1_370_754);
        assert_eq!(n_choose_k(3, 4), 0);
        assert_eq!(n_choose_k(10, 0), 1);
        assert_eq!(combinations(5, 3).len(), 10);
        assert_eq!(combinations(4, 2)[..3], [vec![0, 1], vec![0, 2], vec![0, 3]]);
    }

    #[test]
    fn full_set_is_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_query(&mut rng, 8, 4);
        let model = LinearModel::new(vec![0.3, -1.0, 2.0, 0.5], 0.0);
        let r = brute_force_optimal(&model, &q, 4, &MaskPolicy::Zero, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.best_subset, vec![0, 1, 2, 3]);
        assert_eq!(r.best_validity, 1.0);
        assert_eq!(r.subsets_evaluated, 1);
    }

    #[test]
    fn planted_subset_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = random_query(&mut rng, 12, 10);
        let mut w = vec![0.0; 10];
        w[2] = 1.0;
        w[5] = 0.7;
        w[7] = 1.3;
        let r = brute_force_optimal(&LinearModel::new(w, 0.0), &q, 3, &MaskPolicy::Zero, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.best_subset, vec![2, 5, 7]);
        assert_eq!(r.best_validity, 1.0);
        assert_eq!(r.subsets_evaluated, 120);
    }

    fn small_tree() -> TreeEnsemble {
        TreeEnsemble {
            feature_count: 6,
            base_score: 0.0,
            trees: vec![
                RegressionTree {
                    nodes: vec![
                        Node::Split { feature: 1, threshold: 0.5, left: 1, right: 2 },
                        Node::Split { feature: 3, threshold: 0.4, left: 3, right: 4 },
                        Node::Leaf { value: 2.0 },
                        Node::Leaf { value: -1.0 },
                        Node::Leaf { value: 0.5 },
                    ],
                },
                RegressionTree {
                    nodes: vec![
                        Node::Split { feature: 4, threshold: 0.3, left: 1, right: 2 },
                        Node::Leaf { value: 0.0 },
                        Node::Split { feature: 0, threshold: 0.6, left: 3, right: 4 },
                        Node::Leaf { value: 0.7 },
                        Node::Leaf { value: 1.1 },
                    ],
                },
            ],
        }
    }

    #[test]
    fn dominates_every_pair_on_a_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = small_tree();
        for _ in 0..5 {
            let q = random_query(&mut rng, 9, 6);
            let r = brute_force_optimal(&model, &q, 2, &MaskPolicy::Zero, DEFAULT_BUDGET).unwrap();
            assert_eq!(r.subsets_evaluated, 15);
            let mut best = (f64::NEG_INFINITY, vec![]);
            for a in 0..6 {
                for b in a + 1..6 {
                    let mask = FeatureMask::from_indices(6, &[a, b]).unwrap();
                    let v = validity(&model, &q, &mask, &MaskPolicy::Zero).unwrap();
                    assert!(r.best_validity >= v);
                    if v > best.0 {
                        best = (v, vec![a, b]);
                    }
                }
            }
            assert_eq!((r.best_validity, r.best_subset), best);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_query(&mut rng, 3, 10);
        let model = LinearModel::new(vec![1.0; 10], 0.0);
        match brute_force_optimal(&model, &q, 5, &MaskPolicy::Zero, 100) {
            Err(Error::BudgetExceeded { subsets, budget }) => assert_eq!((subsets, budget), (252, 100)),
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn modular_instance_has_unit_ratio() {
        // only feature 0 separates the docs, and only it can flip the
        // index tie-break
        let q = query(vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]);
        let model = LinearModel::new(vec![1.0, 1.0, 1.0], 0.0);
        let p = submodularity_ratio(&model, &q, &[0, 1, 2], 3, &MaskPolicy::Zero).unwrap();
        assert_eq!(p.gamma, 1.0);
        assert_eq!(p.raw_min, 1.0);
        assert_eq!(p.skipped, 0);
        assert_eq!(p.shift, 1.0);
    }

    #[test]
    fn complementary_features_have_zero_ratio() {
        // doc 1 wins only when features 1 and 2 join feature 0
        let q = query(vec![vec![0.5, 0.0, 0.0], vec![0.2, 0.2, 0.2]]);
        let model = LinearModel::new(vec![1.0, 1.0, 1.0], 0.0);
        let p = submodularity_ratio(&model, &q, &[0, 1, 2], 2, &MaskPolicy::Zero).unwrap();
        assert_eq!(p.gamma, 0.0);
        assert_eq!(p.witness, Some((vec![0], vec![1, 2])));
    }

    #[test]
    fn empty_universe() {
        let q = query(vec![vec![0.1], vec![0.2]]);
        let p = submodularity_ratio(&LinearModel::new(vec![1.0], 0.0), &q, &[], 3, &MaskPolicy::Zero).unwrap();
        assert_eq!(p.gamma, 1.0);
        assert_eq!(p.witness, None);
    }

    #[test]
    fn enumeration_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = small_tree();
        for _ in 0..3 {
            let q = random_query(&mut rng, 7, 6);
            let u = [0, 1, 3, 4];
            let a = probe(&model, &q, &u, 3, &MaskPolicy::Zero, false).unwrap();
            let b = probe(&model, &q, &u, 3, &MaskPolicy::Zero, true).unwrap();
            assert_eq!(a, b);
            assert!(a.gamma >= 0.0);
        }
    }

    #[test]
    fn oversized_universe() {
        let q = query(vec![vec![0.0; 13], vec![1.0; 13]]);
        let u: Vec<usize> = (0..13).collect();
        assert!(submodularity_ratio(&LinearModel::new(vec![1.0; 13], 0.0), &q, &u, 2, &MaskPolicy::Zero).is_err());
    }
}
