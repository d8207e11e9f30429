//! Kernel SHAP for a single document score.
//!
//! The model is approximated around a document `x` by
//! `g(z) = φ0 + Σ φ_i z_i` over binary coalitions `z`. The value of a
//! coalition is the model score with the "off" features taken from each
//! background row in turn, averaged over the background. `φ` solves a
//! weighted least-squares fit where interior coalitions carry the Shapley
//! kernel weight `(M−1) / (C(M,|z|)·|z|·(M−|z|))` and the empty and full
//! coalitions are pinned with a large weight.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, QueryGroup};
use crate::error::{Error, Result};
use crate::explain::{Explanation, Method};
use crate::rankers::{rank, FeatureMask, MaskPolicy, Ranker};

const BOUNDARY_WEIGHT: f64 = 1e6;
/// Largest feature count for which every coalition may be enumerated.
const MAX_EXHAUSTIVE_FEATURES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoalitionMode {
    /// Enumerate every coalition when `2^M − 2 ≤ n_samples`, sample otherwise.
    Auto,
    Exhaustive,
    Sampled,
}

/// How attributions are turned into a feature ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankBy {
    Abs,
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapVariant {
    /// Attributions of the top-ranked document only.
    Top1,
    /// Summed attributions of the top five documents.
    Top5,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapConfig {
    /// Interior coalitions to sample.
    pub n_samples: usize,
    pub background_size: usize,
    pub seed: u64,
    pub coalitions: CoalitionMode,
    pub rank_by: RankBy,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig {
            n_samples: 200,
            background_size: 500,
            seed: 0,
            coalitions: CoalitionMode::Auto,
            rank_by: RankBy::Abs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub phi0: f64,
    pub phi: Vec<f64>,
    pub target_doc: usize,
}

/// Draws up to `size` training rows uniformly without replacement.
pub fn sample_background(dataset: &Dataset, size: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if size == 0 {
        return Err(Error::invalid("background size must be at least 1"));
    }
    let rows: Vec<&Vec<f64>> = dataset.docs().map(|d| &d.features).collect();
    if size >= rows.len() {
        return Ok(rows.into_iter().cloned().collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, rows.len(), size).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| rows[i].clone()).collect())
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn kernel_weight(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64)
}

fn coalition_value(model: &dyn Ranker, x: &[f64], z: &[bool], background: &[Vec<f64>]) -> Result<f64> {
    let mut buf = vec![0.0; x.len()];
    let mut total = 0.0;
    for b in background {
        for j in 0..x.len() {
            buf[j] = if z[j] { x[j] } else { b[j] };
        }
        total += model.score(&buf)?;
    }
    Ok(total / background.len() as f64)
}

fn interior_coalitions(m: usize, config: &ShapConfig) -> Result<Vec<Vec<bool>>> {
    let interior = if m >= 64 { u64::MAX } else { (1u64 << m) - 2 };
    let exhaustive = match config.coalitions {
        CoalitionMode::Exhaustive => true,
        CoalitionMode::Sampled => false,
        CoalitionMode::Auto => interior <= config.n_samples as u64,
    };
    if exhaustive {
        if m > MAX_EXHAUSTIVE_FEATURES {
            return Err(Error::invalid(format!(
                "exhaustive coalitions need at most {} features, got {}",
                MAX_EXHAUSTIVE_FEATURES, m
            )));
        }
        return Ok((1..(1u64 << m) - 1)
            .map(|bits| (0..m).map(|j| bits >> j & 1 == 1).collect())
            .collect());
    }
    if m < 2 {
        return Ok(Vec::new());
    }
    // sizes follow the kernel's total mass per size; each draw is paired
    // with its complement
    let size_mass: Vec<f64> = (1..m).map(|s| (m - 1) as f64 / (s * (m - s)) as f64).collect();
    let sizes = WeightedIndex::new(&size_mass).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let target = (config.n_samples as u64).min(interior) as usize;
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let mut out = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while out.len() < target && attempts < 100 * target.max(1) {
        attempts += 1;
        let s = sizes.sample(&mut rng) + 1;
        let mut z = vec![false; m];
        for j in index::sample(&mut rng, m, s) {
            z[j] = true;
        }
        let comp: Vec<bool> = z.iter().map(|b| !b).collect();
        for c in [z, comp] {
            if out.len() < target && seen.insert(c.clone()) {
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// Kernel SHAP attributions for document `doc` of `query`.
pub fn kernel_shap(
    model: &dyn Ranker,
    query: &QueryGroup,
    doc: usize,
    background: &[Vec<f64>],
    config: &ShapConfig,
) -> Result<ShapAttribution> {
    let x = &query
        .docs
        .get(doc)
        .ok_or_else(|| Error::invalid(format!("document {} not in query {:?}", doc, query.qid)))?
        .features;
    let m = x.len();
    if m == 0 {
        return Err(Error::invalid("no features to attribute"));
    }
    if background.is_empty() {
        return Err(Error::invalid("background is empty"));
    }
    if let Some(b) = background.iter().find(|b| b.len() != m) {
        return Err(Error::Dimension { expected: m, got: b.len() });
    }

    let mut coalitions = interior_coalitions(m, config)?;
    let mut weights: Vec<f64> = coalitions
        .iter()
        .map(|z| kernel_weight(m, z.iter().filter(|b| **b).count()))
        .collect();
    let mass: f64 = weights.iter().sum();
    if mass > 0.0 {
        weights.iter_mut().for_each(|w| *w /= mass);
    }
    coalitions.push(vec![false; m]);
    coalitions.push(vec![true; m]);
    weights.push(BOUNDARY_WEIGHT);
    weights.push(BOUNDARY_WEIGHT);

    let values = coalitions
        .iter()
        .map(|z| coalition_value(model, x, z, background))
        .collect::<Result<Vec<f64>>>()?;

    let rows = coalitions.len();
    let mut a = DMatrix::<f64>::zeros(rows, m + 1);
    let mut b = DVector::<f64>::zeros(rows);
    for (r, (z, (&w, &v))) in coalitions.iter().zip(weights.iter().zip(&values)).enumerate() {
        let sw = w.sqrt();
        a[(r, 0)] = sw;
        for j in 0..m {
            if z[j] {
                a[(r, j + 1)] = sw;
            }
        }
        b[r] = sw * v;
    }
    let svd = a.svd(true, true);
    let solution = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Singular(format!("kernel shap regression: {}", e)))?;
    Ok(ShapAttribution {
        phi0: solution[0],
        phi: solution.iter().skip(1).copied().collect(),
        target_doc: doc,
    })
}

/// Top-`k` features by aggregated attribution over the top-ranked document
/// (or top five documents). Ties go to the lower feature id.
pub fn shap_topk(
    model: &dyn Ranker,
    query: &QueryGroup,
    k: usize,
    variant: ShapVariant,
    background: &[Vec<f64>],
    config: &ShapConfig,
    policy: &MaskPolicy,
) -> Result<Vec<usize>> {
    let m = query.feature_count();
    if query.docs.is_empty() {
        return Err(Error::invalid(format!("query {:?} has no documents", query.qid)));
    }
    if k > m {
        return Err(Error::invalid(format!("cannot pick {} of {} features", k, m)));
    }
    let original = rank(model, query, &FeatureMask::full(m), policy)?;
    let depth = match variant {
        ShapVariant::Top1 => 1,
        ShapVariant::Top5 => 5,
    }
    .min(original.len());
    let attributions = original.order[..depth]
        .par_iter()
        .map(|&d| kernel_shap(model, query, d, background, config))
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![0.0; m];
    for a in &attributions {
        for (t, p) in total.iter_mut().zip(&a.phi) {
            *t += p;
        }
    }
    let key = |v: f64| match config.rank_by {
        RankBy::Abs => v.abs(),
        RankBy::Signed => v,
    };
    let mut ids: Vec<usize> = (0..m).collect();
    ids.sort_by(|&a, &b| key(total[b]).total_cmp(&key(total[a])).then(a.cmp(&b)));
    ids.truncate(k);
    Ok(ids)
}

pub fn shap_topk_explanation(
    model: &dyn Ranker,
    query: &QueryGroup,
    k: usize,
    variant: ShapVariant,
    background: &[Vec<f64>],
    config: &ShapConfig,
    policy: &MaskPolicy,
) -> Result<Explanation> {
    let selected = shap_topk(model, query, k, variant, background, config, policy)?;
    let method = match variant {
        ShapVariant::Top1 => Method::Shap1,
        ShapVariant::Top5 => Method::Shap5,
    };
    Explanation::from_selection(model, query, selected, method, k, policy)
}
