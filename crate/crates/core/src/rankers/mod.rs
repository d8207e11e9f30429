//! Black-box scoring with feature masking.
//!
//! Every explanation method in this crate talks to a model only through the
//! [`Ranker`] trait: it hands over (possibly masked) feature vectors and gets
//! scores back. Masking replaces the inactive coordinates with a substitution
//! value chosen by the [`MaskPolicy`] before the model sees the vector.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DocVector, QueryGroup};
use crate::error::{Error, Result};

mod external;
mod linear;
mod pairwise;
mod tree;

pub use external::ExternalScorer;
pub use linear::{train_pointwise_linear, LinearModel};
pub use pairwise::{train_pairwise_logistic, PairwiseConfig, PairwiseLogistic};
pub use tree::{train_tree_ensemble, Node, RegressionTree, TreeConfig, TreeEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    PointwiseLinear,
    PairwiseLogistic,
    TreeEnsemble,
    External,
    Planted,
}

/// A trained ranking model treated as a black box.
pub trait Ranker: Send + Sync {
    fn kind(&self) -> ModelKind;

    /// Input dimension, when the model knows it.
    fn feature_count(&self) -> Option<usize>;

    /// Relevance score of a single document vector.
    fn score(&self, features: &[f64]) -> Result<f64>;

    /// Scores for all documents of one query. Pointwise models score each
    /// document independently; listwise-style aggregation (as in the
    /// pairwise model) overrides this.
    fn score_query(&self, docs: &[Vec<f64>]) -> Result<Vec<f64>> {
        docs.iter().map(|d| self.score(d)).collect()
    }
}

impl<R: Ranker + ?Sized> Ranker for Box<R> {
    fn kind(&self) -> ModelKind {
        (**self).kind()
    }
    fn feature_count(&self) -> Option<usize> {
        (**self).feature_count()
    }
    fn score(&self, features: &[f64]) -> Result<f64> {
        (**self).score(features)
    }
    fn score_query(&self, docs: &[Vec<f64>]) -> Result<Vec<f64>> {
        (**self).score_query(docs)
    }
}

/// The active feature subset `F'` within a universe of `M` features.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FeatureMask {
    active: Vec<bool>,
}

impl FeatureMask {
    pub fn empty(universe: usize) -> Self {
        FeatureMask { active: vec![false; universe] }
    }

    pub fn full(universe: usize) -> Self {
        FeatureMask { active: vec![true; universe] }
    }

    pub fn from_indices(universe: usize, indices: &[usize]) -> Result<Self> {
        let mut mask = FeatureMask::empty(universe);
        for &i in indices {
            if i >= universe {
                return Err(Error::invalid(format!(
                    "feature index {} outside universe of {}",
                    i, universe
                )));
            }
            mask.active[i] = true;
        }
        Ok(mask)
    }

    pub fn universe_size(&self) -> usize {
        self.active.len()
    }

    pub fn contains(&self, f: usize) -> bool {
        self.active.get(f).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, f: usize) {
        self.active[f] = true;
    }

    /// Copy of this mask with `f` switched on.
    pub fn with(&self, f: usize) -> Self {
        let mut m = self.clone();
        m.insert(f);
        m
    }

    pub fn complement(&self) -> Self {
        FeatureMask {
            active: self.active.iter().map(|a| !a).collect(),
        }
    }

    pub fn indices(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.active.iter().any(|a| *a)
    }

    pub fn is_full(&self) -> bool {
        self.active.iter().all(|a| *a)
    }
}

impl fmt::Debug for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureMask({:?} of {})", self.indices(), self.universe_size())
    }
}

/// Value substituted for masked-out features.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskPolicy {
    Zero,
    /// Per-feature background means, usually taken from the training split.
    Mean(Arc<[f64]>),
}

impl MaskPolicy {
    pub fn background_mean(dataset: &Dataset) -> Self {
        MaskPolicy::Mean(dataset.feature_means.clone().into())
    }

    pub fn name(&self) -> &'static str {
        match self {
            MaskPolicy::Zero => "zero",
            MaskPolicy::Mean(_) => "mean",
        }
    }

    fn substitute(&self, feature: usize) -> f64 {
        match self {
            MaskPolicy::Zero => 0.0,
            MaskPolicy::Mean(means) => means[feature],
        }
    }
}

/// The vector the model sees: active coordinates untouched, inactive ones
/// replaced according to `policy`.
pub fn masked_vector(features: &[f64], mask: &FeatureMask, policy: &MaskPolicy) -> Result<Vec<f64>> {
    if features.len() != mask.universe_size() {
        return Err(Error::Dimension {
            expected: mask.universe_size(),
            got: features.len(),
        });
    }
    if let MaskPolicy::Mean(means) = policy {
        if means.len() != features.len() {
            return Err(Error::Dimension {
                expected: features.len(),
                got: means.len(),
            });
        }
    }
    Ok(features
        .iter()
        .enumerate()
        .map(|(j, &v)| if mask.active[j] { v } else { policy.substitute(j) })
        .collect())
}

fn check_model_dim(model: &dyn Ranker, m: usize) -> Result<()> {
    match model.feature_count() {
        Some(expected) if expected != m => Err(Error::Dimension { expected, got: m }),
        _ => Ok(()),
    }
}

pub fn masked_score(
    model: &dyn Ranker,
    doc: &DocVector,
    mask: &FeatureMask,
    policy: &MaskPolicy,
) -> Result<f64> {
    check_model_dim(model, doc.features.len())?;
    model.score(&masked_vector(&doc.features, mask, policy)?)
}

/// Scores every document of `query` under the same mask.
pub fn masked_query_scores(
    model: &dyn Ranker,
    query: &QueryGroup,
    mask: &FeatureMask,
    policy: &MaskPolicy,
) -> Result<Vec<f64>> {
    let vectors = query
        .docs
        .iter()
        .map(|d| masked_vector(&d.features, mask, policy))
        .collect::<Result<Vec<_>>>()?;
    if let Some(v) = vectors.first() {
        check_model_dim(model, v.len())?;
    }
    model.score_query(&vectors)
}

pub fn rank(
    model: &dyn Ranker,
    query: &QueryGroup,
    mask: &FeatureMask,
    policy: &MaskPolicy,
) -> Result<Ranking> {
    if query.docs.is_empty() {
        return Err(Error::invalid(format!("query {:?} has no documents", query.qid)));
    }
    Ok(Ranking::from_scores(masked_query_scores(model, query, mask, policy)?))
}

/// A strict ordering of one query's documents by descending score.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    /// Document indices, best first.
    pub order: Vec<usize>,
    /// Score per document index.
    pub scores: Vec<f64>,
    positions: Vec<usize>,
}

impl Ranking {
    /// Sorts by descending score; equal scores fall back to ascending
    /// document index, so the result is always a strict permutation.
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut positions = vec![0; scores.len()];
        for (pos, &d) in order.iter().enumerate() {
            positions[d] = pos;
        }
        Ranking { order, scores, positions }
    }

    /// Builds a ranking from an explicit order; scores are set so that they
    /// reproduce it (`n - position`).
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut positions = vec![usize::MAX; n];
        for (pos, &d) in order.iter().enumerate() {
            if d >= n || positions[d] != usize::MAX {
                return Err(Error::invalid(format!("{:?} is not a permutation", order)));
            }
            positions[d] = pos;
        }
        let scores = positions.iter().map(|&p| (n - p) as f64).collect();
        Ok(Ranking { order, scores, positions })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 0-based rank of document `doc`.
    pub fn position(&self, doc: usize) -> usize {
        self.positions[doc]
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }
}

/// Versioned on-disk form of the in-repo models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub model: ModelDump,
}

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelDump {
    Linear(LinearModel),
    Pairwise(PairwiseLogistic),
    Trees(TreeEnsemble),
    Planted(crate::harness::PlantedModel),
}

impl ModelDump {
    pub fn into_ranker(self) -> Box<dyn Ranker> {
        match self {
            ModelDump::Linear(m) => Box::new(m),
            ModelDump::Pairwise(m) => Box::new(m),
            ModelDump::Trees(m) => Box::new(m),
            ModelDump::Planted(m) => Box::new(m),
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            model: self.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.version != MODEL_FILE_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model file version {}",
                file.version
            )));
        }
        Ok(file.model)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
