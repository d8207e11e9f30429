use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, ModelKind, Ranker};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Logistic preference model on feature differences:
/// `P(i ≻ j) = sigmoid(w·(x_i − x_j))`.
///
/// A single document's [`Ranker::score`] is the latent utility `w·x`. Query
/// scores are the mean concordance probability against every other
/// document, `mean_{j≠i} P(i ≻ j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseLogistic {
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Cap on preference pairs drawn per query and epoch.
    pub pairs_per_query: usize,
    /// Train on features divided by their standard deviation. The returned
    /// weights always apply to raw features.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        PairwiseConfig {
            epochs: 200,
            learning_rate: 0.5,
            pairs_per_query: 200,
            standardize: true,
            seed: 0,
        }
    }
}

impl PairwiseLogistic {
    pub fn new(weights: Vec<f64>) -> Self {
        PairwiseLogistic { weights }
    }

    fn utility(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    pub fn concordance_probability(&self, xi: &[f64], xj: &[f64]) -> f64 {
        sigmoid(self.utility(xi) - self.utility(xj))
    }

    /// Mean logistic loss `-ln P(i ≻ j)` over every pair with
    /// `label_i > label_j`.
    pub fn pair_loss(&self, data: &Dataset) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for q in &data.queries {
            for a in &q.docs {
                for b in &q.docs {
                    if a.label > b.label {
                        let p = self.concordance_probability(&a.features, &b.features);
                        total -= p.max(f64::MIN_POSITIVE).ln();
                        n += 1;
                    }
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }
}

impl Ranker for PairwiseLogistic {
    fn kind(&self) -> ModelKind {
        ModelKind::PairwiseLogistic
    }

    fn feature_count(&self) -> Option<usize> {
        Some(self.weights.len())
    }

    fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.weights.len(),
                got: features.len(),
            });
        }
        Ok(self.utility(features))
    }

    fn score_query(&self, docs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let utilities = docs.iter().map(|d| self.score(d)).collect::<Result<Vec<_>>>()?;
        let n = utilities.len();
        if n < 2 {
            return Ok(vec![0.5; n]);
        }
        // Sum over all j (including j = i, which contributes sigmoid(0) = 0.5)
        // in the same order for every i: equal utilities give bit-equal scores.
        Ok(utilities
            .iter()
            .map(|&ui| {
                let s: f64 = utilities.iter().map(|&uj| sigmoid(ui - uj)).sum();
                (s - 0.5) / (n - 1) as f64
            })
            .collect())
    }
}

/// Full-batch gradient descent on the mean pairwise logistic loss. Each
/// epoch uses every preference pair of a query, or a uniform sample of
/// `pairs_per_query` of them when there are more.
pub fn train_pairwise_logistic(train: &Dataset, config: &PairwiseConfig) -> Result<PairwiseLogistic> {
    if config.pairs_per_query == 0 {
        return Err(Error::invalid("pairs_per_query must be at least 1"));
    }
    let m = train.feature_count;
    let scale: Vec<f64> = if config.standardize {
        let n = train.doc_count() as f64;
        (0..m)
            .map(|j| {
                let mean = train.feature_means[j];
                let var = train.docs().map(|d| (d.features[j] - mean).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; m]
    };

    // preference pairs per query: (query, preferred doc, other doc)
    let pairs: Vec<Vec<(usize, usize)>> = train
        .queries
        .iter()
        .map(|q| {
            let mut v = Vec::new();
            for (i, a) in q.docs.iter().enumerate() {
                for (j, b) in q.docs.iter().enumerate() {
                    if a.label > b.label {
                        v.push((i, j));
                    }
                }
            }
            v
        })
        .collect();
    if pairs.iter().all(|p| p.is_empty()) {
        return Err(Error::invalid(
            "no trainable pairs: every query has a single relevance grade",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w = vec![0.0; m];
    let mut grad = vec![0.0; m];
    let mut diff = vec![0.0; m];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut count = 0usize;
        for (q, qp) in train.queries.iter().zip(&pairs) {
            let chosen: Vec<usize> = if qp.len() <= config.pairs_per_query {
                (0..qp.len()).collect()
            } else {
                let mut idx = index::sample(&mut rng, qp.len(), config.pairs_per_query).into_vec();
                idx.sort_unstable();
                idx
            };
            for pi in chosen {
                let (i, j) = qp[pi];
                let (xi, xj) = (&q.docs[i].features, &q.docs[j].features);
                for k in 0..m {
                    diff[k] = (xi[k] - xj[k]) / scale[k];
                }
                let margin: f64 = w.iter().zip(&diff).map(|(a, b)| a * b).sum();
                let coef = 1.0 - sigmoid(margin);
                for k in 0..m {
                    grad[k] += coef * diff[k];
                }
                count += 1;
            }
        }
        let step = config.learning_rate / count as f64;
        for k in 0..m {
            w[k] += step * grad[k];
        }
    }
    let weights = w.iter().zip(&scale).map(|(w, s)| w / s).collect();
    Ok(PairwiseLogistic { weights })
}
