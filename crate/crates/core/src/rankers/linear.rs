use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ModelKind, Ranker};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Pointwise linear scorer `bias + w·x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        LinearModel { weights, bias }
    }
}

impl Ranker for LinearModel {
    fn kind(&self) -> ModelKind {
        ModelKind::PointwiseLinear
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
        Ok(self.bias + self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>())
    }
}

/// Ridge regression of the label on the features, with an unpenalized
/// intercept. Solves `(XcᵀXc + l2·I) w = Xcᵀyc` on centered data.
pub fn train_pointwise_linear(train: &Dataset, l2: f64) -> Result<LinearModel> {
    if !(l2 >= 0.0) {
        return Err(Error::invalid("l2 must be non-negative"));
    }
    let m = train.feature_count;
    let n = train.doc_count();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let y_mean = train.docs().map(|d| d.label as f64).sum::<f64>() / n as f64;
    let x_mean = &train.feature_means;

    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut row = vec![0.0; m];
    for d in train.docs() {
        for j in 0..m {
            row[j] = d.features[j] - x_mean[j];
        }
        let y = d.label as f64 - y_mean;
        for a in 0..m {
            if row[a] == 0.0 {
                continue;
            }
            rhs[a] += row[a] * y;
            for b in a..m {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += l2;
    }

    let scale = (0..m).map(|i| gram[(i, i)]).fold(0.0_f64, f64::max);
    let singular = || {
        Error::Singular(if l2 == 0.0 {
            "normal equations are singular; retry with l2 > 0".into()
        } else {
            format!("normal equations are singular at l2 = {}", l2)
        })
    };
    if scale <= 0.0 {
        return Err(singular());
    }
    let chol = gram.cholesky().ok_or_else(singular)?;
    let l = chol.l_dirty();
    if (0..m).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale) {
        return Err(singular());
    }
    let w = chol.solve(&rhs);
    let weights: Vec<f64> = w.iter().copied().collect();
    let bias = y_mean - weights.iter().zip(x_mean).map(|(w, x)| w * x).sum::<f64>();
    Ok(LinearModel { weights, bias })
}
