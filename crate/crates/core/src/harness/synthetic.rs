//! Synthetic benchmarks with a known ground-truth model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DocVector, QueryGroup};
use crate::error::{Error, Result};
use crate::rankers::{ModelKind, Ranker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// Weighted sum of the planted features.
    Linear,
    /// Linear plus a product term on the first two planted features.
    Interaction,
    /// Linear, with the first planted feature copied into an unplanted
    /// column; the model splits that feature's weight across both copies.
    DuplicatedColumns,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(GeneratorKind::Linear),
            "interaction" => Ok(GeneratorKind::Interaction),
            "duplicated-columns" => Ok(GeneratorKind::DuplicatedColumns),
            _ => Err(Error::invalid(format!("unknown generator {:?}", s))),
        }
    }
}

/// Coefficient of the product term in [`GeneratorKind::Interaction`].
pub const INTERACTION_STRENGTH: f64 = 3.0;

/// The ground-truth scorer behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub generator: GeneratorKind,
    pub feature_count: usize,
    pub planted: Vec<usize>,
    pub weights: Vec<f64>,
    /// Column holding a copy of `planted[0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate: Option<usize>,
}

impl PlantedModel {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut s: f64 = self.planted.iter().zip(&self.weights).map(|(&f, w)| w * x[f]).sum();
        match self.generator {
            GeneratorKind::Linear => {}
            GeneratorKind::Interaction => s += INTERACTION_STRENGTH * x[self.planted[0]] * x[self.planted[1]],
            GeneratorKind::DuplicatedColumns => {
                let d = self.duplicate.expect("duplicated-columns model has a duplicate");
                let half = 0.5 * self.weights[0];
                s += half * (x[d] - x[self.planted[0]]);
            }
        }
        s
    }
}

impl Ranker for PlantedModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Planted
    }

    fn feature_count(&self) -> Option<usize> {
        Some(self.feature_count)
    }

    fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_count {
            return Err(Error::Dimension { expected: self.feature_count, got: features.len() });
        }
        Ok(self.eval(features))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_queries: usize,
    pub docs_per_query: usize,
    pub feature_count: usize,
    /// Planted feature set `S*` (0-based).
    pub planted: Vec<usize>,
    pub generator: GeneratorKind,
    /// Standard deviation of Gaussian noise added to the score before
    /// labels are assigned.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Linear suite used throughout the tests: `S* = {2, 5, 7}` of 10.
    pub fn planted_linear(n_queries: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_queries,
            docs_per_query: 10,
            feature_count: 10,
            planted: vec![2, 5, 7],
            generator: GeneratorKind::Linear,
            noise: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_queries == 0 || self.docs_per_query == 0 || self.feature_count == 0 {
            return Err(Error::invalid("synthetic spec needs queries, documents and features"));
        }
        if self.planted.is_empty() {
            return Err(Error::invalid("planted set is empty"));
        }
        let mut p = self.planted.clone();
        p.sort_unstable();
        p.dedup();
        if p.len() != self.planted.len() {
            return Err(Error::invalid("planted set has repeated features"));
        }
        if let Some(&f) = p.iter().find(|&&f| f >= self.feature_count) {
            return Err(Error::invalid(format!("planted feature {} out of range", f)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise must be a finite nonnegative number"));
        }
        match self.generator {
            GeneratorKind::Interaction if self.planted.len() < 2 => {
                Err(Error::invalid("interaction generator needs at least two planted features"))
            }
            GeneratorKind::DuplicatedColumns if self.planted.len() == self.feature_count => {
                Err(Error::invalid("duplicated-columns generator needs a free column"))
            }
            _ => Ok(()),
        }
    }
}

/// Grade by score tertile within the query: top third 2, middle 1, rest 0.
fn tertile_labels(scores: &[f64]) -> Vec<u32> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut labels = vec![0; n];
    for (p, &d) in order.iter().enumerate() {
        labels[d] = 2 - (3 * p / n) as u32;
    }
    labels
}

/// Draws a dataset from `spec` together with the model that labelled it.
/// Features are uniform on `[0, 1)`; the duplicate column (the smallest
/// unplanted id) is an exact copy of the first planted feature.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, PlantedModel)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights: Vec<f64> = spec.planted.iter().map(|_| rng.random_range(0.5..1.5)).collect();
    let duplicate = match spec.generator {
        GeneratorKind::DuplicatedColumns => (0..spec.feature_count).find(|f| !spec.planted.contains(f)),
        _ => None,
    };
    let model = PlantedModel {
        generator: spec.generator,
        feature_count: spec.feature_count,
        planted: spec.planted.clone(),
        weights,
        duplicate,
    };
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid(e.to_string()))?;

    let mut queries = Vec::with_capacity(spec.n_queries);
    for q in 0..spec.n_queries {
        let rows: Vec<Vec<f64>> = (0..spec.docs_per_query)
            .map(|_| {
                let mut x: Vec<f64> = (0..spec.feature_count).map(|_| rng.random::<f64>()).collect();
                if let Some(d) = duplicate {
                    x[d] = x[spec.planted[0]];
                }
                x
            })
            .collect();
        let scores: Vec<f64> = rows
            .iter()
            .map(|x| {
                let s = model.eval(x);
                if spec.noise > 0.0 {
                    s + noise.sample(&mut rng)
                } else {
                    s
                }
            })
            .collect();
        let labels = tertile_labels(&scores);
        queries.push(QueryGroup {
            qid: (q + 1).to_string(),
            docs: rows
                .into_iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (features, label))| DocVector { doc_index: i, label, features, comment: None })
                .collect(),
        });
    }
    Ok((Dataset::new(queries, spec.feature_count)?, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_labels_follow_the_model() {
        let (data, model) = generate_synthetic(&SyntheticSpec::planted_linear(5, 1)).unwrap();
        for q in &data.queries {
            let s: Vec<f64> = q.docs.iter().map(|d| model.score(&d.features).unwrap()).collect();
            for a in &q.docs {
                for b in &q.docs {
                    if s[a.doc_index] > s[b.doc_index] {
                        assert!(a.label >= b.label);
                    }
                }
            }
            let twos = q.docs.iter().filter(|d| d.label == 2).count();
            assert_eq!(twos, 4);
        }
    }

    #[test]
    fn duplicate_columns_are_bit_identical() {
        let spec = SyntheticSpec { generator: GeneratorKind::DuplicatedColumns, ..SyntheticSpec::planted_linear(4, 2) };
        let (data, model) = generate_synthetic(&spec).unwrap();
        assert_eq!(model.duplicate, Some(0));
        for d in data.docs() {
            assert_eq!(d.features[0].to_bits(), d.features[2].to_bits());
        }
    }

    #[test]
    fn duplicated_model_matches_linear_on_its_data() {
        let spec = SyntheticSpec { generator: GeneratorKind::DuplicatedColumns, ..SyntheticSpec::planted_linear(2, 3) };
        let (data, model) = generate_synthetic(&spec).unwrap();
        let linear = PlantedModel { generator: GeneratorKind::Linear, duplicate: None, ..model.clone() };
        for d in data.docs() {
            let a = model.score(&d.features).unwrap();
            let b = linear.score(&d.features).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let spec = SyntheticSpec { noise: 0.3, generator: GeneratorKind::Interaction, ..SyntheticSpec::planted_linear(6, 9) };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SyntheticSpec { seed: 10, ..spec.clone() };
        assert_ne!(generate_synthetic(&spec).unwrap().0, generate_synthetic(&other).unwrap().0);
    }

    #[test]
    fn tertiles() {
        assert_eq!(tertile_labels(&[0.1, 0.9, 0.5]), vec![0, 2, 1]);
        assert_eq!(tertile_labels(&[1.0]), vec![2]);
    }

    #[test]
    fn invalid_specs() {
        let base = SyntheticSpec::planted_linear(2, 0);
        for bad in [
            SyntheticSpec { planted: vec![10], ..base.clone() },
            SyntheticSpec { planted: vec![], ..base.clone() },
            SyntheticSpec { planted: vec![1, 1], ..base.clone() },
            SyntheticSpec { noise: -1.0, ..base.clone() },
            SyntheticSpec { planted: vec![1], generator: GeneratorKind::Interaction, ..base.clone() },
        ] {
            assert!(generate_synthetic(&bad).is_err(), "{:?}", bad);
        }
    }
}
