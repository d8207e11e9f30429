//! Gradient-boosted regression trees on squared error.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelKind, Ranker};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf { value: f64 },
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub feature_count: usize,
    pub base_score: f64,
    /// Leaf values are already multiplied by the learning rate.
    pub trees: Vec<RegressionTree>,
}

impl TreeEnsemble {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

impl Ranker for TreeEnsemble {
    fn kind(&self) -> ModelKind {
        ModelKind::TreeEnsemble
    }

    fn feature_count(&self) -> Option<usize> {
        Some(self.feature_count)
    }

    fn score(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_count {
            return Err(Error::Dimension {
                expected: self.feature_count,
                got: features.len(),
            });
        }
        Ok(self.predict(features))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_leaf: 5,
            subsample: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Per-node accumulator while scanning one feature in sorted order.
#[derive(Clone, Copy)]
struct Scan {
    count: usize,
    sum: f64,
    last: f64,
}

/// Fits one tree to `target` over rows `rows`, growing level by level.
/// `sorted[j]` lists all row ids ordered by feature `j`.
fn fit_tree(
    x: &[&[f64]],
    target: &[f64],
    rows: &[usize],
    sorted: &[Vec<usize>],
    config: &TreeConfig,
) -> RegressionTree {
    let n = x.len();
    let m = sorted.len();
    let min_leaf = config.min_leaf.max(1);
    // node id for each row, usize::MAX when the row is out of play
    let mut node_of = vec![usize::MAX; n];
    for &r in rows {
        node_of[r] = 0;
    }
    let leaf_value = |count: usize, sum: f64| if count == 0 { 0.0 } else { sum / count as f64 };

    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut totals: Vec<(usize, f64)> = vec![(rows.len(), rows.iter().map(|&r| target[r]).sum())];
    let mut frontier = vec![0usize];

    for _depth in 0..config.max_depth {
        if frontier.is_empty() {
            break;
        }
        // slot of each frontier node in the per-level arrays
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &id) in frontier.iter().enumerate() {
            slot[id] = s;
        }
        let mut best: Vec<Option<SplitCandidate>> = vec![None; frontier.len()];
        for j in 0..m {
            let mut scans = vec![Scan { count: 0, sum: 0.0, last: f64::NAN }; frontier.len()];
            for &r in &sorted[j] {
                let id = node_of[r];
                if id == usize::MAX || slot[id] == usize::MAX {
                    continue;
                }
                let s = slot[id];
                let v = x[r][j];
                let sc = &mut scans[s];
                if sc.count > 0 && v > sc.last {
                    let (tc, ts) = totals[id];
                    let (lc, ls) = (sc.count, sc.sum);
                    let rc = tc - lc;
                    if lc >= min_leaf && rc >= min_leaf {
                        let rs = ts - ls;
                        let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - ts * ts / tc as f64;
                        if gain > 1e-12 && best[s].is_none_or(|b| gain > b.gain) {
                            let mut threshold = sc.last + (v - sc.last) / 2.0;
                            if threshold >= v {
                                threshold = sc.last;
                            }
                            best[s] = Some(SplitCandidate { gain, feature: j, threshold });
                        }
                    }
                }
                sc.count += 1;
                sc.sum += target[r];
                sc.last = v;
            }
        }

        let mut next = Vec::new();
        let mut child_of: Vec<Option<(usize, usize, usize, f64)>> = vec![None; frontier.len()];
        for (s, &id) in frontier.iter().enumerate() {
            if let Some(c) = best[s] {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                totals.push((0, 0.0));
                totals.push((0, 0.0));
                nodes[id] = Node::Split { feature: c.feature, threshold: c.threshold, left, right };
                child_of[s] = Some((left, right, c.feature, c.threshold));
                next.push(left);
                next.push(right);
            }
        }
        for &r in rows {
            let id = node_of[r];
            if id >= slot.len() || slot[id] == usize::MAX {
                continue;
            }
            if let Some((left, right, f, t)) = child_of[slot[id]] {
                let child = if x[r][f] <= t { left } else { right };
                node_of[r] = child;
                totals[child].0 += 1;
                totals[child].1 += target[r];
            }
        }
        frontier = next;
    }

    for (id, node) in nodes.iter_mut().enumerate() {
        if let Node::Leaf { value } = node {
            *value = leaf_value(totals[id].0, totals[id].1);
        }
    }
    RegressionTree { nodes }
}

/// Gradient boosting on squared error against the labels. Starts from the
/// label mean; each tree fits the current residuals and is shrunk by the
/// learning rate.
pub fn train_tree_ensemble(train: &Dataset, config: &TreeConfig) -> Result<TreeEnsemble> {
    if config.n_trees == 0 || config.max_depth == 0 {
        return Err(Error::invalid("n_trees and max_depth must be at least 1"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate <= 1.0) {
        return Err(Error::invalid("learning_rate must lie in (0, 1]"));
    }
    if !(config.subsample > 0.0 && config.subsample <= 1.0) {
        return Err(Error::invalid("subsample must lie in (0, 1]"));
    }
    let x: Vec<&[f64]> = train.docs().map(|d| d.features.as_slice()).collect();
    let y: Vec<f64> = train.docs().map(|d| d.label as f64).collect();
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let m = train.feature_count;
    let sorted: Vec<Vec<usize>> = (0..m)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a][j].total_cmp(&x[b][j]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut residual = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sample_size = ((n as f64 * config.subsample).round() as usize).clamp(1, n);
    let mut trees = Vec::with_capacity(config.n_trees);
    for _ in 0..config.n_trees {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let rows: Vec<usize> = if sample_size == n {
            (0..n).collect()
        } else {
            let mut r = index::sample(&mut rng, n, sample_size).into_vec();
            r.sort_unstable();
            r
        };
        let mut tree = fit_tree(&x, &residual, &rows, &sorted, config);
        for node in &mut tree.nodes {
            if let Node::Leaf { value } = node {
                *value *= config.learning_rate;
            }
        }
        for i in 0..n {
            pred[i] += tree.predict(x[i]);
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble { feature_count: m, base_score, trees })
}
