//! Greedy selection of explanation features.
//!
//! The explainers work on a sample `P` of concordant document pairs taken
//! from the model's full ranking. For each candidate feature `f` the
//! preference matrix holds the propensity
//!
//! ```text
//! z[f][p] = (s(upper | F' ∪ {f}) − s(lower | F' ∪ {f})) · w_p
//! ```
//!
//! where `s(· | A)` is the model score with every feature outside `A` masked
//! and `w_p` is the rank gap of the pair. A positive cell means the pair stays
//! concordant when `f` joins the explanation. A feature's utility is the sum
//! of its row.
//!
//! * GREEDY adds the highest-utility feature each round and stops once the
//!   best utility no longer exceeds the previous round's.
//! * GREEDY-COVER additionally drops ("covers") every pair whose propensity
//!   under the chosen feature exceeds a threshold `ε`, so later rounds only
//!   score the pairs that are still unexplained. `ε = 0` covers exactly the
//!   pairs that became concordant; the `Mean` mode uses the mean positive
//!   propensity of the chosen row, leaving low-margin pairs in play.
//!
//! Every run can be restarted from several seed features (the best few
//! first-round candidates); the run with the highest validity wins.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::QueryGroup;
use crate::error::{Error, Result};
use crate::metrics::{completeness_against, validity_against};
use crate::rankers::{masked_query_scores, rank, FeatureMask, MaskPolicy, Ranker, Ranking};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Random,
    Shap1,
    Shap5,
    Greedy,
    GreedyCover,
    GreedyCoverEps,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Random,
        Method::Shap1,
        Method::Shap5,
        Method::Greedy,
        Method::GreedyCover,
        Method::GreedyCoverEps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Shap1 => "shap1",
            Method::Shap5 => "shap5",
            Method::Greedy => "greedy",
            Method::GreedyCover => "greedy-cover",
            Method::GreedyCoverEps => "greedy-cover-eps",
        }
    }

    pub fn is_greedy(self) -> bool {
        matches!(self, Method::Greedy | Method::GreedyCover | Method::GreedyCoverEps)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {:?}", s)))
    }
}

/// How the coverage threshold is chosen after each selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonMode {
    /// No coverage (GREEDY).
    None,
    /// `ε = 0` (GREEDY-COVER).
    Zero,
    /// Mean of the positive propensities of the chosen row (GREEDY-COVER-ε).
    Mean,
    Fixed(f64),
}

impl EpsilonMode {
    pub fn method(self) -> Method {
        match self {
            EpsilonMode::None => Method::Greedy,
            EpsilonMode::Zero => Method::GreedyCover,
            EpsilonMode::Mean | EpsilonMode::Fixed(_) => Method::GreedyCoverEps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainConfig {
    pub k: usize,
    pub pair_sample_size: usize,
    pub epsilon: EpsilonMode,
    pub seed: u64,
    pub n_seeds: usize,
    pub mask_policy: MaskPolicy,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            k: 5,
            pair_sample_size: 50,
            epsilon: EpsilonMode::Mean,
            seed: 0,
            n_seeds: 3,
            mask_policy: MaskPolicy::Zero,
        }
    }
}

impl ExplainConfig {
    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.pair_sample_size == 0 {
            return Err(Error::invalid("pair sample size must be at least 1"));
        }
        if self.n_seeds == 0 {
            return Err(Error::invalid("n_seeds must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcordantPair {
    /// Document ranked higher in the original ranking.
    pub upper: usize,
    pub lower: usize,
    /// Rank gap, `rank(lower) − rank(upper)`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<ConcordantPair>,
    pub covered: Vec<bool>,
}

impl PairSet {
    pub fn new(pairs: Vec<ConcordantPair>) -> Self {
        let covered = vec![false; pairs.len()];
        PairSet { pairs, covered }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn uncovered(&self) -> Vec<usize> {
        (0..self.pairs.len()).filter(|&i| !self.covered[i]).collect()
    }

    pub fn uncovered_count(&self) -> usize {
        self.covered.iter().filter(|c| !**c).count()
    }
}

/// Samples concordant pairs of `pi` uniformly without replacement; all pairs
/// when there are at most `sample_size`. Pairs come back ordered by the rank
/// of their upper then lower document.
pub fn sample_pairs(pi: &Ranking, sample_size: usize, seed: u64) -> PairSet {
    let n = pi.len();
    let total = n * n.saturating_sub(1) / 2;
    let make = |a: usize, b: usize| ConcordantPair {
        upper: pi.order[a],
        lower: pi.order[b],
        weight: (b - a) as f64,
    };
    if total <= sample_size {
        let pairs = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).map(|(a, b)| make(a, b)).collect();
        return PairSet::new(pairs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, total, sample_size).into_vec();
    picked.sort_unstable();
    // walk rows (upper rank a holds n-1-a pairs) alongside the sorted ids
    let mut pairs = Vec::with_capacity(sample_size);
    let mut row_start = 0;
    let mut a = 0;
    for t in picked {
        while t >= row_start + (n - 1 - a) {
            row_start += n - 1 - a;
            a += 1;
        }
        pairs.push(make(a, a + 1 + (t - row_start)));
    }
    PairSet::new(pairs)
}

fn pair_margin(scores: &[f64], p: &ConcordantPair) -> f64 {
    (scores[p.upper] - scores[p.lower]) * p.weight
}

/// `z` for one pair when `f` is added to `selected`.
pub fn propensity(
    model: &dyn Ranker,
    query: &QueryGroup,
    selected: &FeatureMask,
    f: usize,
    pair: &ConcordantPair,
    policy: &MaskPolicy,
) -> Result<f64> {
    check_candidate(selected, f)?;
    let scores = masked_query_scores(model, query, &selected.with(f), policy)?;
    Ok(pair_margin(&scores, pair))
}

/// Sum of propensities of `f` over the uncovered pairs.
pub fn utility(
    model: &dyn Ranker,
    query: &QueryGroup,
    selected: &FeatureMask,
    f: usize,
    pairs: &PairSet,
    policy: &MaskPolicy,
) -> Result<f64> {
    check_candidate(selected, f)?;
    let scores = masked_query_scores(model, query, &selected.with(f), policy)?;
    Ok(pairs
        .uncovered()
        .into_iter()
        .map(|i| pair_margin(&scores, &pairs.pairs[i]))
        .sum())
}

fn check_candidate(selected: &FeatureMask, f: usize) -> Result<()> {
    if f >= selected.universe_size() {
        return Err(Error::invalid(format!("feature {} outside universe", f)));
    }
    if selected.contains(f) {
        return Err(Error::invalid(format!("feature {} is already selected", f)));
    }
    Ok(())
}

/// Coverage threshold for the chosen feature's row.
pub fn epsilon_threshold(row: &[f64], mode: EpsilonMode) -> f64 {
    match mode {
        EpsilonMode::None | EpsilonMode::Zero => 0.0,
        EpsilonMode::Fixed(v) => v,
        EpsilonMode::Mean => {
            let (sum, n) = row
                .iter()
                .filter(|z| **z > 0.0)
                .fold((0.0, 0usize), |(s, n), z| (s + z, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        }
    }
}

/// Propensities of every unselected feature over the uncovered pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    /// Candidate feature ids, ascending.
    pub features: Vec<usize>,
    /// Indices into the pair set.
    pub columns: Vec<usize>,
    pub cells: Vec<Vec<f64>>,
}

impl PreferenceMatrix {
    pub fn build(
        model: &dyn Ranker,
        query: &QueryGroup,
        selected: &FeatureMask,
        pairs: &PairSet,
        policy: &MaskPolicy,
    ) -> Result<Self> {
        let features: Vec<usize> = (0..selected.universe_size()).filter(|&f| !selected.contains(f)).collect();
        let columns = pairs.uncovered();
        // rows are independent; collect() keeps them in feature order
        let cells = features
            .par_iter()
            .map(|&f| {
                let scores = masked_query_scores(model, query, &selected.with(f), policy)?;
                Ok(columns.iter().map(|&c| pair_margin(&scores, &pairs.pairs[c])).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(PreferenceMatrix { features, columns, cells })
    }

    pub fn utilities(&self) -> Vec<f64> {
        self.cells.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn row(&self, f: usize) -> Option<&[f64]> {
        self.features.iter().position(|&g| g == f).map(|i| self.cells[i].as_slice())
    }

    /// Highest-utility feature; ties go to the lowest id.
    pub fn best(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (&f, u) in self.features.iter().zip(self.utilities()) {
            if best.is_none_or(|(_, bu)| u > bu) {
                best = Some((f, u));
            }
        }
        best
    }

    /// Candidates sorted by descending utility, ties by ascending id.
    pub fn ranked(&self) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self.features.iter().copied().zip(self.utilities()).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

/// One restart of the selection loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed_feature: usize,
    pub selected: Vec<usize>,
    pub step_utilities: Vec<f64>,
    /// Uncovered pairs after each step (constant for GREEDY).
    pub uncovered_after: Vec<usize>,
    pub validity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Selected feature ids (0-based) in selection order.
    pub selected: Vec<usize>,
    pub step_utilities: Vec<f64>,
    pub method: Method,
    pub k_requested: usize,
    pub validity: f64,
    pub completeness: f64,
    /// Per-seed restarts for the greedy methods, in seed order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seed_runs: Vec<SeedRun>,
}

impl Explanation {
    /// Scores a fixed selection against the model's full ranking.
    pub fn from_selection(
        model: &dyn Ranker,
        query: &QueryGroup,
        selected: Vec<usize>,
        method: Method,
        k_requested: usize,
        policy: &MaskPolicy,
    ) -> Result<Self> {
        let m = query.feature_count();
        let original = rank(model, query, &FeatureMask::full(m), policy)?;
        let mask = FeatureMask::from_indices(m, &selected)?;
        Ok(Explanation {
            validity: validity_against(model, query, &mask, policy, &original)?,
            completeness: completeness_against(model, query, &mask, policy, &original)?,
            selected,
            step_utilities: Vec::new(),
            method,
            k_requested,
            seed_runs: Vec::new(),
        })
    }
}

struct Selection {
    selected: Vec<usize>,
    step_utilities: Vec<f64>,
    uncovered_after: Vec<usize>,
}

/// The selection loop, optionally forcing the first feature. `first` is the
/// round-one matrix over all pairs, shared between restarts.
fn select(
    model: &dyn Ranker,
    query: &QueryGroup,
    config: &ExplainConfig,
    pairs: &PairSet,
    first: &PreferenceMatrix,
    forced: Option<usize>,
) -> Result<Selection> {
    let m = query.feature_count();
    let cover = config.epsilon != EpsilonMode::None;
    let mut pairs = pairs.clone();
    let mut mask = FeatureMask::empty(m);
    let mut out = Selection {
        selected: Vec::new(),
        step_utilities: Vec::new(),
        uncovered_after: Vec::new(),
    };
    let mut previous = f64::NEG_INFINITY;
    for step in 0..config.k {
        if cover && pairs.uncovered_count() == 0 {
            break;
        }
        let rebuilt;
        let matrix = if step == 0 {
            first
        } else {
            rebuilt = PreferenceMatrix::build(model, query, &mask, &pairs, &config.mask_policy)?;
            &rebuilt
        };
        let choice = match (step, forced) {
            (0, Some(f)) => {
                let u = matrix
                    .row(f)
                    .ok_or_else(|| Error::invalid(format!("seed feature {} is not a candidate", f)))?
                    .iter()
                    .sum();
                Some((f, u))
            }
            _ => matrix.best(),
        };
        let Some((f, u)) = choice else { break };
        if !cover && step > 0 && !(u > previous) {
            break;
        }
        if cover {
            let row = matrix.row(f).expect("chosen feature has a row");
            let eps = epsilon_threshold(row, config.epsilon);
            for (&col, &z) in matrix.columns.iter().zip(row) {
                if z > eps {
                    pairs.covered[col] = true;
                }
            }
        }
        mask.insert(f);
        out.selected.push(f);
        out.step_utilities.push(u);
        out.uncovered_after.push(pairs.uncovered_count());
        previous = u;
    }
    Ok(out)
}

/// Seed features: the top `n_seeds` first-round candidates with positive
/// utility, or the single best candidate when none is positive.
fn seed_features(first: &PreferenceMatrix, n_seeds: usize) -> Vec<usize> {
    let ranked = first.ranked();
    let positive: Vec<usize> = ranked.iter().filter(|(_, u)| *u > 0.0).take(n_seeds).map(|(f, _)| *f).collect();
    if positive.is_empty() {
        ranked.first().map(|(f, _)| vec![*f]).unwrap_or_default()
    } else {
        positive
    }
}

/// Runs the configured greedy algorithm from each seed feature and keeps the
/// run with the highest validity (ties: fewer features, then seed order).
pub fn explain_with_seeds(model: &dyn Ranker, query: &QueryGroup, config: &ExplainConfig) -> Result<Explanation> {
    config.validate()?;
    if query.docs.len() < 2 {
        return Err(Error::invalid(format!(
            "query {:?} has fewer than two documents",
            query.qid
        )));
    }
    let m = query.feature_count();
    let policy = &config.mask_policy;
    let original = rank(model, query, &FeatureMask::full(m), policy)?;
    let pairs = sample_pairs(&original, config.pair_sample_size, config.seed);
    let first = PreferenceMatrix::build(model, query, &FeatureMask::empty(m), &pairs, policy)?;

    let mut runs = Vec::new();
    for seed_feature in seed_features(&first, config.n_seeds) {
        let sel = select(model, query, config, &pairs, &first, Some(seed_feature))?;
        let mask = FeatureMask::from_indices(m, &sel.selected)?;
        let validity = validity_against(model, query, &mask, policy, &original)?;
        runs.push(SeedRun {
            seed_feature,
            selected: sel.selected,
            step_utilities: sel.step_utilities,
            uncovered_after: sel.uncovered_after,
            validity,
        });
    }
    let mut winner = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        let w = &runs[winner];
        if r.validity > w.validity || (r.validity == w.validity && r.selected.len() < w.selected.len()) {
            winner = i;
        }
    }
    let best = runs[winner].clone();
    let mask = FeatureMask::from_indices(m, &best.selected)?;
    Ok(Explanation {
        completeness: completeness_against(model, query, &mask, policy, &original)?,
        validity: best.validity,
        selected: best.selected,
        step_utilities: best.step_utilities,
        method: config.epsilon.method(),
        k_requested: config.k,
        seed_runs: runs,
    })
}

/// GREEDY: no pair coverage, early stop when utility stops increasing.
pub fn explain_greedy(model: &dyn Ranker, query: &QueryGroup, config: &ExplainConfig) -> Result<Explanation> {
    let config = ExplainConfig { epsilon: EpsilonMode::None, ..config.clone() };
    explain_with_seeds(model, query, &config)
}

/// GREEDY-COVER / GREEDY-COVER-ε, depending on `config.epsilon`.
pub fn explain_greedy_cover(model: &dyn Ranker, query: &QueryGroup, config: &ExplainConfig) -> Result<Explanation> {
    if config.epsilon == EpsilonMode::None {
        return Err(Error::invalid("greedy-cover needs an epsilon mode other than none"));
    }
    explain_with_seeds(model, query, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DocVector;
    use crate::rankers::{LinearModel, ModelKind};
    use rand::Rng;

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
        query((0..n).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect())
    }

    fn cfg(k: usize, epsilon: EpsilonMode, n_seeds: usize) -> ExplainConfig {
        ExplainConfig { k, pair_sample_size: 1000, epsilon, seed: 1, n_seeds, mask_policy: MaskPolicy::Zero }
    }

    #[test]
    fn small_lists_use_every_pair() {
        let pi = Ranking::from_order(vec![2, 0, 1]).unwrap();
        let ps = sample_pairs(&pi, 10, 0);
        let got: Vec<(usize, usize, f64)> = ps.pairs.iter().map(|p| (p.upper, p.lower, p.weight)).collect();
        assert_eq!(got, vec![(2, 0, 1.0), (2, 1, 2.0), (0, 1, 1.0)]);
        let pi = Ranking::from_order((0..10).collect()).unwrap();
        assert_eq!(sample_pairs(&pi, 45, 0).len(), 45);
    }

    #[test]
    fn sampled_pairs_are_concordant_and_distinct() {
        let pi = Ranking::from_order((0..30).rev().collect()).unwrap();
        let ps = sample_pairs(&pi, 100, 7);
        assert_eq!(ps.len(), 100);
        let mut seen = std::collections::HashSet::new();
        for p in &ps.pairs {
            assert!(pi.position(p.upper) < pi.position(p.lower));
            assert_eq!(p.weight, (pi.position(p.lower) - pi.position(p.upper)) as f64);
            assert!(seen.insert((p.upper, p.lower)));
        }
        assert_eq!(ps, sample_pairs(&pi, 100, 7));
    }

    #[test]
    fn pair_sampling_is_uniform() {
        // 1225 pairs, 100 per draw: inclusion probability 100/1225.
        let pi = Ranking::from_order((0..50).collect()).unwrap();
        let draws = 10_000;
        let mut counts = vec![vec![0u32; 50]; 50];
        for s in 0..draws {
            for p in sample_pairs(&pi, 100, s).pairs {
                counts[p.upper][p.lower] += 1;
            }
        }
        let p = 100.0 / 1225.0;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        let mut outside3 = 0;
        for a in 0..50 {
            for b in a + 1..50 {
                let dev = (counts[a][b] as f64 - mean).abs();
                assert!(dev < 5.0 * sd, "pair ({},{}) count {}", a, b, counts[a][b]);
                if dev > 3.0 * sd {
                    outside3 += 1;
                }
            }
        }
        // ~0.27% of 1225 pairs are expected beyond 3σ by chance alone
        assert!(outside3 <= 12, "{} pairs beyond 3σ", outside3);
    }

    #[test]
    fn propensity_examples() {
        let model = LinearModel::new(vec![1.0], 0.0);
        let q = query(vec![vec![0.9], vec![0.1]]);
        let pair = ConcordantPair { upper: 0, lower: 1, weight: 1.0 };
        let z = propensity(&model, &q, &FeatureMask::empty(1), 0, &pair, &MaskPolicy::Zero).unwrap();
        assert!((z - 0.8).abs() < 1e-15);

        let model = LinearModel::new(vec![1.0, 0.0], 0.0);
        let q = query(vec![vec![0.9, 0.4], vec![0.1, 0.8]]);
        let z = propensity(&model, &q, &FeatureMask::empty(2), 1, &pair, &MaskPolicy::Zero).unwrap();
        assert_eq!(z, 0.0);
        assert!(propensity(&model, &q, &FeatureMask::full(2), 1, &pair, &MaskPolicy::Zero).is_err());
    }

    #[test]
    fn utility_examples() {
        let model = LinearModel::new(vec![1.0], 0.0);
        let q = query(vec![vec![0.9], vec![0.1]]);
        let one = PairSet::new(vec![ConcordantPair { upper: 0, lower: 1, weight: 1.0 }]);
        let u = utility(&model, &q, &FeatureMask::empty(1), 0, &one, &MaskPolicy::Zero).unwrap();
        assert!((u - 0.8).abs() < 1e-15);
        let mut all_covered = one.clone();
        all_covered.covered[0] = true;
        assert_eq!(utility(&model, &q, &FeatureMask::empty(1), 0, &all_covered, &MaskPolicy::Zero).unwrap(), 0.0);

        // three pairs by hand: w = [2, -1], F' = {1}, f = 0
        let model = LinearModel::new(vec![2.0, -1.0], 0.0);
        let q = query(vec![vec![0.7, 0.2], vec![0.4, 0.1], vec![0.1, 0.5]]);
        // full scores: 1.2, 0.7, -0.3 → π = [0, 1, 2]
        let ps = PairSet::new(vec![
            ConcordantPair { upper: 0, lower: 1, weight: 1.0 },
            ConcordantPair { upper: 0, lower: 2, weight: 2.0 },
            ConcordantPair { upper: 1, lower: 2, weight: 1.0 },
        ]);
        let sel = FeatureMask::from_indices(2, &[1]).unwrap();
        let z01 = (1.2 - 0.7) * 1.0;
        let z02 = (1.2 - -0.3) * 2.0;
        let z12 = (0.7 - -0.3) * 1.0;
        let u = utility(&model, &q, &sel, 0, &ps, &MaskPolicy::Zero).unwrap();
        assert!((u - (z01 + z02 + z12)).abs() < 1e-12);
    }

    #[test]
    fn epsilon_examples() {
        assert!((epsilon_threshold(&[0.2, 0.4], EpsilonMode::Mean) - 0.3).abs() < 1e-15);
        assert!((epsilon_threshold(&[0.2, -5.0, 0.4, 0.0], EpsilonMode::Mean) - 0.3).abs() < 1e-15);
        assert_eq!(epsilon_threshold(&[-0.2, 0.0], EpsilonMode::Mean), 0.0);
        assert_eq!(epsilon_threshold(&[0.2, 0.4], EpsilonMode::Zero), 0.0);
        assert_eq!(epsilon_threshold(&[0.2, 0.4], EpsilonMode::Fixed(0.25)), 0.25);
    }

    #[test]
    fn greedy_stops_when_utility_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = LinearModel::new(vec![0.0, 0.0, 0.0, 1.5, 0.0], 0.0);
        let q = random_query(&mut rng, 8, 5);
        let e = explain_greedy(&model, &q, &cfg(2, EpsilonMode::None, 1)).unwrap();
        assert_eq!(e.selected, vec![3]);
        assert_eq!(e.validity, 1.0);
        assert_eq!(e.method, Method::Greedy);
    }

    #[test]
    fn k1_matches_utility_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let w: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let model = LinearModel::new(w.clone(), 0.0);
            let q = random_query(&mut rng, 7, 6);
            // oracle: single-feature utility written out directly from the
            // linear weights (zero masking leaves only w_f·x_f)
            let full: Vec<f64> = q.docs.iter().map(|d| w.iter().zip(&d.features).map(|(a, b)| a * b).sum()).collect();
            let pi = Ranking::from_scores(full);
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for f in 0..6 {
                let mut u = 0.0;
                for a in 0..7 {
                    for b in a + 1..7 {
                        let (du, dl) = (pi.order[a], pi.order[b]);
                        u += w[f] * (q.docs[du].features[f] - q.docs[dl].features[f]) * (b - a) as f64;
                    }
                }
                if u > best.1 {
                    best = (f, u);
                }
            }
            for eps in [EpsilonMode::None, EpsilonMode::Zero, EpsilonMode::Mean] {
                let e = explain_with_seeds(&model, &q, &cfg(1, eps, 1)).unwrap();
                assert_eq!(e.selected, vec![best.0]);
                assert!((e.step_utilities[0] - best.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn greedy_on_duplicate_columns_stays_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = LinearModel::new(vec![1.0, 1.0, 0.0], 0.0);
        let mut q = random_query(&mut rng, 6, 3);
        for d in &mut q.docs {
            d.features[1] = d.features[0];
        }
        let e = explain_greedy(&model, &q, &cfg(2, EpsilonMode::None, 1)).unwrap();
        assert_eq!(e.selected, vec![0, 1]);
        assert_eq!(e.validity, 1.0);
    }

    #[test]
    fn cover_recovers_planted_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut w = vec![0.0; 10];
        w[2] = 1.0;
        w[5] = 0.7;
        w[7] = 0.4;
        let model = LinearModel::new(w, 0.0);
        for _ in 0..5 {
            let q = random_query(&mut rng, 10, 10);
            let e = explain_greedy_cover(&model, &q, &cfg(3, EpsilonMode::Zero, 3)).unwrap();
            let mut s = e.selected.clone();
            s.sort_unstable();
            assert_eq!(s, vec![2, 5, 7]);
            assert_eq!(e.validity, 1.0);
        }
    }

    #[test]
    fn single_feature_covers_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = LinearModel::new(vec![0.0, 2.0, 0.0, 0.0], 0.0);
        let q = random_query(&mut rng, 6, 4);
        let e = explain_greedy_cover(&model, &q, &cfg(5, EpsilonMode::Zero, 1)).unwrap();
        assert_eq!(e.selected, vec![1]);
        assert_eq!(e.seed_runs[0].uncovered_after, vec![0]);
    }

    #[test]
    fn mean_threshold_keeps_low_margin_pairs() {
        // features 0 and 1 are duplicates; the model weighs them 1 and 0.5.
        // Feature 2 also follows the full ranking, feature 3 is constant.
        let x0 = [0.9, 0.8, 0.5, 0.45, 0.1];
        let x2 = [0.9, 0.5, 0.45, 0.1, 0.05];
        let q = query((0..5).map(|i| vec![x0[i], x0[i], x2[i], 0.3]).collect());
        let model = LinearModel::new(vec![1.0, 0.5, 0.7, 0.0], 0.0);

        // round one utilities (all 10 pairs, rank-gap weights):
        // f0: 9.75, f1: 4.875, f2: 0.7 * 10.5 = 7.35, f3: 0 → f0.
        let zero = explain_greedy_cover(&model, &q, &cfg(2, EpsilonMode::Zero, 1)).unwrap();
        assert!((zero.step_utilities[0] - 9.75).abs() < 1e-12);
        // every f0 margin is positive, so ε = 0 covers all pairs at once
        assert_eq!(zero.selected, vec![0]);
        assert_eq!(zero.seed_runs[0].uncovered_after, vec![0]);

        // ε = 9.75 / 10 leaves the seven pairs with f0 margin ≤ 0.975. On
        // them the duplicate adds 0.5 * 3.1 = 1.55, feature 2 adds
        // 0.7 * 3.35 = 2.345, so the second pick avoids the duplicate.
        let mean = explain_greedy_cover(&model, &q, &cfg(2, EpsilonMode::Mean, 1)).unwrap();
        assert_eq!(mean.seed_runs[0].uncovered_after[0], 7);
        assert_eq!(mean.selected, vec![0, 2]);
    }

    #[test]
    fn one_seed_equals_plain_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let model = LinearModel::new(w, 0.0);
        let q = random_query(&mut rng, 12, 8);
        let config = cfg(4, EpsilonMode::Mean, 1);
        let pi = rank(&model, &q, &FeatureMask::full(8), &MaskPolicy::Zero).unwrap();
        let pairs = sample_pairs(&pi, config.pair_sample_size, config.seed);
        let first = PreferenceMatrix::build(&model, &q, &FeatureMask::empty(8), &pairs, &MaskPolicy::Zero).unwrap();
        let plain = select(&model, &q, &config, &pairs, &first, None).unwrap();
        let seeded = explain_with_seeds(&model, &q, &config).unwrap();
        assert_eq!(plain.selected, seeded.selected);
        assert_eq!(seeded.seed_runs.len(), 1);
    }

    /// Scores with an interaction: only features 1 and 2 together carry
    /// most of the signal.
    struct Interaction;

    impl Ranker for Interaction {
        fn kind(&self) -> ModelKind {
            ModelKind::External
        }
        fn feature_count(&self) -> Option<usize> {
            Some(3)
        }
        fn score(&self, x: &[f64]) -> Result<f64> {
            Ok(0.3 * x[0] + 0.2 * x[1] + 0.2 * x[2] + 4.0 * x[1] * x[2])
        }
    }

    #[test]
    fn seeds_escape_a_first_step_trap() {
        let q = query(vec![
            vec![0.65, 0.65, 0.0],
            vec![0.85, 0.55, 0.45],
            vec![0.1, 0.25, 0.65],
            vec![0.9, 0.8, 0.45],
            vec![0.8, 0.4, 0.55],
        ]);
        let model = Interaction;
        let trap = explain_greedy(&model, &q, &cfg(2, EpsilonMode::None, 1)).unwrap();
        let seeded = explain_greedy(&model, &q, &cfg(2, EpsilonMode::None, 3)).unwrap();
        // brute force over all 2-subsets
        let mut best = f64::NEG_INFINITY;
        for a in 0..3 {
            for b in a + 1..3 {
                let v = crate::metrics::validity(
                    &model,
                    &q,
                    &FeatureMask::from_indices(3, &[a, b]).unwrap(),
                    &MaskPolicy::Zero,
                )
                .unwrap();
                best = best.max(v);
            }
        }
        assert_eq!(trap.selected[0], 0);
        assert!(trap.validity < best);
        assert_eq!(seeded.validity, best);
        assert_eq!(best, 1.0);
        let mut s = seeded.selected.clone();
        s.sort_unstable();
        assert_eq!(s, vec![1, 2]);
    }

    #[test]
    fn seeds_limited_to_positive_candidates() {
        let model = LinearModel::new(vec![1.0, 0.0, 0.0, 0.0], 0.0);
        let q = query(vec![vec![0.9, 0.1, 0.2, 0.3], vec![0.1, 0.2, 0.3, 0.4], vec![0.5, 0.1, 0.1, 0.1]]);
        let e = explain_greedy(&model, &q, &cfg(3, EpsilonMode::None, 3)).unwrap();
        assert_eq!(e.seed_runs.len(), 1);
    }

    #[test]
    fn prefix_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..5 {
            let w: Vec<f64> = (0..12).map(|_| rng.random::<f64>() - 0.3).collect();
            let model = LinearModel::new(w, 0.0);
            let q = random_query(&mut rng, 15, 12);
            for eps in [EpsilonMode::None, EpsilonMode::Zero, EpsilonMode::Mean] {
                let mut c = cfg(5, eps, 3);
                c.pair_sample_size = 40;
                let short = explain_with_seeds(&model, &q, &c).unwrap();
                c.k = 10;
                let long = explain_with_seeds(&model, &q, &c).unwrap();
                assert_eq!(short.seed_runs.len(), long.seed_runs.len());
                for (s, l) in short.seed_runs.iter().zip(&long.seed_runs) {
                    assert_eq!(s.selected[..], l.selected[..s.selected.len()]);
                }
            }
        }
    }

    #[test]
    fn coverage_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let w: Vec<f64> = (0..10).map(|_| rng.random::<f64>() - 0.5).collect();
        let model = LinearModel::new(w, 0.0);
        let q = random_query(&mut rng, 20, 10);
        for eps in [EpsilonMode::Zero, EpsilonMode::Mean] {
            let e = explain_with_seeds(&model, &q, &cfg(8, eps, 3)).unwrap();
            for r in &e.seed_runs {
                assert!(r.uncovered_after.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }

    #[test]
    fn sign_law_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
        let model = LinearModel::new(w, 0.0);
        let q = random_query(&mut rng, 9, 5);
        let pi = rank(&model, &q, &FeatureMask::full(5), &MaskPolicy::Zero).unwrap();
        let pairs = sample_pairs(&pi, 20, 0);
        let sel = FeatureMask::from_indices(5, &[1]).unwrap();
        let mx = PreferenceMatrix::build(&model, &q, &sel, &pairs, &MaskPolicy::Zero).unwrap();
        for (fi, &f) in mx.features.iter().enumerate() {
            let scores = masked_query_scores(&model, &q, &sel.with(f), &MaskPolicy::Zero).unwrap();
            for (ci, &c) in mx.columns.iter().enumerate() {
                let p = pairs.pairs[c];
                assert_eq!(mx.cells[fi][ci] > 0.0, scores[p.upper] > scores[p.lower]);
            }
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let w: Vec<f64> = (0..9).map(|_| rng.random::<f64>()).collect();
        let model = LinearModel::new(w, 0.0);
        let q = random_query(&mut rng, 30, 9);
        let mut c = cfg(5, EpsilonMode::Mean, 3);
        c.pair_sample_size = 50;
        assert_eq!(explain_with_seeds(&model, &q, &c).unwrap(), explain_with_seeds(&model, &q, &c).unwrap());
    }

    #[test]
    fn invalid_inputs() {
        let model = LinearModel::new(vec![1.0], 0.0);
        let q = query(vec![vec![0.5]]);
        assert!(explain_with_seeds(&model, &q, &cfg(1, EpsilonMode::Zero, 1)).is_err());
        let q = query(vec![vec![0.5], vec![0.1]]);
        assert!(explain_with_seeds(&model, &q, &cfg(0, EpsilonMode::Zero, 1)).is_err());
        assert!(explain_greedy_cover(&model, &q, &cfg(1, EpsilonMode::None, 1)).is_err());
    }
}
