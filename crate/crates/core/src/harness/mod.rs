//! Experiment runner: explain every query of a test split with one or more
//! methods, score the explanations and aggregate them.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{random_subset, shap_topk, ShapConfig, ShapVariant};
use crate::data::{split_queries, Dataset, QueryGroup, QuerySelector};
use crate::error::{Error, Result};
use crate::explain::{explain_with_seeds, EpsilonMode, ExplainConfig, Method};
use crate::metrics::{completeness_against, ndcg_at, validity_against};
use crate::rankers::{
    rank, train_pairwise_logistic, train_pointwise_linear, train_tree_ensemble, ExternalScorer, FeatureMask,
    ModelDump, PairwiseConfig, Ranker, TreeConfig,
};

mod report;
mod synthetic;

pub use report::{sign_test, AggregateReport, ExperimentReport, MethodSummary, QueryReport, SignTest, REPORT_SCHEMA};
pub use synthetic::{generate_synthetic, GeneratorKind, PlantedModel, SyntheticSpec, INTERACTION_STRENGTH};

/// Explanation sizes studied by default in [`effect_of_k`].
pub const DEFAULT_K_VALUES: [usize; 4] = [3, 5, 7, 10];

/// How to obtain the model under explanation.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Linear { l2: f64 },
    Pairwise(PairwiseConfig),
    Gbdt(TreeConfig),
    /// Shell command speaking the line protocol of [`ExternalScorer`].
    External(String),
}

impl ModelSpec {
    /// Trains an in-repo model. External scorers cannot be trained.
    pub fn train(&self, train: &Dataset) -> Result<ModelDump> {
        Ok(match self {
            ModelSpec::Linear { l2 } => ModelDump::Linear(train_pointwise_linear(train, *l2)?),
            ModelSpec::Pairwise(c) => ModelDump::Pairwise(train_pairwise_logistic(train, c)?),
            ModelSpec::Gbdt(c) => ModelDump::Trees(train_tree_ensemble(train, c)?),
            ModelSpec::External(_) => return Err(Error::invalid("external scorers are trained elsewhere")),
        })
    }

    /// A ready-to-query model; in-repo kinds are trained on `train`.
    pub fn build(&self, train: Option<&Dataset>, feature_count: Option<usize>) -> Result<Box<dyn Ranker>> {
        match self {
            ModelSpec::External(cmd) => Ok(Box::new(ExternalScorer::spawn(cmd, feature_count)?)),
            _ => {
                let train = train.ok_or_else(|| Error::invalid("training data is required for in-repo models"))?;
                Ok(self.train(train)?.into_ranker())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    /// `k`, pair sample size, ε mode for greedy-cover-eps, seed restarts and
    /// mask policy. The seed is replaced per query.
    pub explain: ExplainConfig,
    pub shap: ShapConfig,
    pub queries: QuerySelector,
    pub seed: u64,
    /// Record wall time per explanation (makes reports non-reproducible).
    pub timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: vec![Method::GreedyCoverEps],
            explain: ExplainConfig::default(),
            shap: ShapConfig::default(),
            queries: QuerySelector::All,
            seed: 0,
            timings: false,
        }
    }
}

/// Per-query seed derived from the global seed and the qid alone, so the
/// result for one query does not depend on which other queries run.
pub fn query_seed(global: u64, qid: &str) -> u64 {
    // FNV-1a over the qid, then a splitmix64 finaliser with the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in qid.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = h ^ global.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Selected features (0-based) for one query and method.
pub fn explain_query(
    model: &dyn Ranker,
    query: &QueryGroup,
    method: Method,
    explain: &ExplainConfig,
    shap: &ShapConfig,
    background: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<Vec<usize>> {
    let policy = &explain.mask_policy;
    let k = explain.k;
    let shap_with = |variant| {
        let bg = background.ok_or_else(|| Error::invalid("SHAP methods need a background sample"))?;
        let cfg = ShapConfig { seed, ..shap.clone() };
        shap_topk(model, query, k, variant, bg, &cfg, policy)
    };
    let greedy_with = |epsilon| {
        let cfg = ExplainConfig { epsilon, seed, ..explain.clone() };
        Ok(explain_with_seeds(model, query, &cfg)?.selected)
    };
    match method {
        Method::Random => random_subset(query.feature_count(), k, seed),
        Method::Shap1 => shap_with(ShapVariant::Top1),
        Method::Shap5 => shap_with(ShapVariant::Top5),
        Method::Greedy => greedy_with(EpsilonMode::None),
        Method::GreedyCover => greedy_with(EpsilonMode::Zero),
        Method::GreedyCoverEps => greedy_with(match explain.epsilon {
            EpsilonMode::None | EpsilonMode::Zero => EpsilonMode::Mean,
            e => e,
        }),
    }
}

fn run_query(
    model: &dyn Ranker,
    query: &QueryGroup,
    config: &ExperimentConfig,
    background: Option<&[Vec<f64>]>,
) -> Result<Vec<QueryReport>> {
    let m = query.feature_count();
    let policy = &config.explain.mask_policy;
    let seed = query_seed(config.seed, &query.qid);
    let original = rank(model, query, &FeatureMask::full(m), policy)?;
    config
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let selected = explain_query(model, query, method, &config.explain, &config.shap, background, seed)?;
            let elapsed = start.elapsed();
            let mask = FeatureMask::from_indices(m, &selected)?;
            Ok(QueryReport {
                schema: REPORT_SCHEMA,
                qid: query.qid.clone(),
                method,
                validity: validity_against(model, query, &mask, policy, &original)?,
                completeness: completeness_against(model, query, &mask, policy, &original)?,
                size: selected.len(),
                k: config.explain.k,
                selected: selected.into_iter().map(|f| f + 1).collect(),
                wall_ms: config.timings.then_some(elapsed.as_secs_f64() * 1e3),
            })
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Explains the selected queries of `test` with every configured method.
///
/// Queries with fewer than two documents are skipped and listed in the
/// aggregate. Any other failure aborts the run with the qid attached.
pub fn run_experiment(
    model: &dyn Ranker,
    test: &Dataset,
    background: Option<&[Vec<f64>]>,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    if config.methods.is_empty() {
        return Err(Error::invalid("no methods requested"));
    }
    if config.explain.k == 0 || config.explain.k > test.feature_count {
        return Err(Error::invalid(format!(
            "k must be in 1..={}, got {}",
            test.feature_count, config.explain.k
        )));
    }
    let selected = split_queries(test, &config.queries)?;
    let (usable, skipped): (Vec<&QueryGroup>, Vec<&QueryGroup>) =
        selected.queries.iter().partition(|q| q.docs.len() >= 2);
    let per_query: Vec<Result<Vec<QueryReport>>> = usable
        .par_iter()
        .map(|q| run_query(model, q, config, background).map_err(|e| e.in_query(&q.qid)))
        .collect();
    let mut queries = Vec::with_capacity(usable.len() * config.methods.len());
    for r in per_query {
        queries.extend(r?);
    }

    let by_method: Vec<Vec<&QueryReport>> = config
        .methods
        .iter()
        .map(|&m| queries.iter().filter(|r| r.method == m).collect())
        .collect();
    let methods = config
        .methods
        .iter()
        .zip(&by_method)
        .map(|(&method, rs)| MethodSummary {
            method,
            queries: rs.len(),
            mean_validity: mean(rs.iter().map(|r| r.validity)),
            mean_completeness: mean(rs.iter().map(|r| r.completeness)),
            mean_size: mean(rs.iter().map(|r| r.size as f64)),
        })
        .collect();
    let mut sign_tests = Vec::new();
    for i in 0..config.methods.len() {
        for j in i + 1..config.methods.len() {
            let a: Vec<f64> = by_method[i].iter().map(|r| r.validity).collect();
            let b: Vec<f64> = by_method[j].iter().map(|r| r.validity).collect();
            let (wins_a, wins_b, ties, p_value) = sign_test(&a, &b)?;
            sign_tests.push(SignTest {
                a: config.methods[i],
                b: config.methods[j],
                wins_a,
                wins_b,
                ties,
                p_value,
            });
        }
    }
    let aggregate = AggregateReport {
        schema: REPORT_SCHEMA,
        k: config.explain.k,
        methods,
        skipped_queries: skipped.len(),
        skipped_qids: skipped.iter().map(|q| q.qid.clone()).collect(),
        sign_tests,
    };
    Ok(ExperimentReport { queries, aggregate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub method: Method,
    pub k: usize,
    pub queries: usize,
    pub mean_validity: f64,
    pub mean_completeness: f64,
}

/// One experiment per `k` with shared seeds; a long-format table with one
/// row per (method, k).
pub fn effect_of_k(
    model: &dyn Ranker,
    test: &Dataset,
    background: Option<&[Vec<f64>]>,
    config: &ExperimentConfig,
    k_values: &[usize],
) -> Result<Vec<KRow>> {
    if k_values.is_empty() {
        return Err(Error::invalid("no k values given"));
    }
    if k_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("k values must be sorted ascending"));
    }
    let mut rows = Vec::new();
    for &k in k_values {
        let cfg = ExperimentConfig { explain: ExplainConfig { k, ..config.explain.clone() }, ..config.clone() };
        let report = run_experiment(model, test, background, &cfg)?;
        rows.extend(report.aggregate.methods.iter().map(|s| KRow {
            method: s.method,
            k,
            queries: s.queries,
            mean_validity: s.mean_validity,
            mean_completeness: s.mean_completeness,
        }));
    }
    Ok(rows)
}

/// Tab-separated rendering of [`effect_of_k`] rows, with a header.
pub fn k_table(rows: &[KRow]) -> String {
    let mut out = String::from("method\tk\tqueries\tmean_validity\tmean_completeness\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.method, r.k, r.queries, r.mean_validity, r.mean_completeness
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdcgSummary {
    pub mean_ndcg_at_10: f64,
    pub queries: usize,
    /// Queries without any positive label.
    pub skipped: usize,
}

/// Mean NDCG@10 of the unmasked model over queries with a positive label.
pub fn sanity_ndcg(model: &dyn Ranker, test: &Dataset) -> Result<NdcgSummary> {
    let full = FeatureMask::full(test.feature_count);
    let mut values = Vec::new();
    let mut skipped = 0;
    for q in &test.queries {
        let labels = q.labels();
        if labels.iter().all(|&l| l == 0) {
            skipped += 1;
            continue;
        }
        let r = rank(model, q, &full, &crate::rankers::MaskPolicy::Zero).map_err(|e| e.in_query(&q.qid))?;
        values.push(ndcg_at(10, &r, &labels)?);
    }
    Ok(NdcgSummary { mean_ndcg_at_10: mean(values.iter().copied()), queries: values.len(), skipped })
}
