//! Feature-subset explanations for black-box learning-to-rank models.
//!
//! Given a trained ranker and a query, the explainers in this crate pick a
//! small set of features whose masked ranking agrees with the model's full
//! ranking, measured by Kendall's tau (validity). The complement of the
//! selection is scored too (completeness).
//!
//! Modules, bottom-up:
//!
//! * [`data`]: LETOR parsing, query groups, background statistics.
//! * [`rankers`]: the black-box [`Ranker`] trait, feature masking, and three
//!   in-repo rankers plus an external-process adapter.
//! * [`metrics`]: Kendall tau, validity, completeness, NDCG.
//! * [`explain`]: preference matrix and the greedy selection algorithms.
//! * [`baselines`]: random subsets and Kernel SHAP.
//! * [`oracle`]: brute-force optimal subsets and submodularity probing.
//! * [`harness`]: experiment runner, synthetic benchmarks, reports.

pub mod baselines;
pub mod data;
pub mod error;
pub mod explain;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod rankers;

pub use data::{Dataset, DocVector, QueryGroup};
pub use error::{Error, Result};
pub use explain::{EpsilonMode, ExplainConfig, Explanation, Method};
pub use metrics::ExplanationScore;
pub use rankers::{FeatureMask, MaskPolicy, Ranker, Ranking};
