//! Rank correlation and ranking quality.

use serde::{Deserialize, Serialize};

use crate::data::QueryGroup;
use crate::error::{Error, Result};
use crate::rankers::{rank, FeatureMask, MaskPolicy, Ranker, Ranking};

/// Validity and completeness of one explanation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplanationScore {
    pub validity: f64,
    pub completeness: f64,
}

/// Kendall's tau-a between two strict rankings of the same documents,
/// `(concordant − discordant) / (n(n−1)/2)`.
///
/// Discordant pairs are counted as inversions with a merge sort, so this
/// runs in `O(n log n)`.
pub fn kendall_tau(a: &Ranking, b: &Ranking) -> Result<f64> {
    let n = a.len();
    if n != b.len() {
        return Err(Error::invalid(format!(
            "rankings cover different documents ({} vs {})",
            n,
            b.len()
        )));
    }
    if n < 2 {
        return Err(Error::invalid("kendall tau needs at least two documents"));
    }
    // positions in `a` of the documents listed in `b`'s order
    let mut seq: Vec<usize> = b.order.iter().map(|&d| a.position(d)).collect();
    let mut buf = vec![0usize; n];
    let discordant = count_inversions(&mut seq, &mut buf);
    let total = (n * (n - 1) / 2) as f64;
    Ok((total - 2.0 * discordant as f64) / total)
}

fn count_inversions(v: &mut [usize], buf: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        count_inversions(l, bl) + count_inversions(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + (n - j)].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

fn require_pairs(query: &QueryGroup) -> Result<()> {
    if query.docs.len() < 2 {
        return Err(Error::invalid(format!(
            "query {:?} has fewer than two documents",
            query.qid
        )));
    }
    Ok(())
}

/// Tau between the ranking on `mask` alone and the full-feature ranking.
pub fn validity(model: &dyn Ranker, query: &QueryGroup, mask: &FeatureMask, policy: &MaskPolicy) -> Result<f64> {
    require_pairs(query)?;
    let original = rank(model, query, &FeatureMask::full(mask.universe_size()), policy)?;
    validity_against(model, query, mask, policy, &original)
}

/// Negated tau between the ranking on the complement of `mask` and the
/// full-feature ranking.
pub fn completeness(
    model: &dyn Ranker,
    query: &QueryGroup,
    mask: &FeatureMask,
    policy: &MaskPolicy,
) -> Result<f64> {
    require_pairs(query)?;
    let original = rank(model, query, &FeatureMask::full(mask.universe_size()), policy)?;
    completeness_against(model, query, mask, policy, &original)
}

/// [`validity`] with a precomputed original ranking.
pub fn validity_against(
    model: &dyn Ranker,
    query: &QueryGroup,
    mask: &FeatureMask,
    policy: &MaskPolicy,
    original: &Ranking,
) -> Result<f64> {
    kendall_tau(&rank(model, query, mask, policy)?, original)
}

pub fn completeness_against(
    model: &dyn Ranker,
    query: &QueryGroup,
    mask: &FeatureMask,
    policy: &MaskPolicy,
    original: &Ranking,
) -> Result<f64> {
    Ok(-kendall_tau(&rank(model, query, &mask.complement(), policy)?, original)?)
}

pub fn explanation_score(
    model: &dyn Ranker,
    query: &QueryGroup,
    mask: &FeatureMask,
    policy: &MaskPolicy,
) -> Result<ExplanationScore> {
    require_pairs(query)?;
    let original = rank(model, query, &FeatureMask::full(mask.universe_size()), policy)?;
    Ok(ExplanationScore {
        validity: validity_against(model, query, mask, policy, &original)?,
        completeness: completeness_against(model, query, mask, policy, &original)?,
    })
}

/// NDCG@k with gain `2^label − 1` and `log2(rank + 2)` discount. Returns 0
/// when the ideal DCG is 0.
pub fn ndcg_at(k: usize, ranking: &Ranking, labels: &[u32]) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("ndcg cutoff must be positive"));
    }
    if labels.len() != ranking.len() {
        return Err(Error::Dimension { expected: ranking.len(), got: labels.len() });
    }
    let gain = |l: u32| 2f64.powi(l as i32) - 1.0;
    let dcg: f64 = ranking
        .order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &d)| gain(labels[d]) / (i as f64 + 2.0).log2())
        .sum();
    let mut ideal: Vec<u32> = labels.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &l)| gain(l) / (i as f64 + 2.0).log2())
        .sum();
    if idcg == 0.0 {
        Ok(0.0)
    } else {
        Ok(dcg / idcg)
    }
}
