//! LETOR-format datasets grouped by query.
//!
//! A line looks like `<label> qid:<qid> <fid>:<val> ... # comment`. Feature
//! ids are 1-based on disk and 0-based in memory; ids missing from a line are
//! filled with `0.0`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    /// Position of the document within its query, in file order.
    pub doc_index: usize,
    pub label: u32,
    pub features: Vec<f64>,
    /// Raw text after `#`, if any.
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    pub qid: String,
    pub docs: Vec<DocVector>,
}

impl QueryGroup {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn labels(&self) -> Vec<u32> {
        self.docs.iter().map(|d| d.label).collect()
    }

    pub fn feature_count(&self) -> usize {
        self.docs.first().map_or(0, |d| d.features.len())
    }
}

/// Per-feature statistics over every document of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundStats {
    pub means: Vec<f64>,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub queries: Vec<QueryGroup>,
    pub feature_count: usize,
    pub feature_means: Vec<f64>,
    pub feature_mins: Vec<f64>,
    pub feature_maxs: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset and its background statistics. Every document must
    /// have exactly `feature_count` features.
    pub fn new(queries: Vec<QueryGroup>, feature_count: usize) -> Result<Self> {
        if feature_count == 0 {
            return Err(Error::invalid("feature_count must be at least 1"));
        }
        for q in &queries {
            if q.docs.is_empty() {
                return Err(Error::invalid(format!("query {:?} has no documents", q.qid)));
            }
            for d in &q.docs {
                if d.features.len() != feature_count {
                    return Err(Error::Dimension {
                        expected: feature_count,
                        got: d.features.len(),
                    });
                }
            }
        }
        let stats = background_stats(&queries, feature_count)?;
        Ok(Dataset {
            queries,
            feature_count,
            feature_means: stats.means,
            feature_mins: stats.mins,
            feature_maxs: stats.maxs,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.queries.iter().map(|q| q.docs.len()).sum()
    }

    pub fn docs(&self) -> impl Iterator<Item = &DocVector> {
        self.queries.iter().flat_map(|q| q.docs.iter())
    }

    pub fn stats(&self) -> BackgroundStats {
        BackgroundStats {
            means: self.feature_means.clone(),
            mins: self.feature_mins.clone(),
            maxs: self.feature_maxs.clone(),
        }
    }

    pub fn query(&self, qid: &str) -> Option<&QueryGroup> {
        self.queries.iter().find(|q| q.qid == qid)
    }

    /// Writes the dataset back out as dense LETOR lines.
    pub fn write_letor<W: Write>(&self, mut out: W) -> Result<()> {
        for q in &self.queries {
            for d in &q.docs {
                write!(out, "{} qid:{}", d.label, q.qid)?;
                for (j, v) in d.features.iter().enumerate() {
                    write!(out, " {}:{}", j + 1, v)?;
                }
                if let Some(c) = &d.comment {
                    write!(out, " #{}", c)?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

/// Means, minima and maxima of every feature over all documents.
pub fn background_stats(queries: &[QueryGroup], feature_count: usize) -> Result<BackgroundStats> {
    let mut sums = vec![0.0; feature_count];
    let mut mins = vec![f64::INFINITY; feature_count];
    let mut maxs = vec![f64::NEG_INFINITY; feature_count];
    let mut n = 0usize;
    for d in queries.iter().flat_map(|q| q.docs.iter()) {
        for (j, &v) in d.features.iter().enumerate() {
            sums[j] += v;
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let means = sums
        .into_iter()
        .enumerate()
        // clamp guards the last-ulp case where rounding pushes the mean past an extreme
        .map(|(j, s)| (s / n as f64).clamp(mins[j], maxs[j]))
        .collect();
    Ok(BackgroundStats { means, mins, maxs })
}

struct RawDoc {
    label: u32,
    features: Vec<(usize, f64)>,
    comment: Option<String>,
}

fn parse_line(line: &str, lineno: usize) -> Result<(String, RawDoc)> {
    let err = |message: String| Error::Parse { line: lineno, message };
    let (body, comment) = match line.find('#') {
        Some(pos) => (&line[..pos], Some(line[pos + 1..].to_string())),
        None => (line, None),
    };
    let mut tokens = body.split_whitespace();
    let label_tok = tokens.next().ok_or_else(|| err("missing label".into()))?;
    let label: u32 = label_tok
        .parse::<u32>()
        .or_else(|_| {
            // some LETOR dumps write integral grades as floats ("2.0")
            label_tok
                .parse::<f64>()
                .ok()
                .filter(|v| *v >= 0.0 && v.fract() == 0.0 && *v <= u32::MAX as f64)
                .map(|v| v as u32)
                .ok_or(())
        })
        .map_err(|_| err(format!("invalid label {:?}", label_tok)))?;
    let qid_tok = tokens.next().ok_or_else(|| err("missing qid".into()))?;
    let qid = qid_tok
        .strip_prefix("qid:")
        .filter(|q| !q.is_empty())
        .ok_or_else(|| err(format!("invalid qid token {:?}", qid_tok)))?;
    let mut features = Vec::new();
    for tok in tokens {
        let (fid, val) = tok
            .split_once(':')
            .ok_or_else(|| err(format!("invalid feature token {:?}", tok)))?;
        let fid: usize = fid
            .parse()
            .ok()
            .filter(|&f| f >= 1)
            .ok_or_else(|| err(format!("invalid feature id in {:?}", tok)))?;
        let val: f64 = val
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(format!("invalid feature value in {:?}", tok)))?;
        features.push((fid - 1, val));
    }
    Ok((qid.to_string(), RawDoc { label, features, comment }))
}

/// Parses LETOR text. Documents are grouped by qid in order of first
/// appearance; within a query, file order is kept.
pub fn parse_letor<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<RawDoc>> = HashMap::new();
    let mut max_fid = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (qid, doc) = parse_line(line, i + 1)?;
        if let Some(&(f, _)) = doc.features.iter().max_by_key(|(f, _)| *f) {
            max_fid = max_fid.max(f + 1);
        }
        groups
            .entry(qid.clone())
            .or_insert_with(|| {
                order.push(qid);
                Vec::new()
            })
            .push(doc);
    }
    if order.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if max_fid == 0 {
        return Err(Error::Parse {
            line: 0,
            message: "no feature tokens in input".into(),
        });
    }
    let queries = order
        .into_iter()
        .map(|qid| {
            let raw = groups.remove(&qid).unwrap_or_default();
            let docs = raw
                .into_iter()
                .enumerate()
                .map(|(doc_index, r)| {
                    let mut features = vec![0.0; max_fid];
                    for (f, v) in r.features {
                        features[f] = v;
                    }
                    DocVector {
                        doc_index,
                        label: r.label,
                        features,
                        comment: r.comment,
                    }
                })
                .collect();
            QueryGroup { qid, docs }
        })
        .collect();
    Dataset::new(queries, max_fid)
}

/// Opens a LETOR file, transparently decompressing `.gz` files.
pub fn read_letor_file(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        parse_letor(BufReader::new(GzDecoder::new(file)))
    } else {
        parse_letor(BufReader::new(file))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuerySelector {
    All,
    Qids(Vec<String>),
    Sample { size: usize, seed: u64 },
}

/// Returns the sub-dataset holding the selected queries, in original order.
/// Statistics are recomputed over the selection.
pub fn split_queries(dataset: &Dataset, selector: &QuerySelector) -> Result<Dataset> {
    let picked: Vec<usize> = match selector {
        QuerySelector::All => (0..dataset.queries.len()).collect(),
        QuerySelector::Qids(qids) => {
            let mut idx = qids
                .iter()
                .map(|qid| {
                    dataset
                        .queries
                        .iter()
                        .position(|q| &q.qid == qid)
                        .ok_or_else(|| Error::UnknownQid(qid.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            idx.sort_unstable();
            idx.dedup();
            idx
        }
        QuerySelector::Sample { size, seed } => {
            let n = dataset.queries.len();
            if *size > n {
                return Err(Error::invalid(format!(
                    "cannot sample {} queries from {}",
                    size, n
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut idx = index::sample(&mut rng, n, *size).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    if picked.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let queries = picked.into_iter().map(|i| dataset.queries[i].clone()).collect();
    Dataset::new(queries, dataset.feature_count)
}
