//! JSON Lines reports and the paired sign test.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::explain::Method;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub schema: u32,
    pub qid: String,
    pub method: Method,
    /// Feature ids, 1-based as in LETOR files, in selection order.
    pub selected: Vec<usize>,
    pub validity: f64,
    pub completeness: f64,
    pub size: usize,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub queries: usize,
    pub mean_validity: f64,
    pub mean_completeness: f64,
    pub mean_size: f64,
}

/// Two-sided paired sign test on per-query validity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub a: Method,
    pub b: Method,
    pub wins_a: u64,
    pub wins_b: u64,
    pub ties: u64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema: u32,
    pub k: usize,
    pub methods: Vec<MethodSummary>,
    pub skipped_queries: usize,
    pub skipped_qids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sign_tests: Vec<SignTest>,
}

impl AggregateReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == method)
    }

    pub fn sign_test(&self, a: Method, b: Method) -> Option<&SignTest> {
        self.sign_tests.iter().find(|t| (t.a, t.b) == (a, b) || (t.a, t.b) == (b, a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Line {
    Query(QueryReport),
    Aggregate(AggregateReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Per-query, per-method records in dataset order, methods in the order
    /// they were requested.
    pub queries: Vec<QueryReport>,
    pub aggregate: AggregateReport,
}

impl ExperimentReport {
    pub fn for_method(&self, method: Method) -> impl Iterator<Item = &QueryReport> {
        self.queries.iter().filter(move |r| r.method == method)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for q in &self.queries {
            serde_json::to_writer(&mut out, &Line::Query(q.clone()))?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut out, &Line::Aggregate(self.aggregate.clone()))?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut queries = Vec::new();
        let mut aggregate = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            match parsed {
                Line::Query(q) => queries.push(q),
                Line::Aggregate(a) if aggregate.is_none() => aggregate = Some(a),
                Line::Aggregate(_) => {
                    return Err(Error::Parse { line: i + 1, message: "second aggregate record".into() })
                }
            }
        }
        let aggregate = aggregate.ok_or(Error::Parse { line: 0, message: "no aggregate record".into() })?;
        Ok(ExperimentReport { queries, aggregate })
    }
}

/// Two-sided sign test: `p = min(1, 2·P[X ≤ min(wins)])` with
/// `X ~ Binomial(wins_a + wins_b, 1/2)`. Ties are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> Result<(u64, u64, u64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), got: b.len() });
    }
    let (mut wa, mut wb, mut ties) = (0u64, 0u64, 0u64);
    for (x, y) in a.iter().zip(b) {
        if x > y {
            wa += 1;
        } else if y > x {
            wb += 1;
        } else {
            ties += 1;
        }
    }
    let n = wa + wb;
    let p = if n == 0 {
        1.0
    } else {
        let dist = Binomial::new(0.5, n).map_err(|e| Error::invalid(e.to_string()))?;
        (2.0 * dist.cdf(wa.min(wb))).min(1.0)
    };
    Ok((wa, wb, ties, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_values() {
        // 10 wins of 10: p = 2 / 1024
        let a = vec![1.0; 10];
        let b = vec![0.0; 10];
        let (wa, wb, t, p) = sign_test(&a, &b).unwrap();
        assert_eq!((wa, wb, t), (10, 0, 0));
        assert!((p - 2.0 / 1024.0).abs() < 1e-12);
        // 6 vs 4 with 2 ties: p = 2·P[X ≤ 4], X ~ Bin(10, .5) = 2·386/1024
        let a = [1., 1., 1., 1., 1., 1., 0., 0., 0., 0., 5., 5.];
        let b = [0., 0., 0., 0., 0., 0., 1., 1., 1., 1., 5., 5.];
        let (wa, wb, t, p) = sign_test(&a, &b).unwrap();
        assert_eq!((wa, wb, t), (6, 4, 2));
        assert!((p - 772.0 / 1024.0).abs() < 1e-12);
        assert_eq!(sign_test(&[1.0], &[1.0]).unwrap().3, 1.0);
        assert!((sign_test(&[1.0; 3], &[0.0; 3]).unwrap().3 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn jsonl_round_trip() {
        let report = ExperimentReport {
            queries: vec![QueryReport {
                schema: REPORT_SCHEMA,
                qid: "7".into(),
                method: Method::GreedyCoverEps,
                selected: vec![3, 1],
                validity: 0.1 + 0.2,
                completeness: -1.0 / 3.0,
                size: 2,
                k: 5,
                wall_ms: None,
            }],
            aggregate: AggregateReport {
                schema: REPORT_SCHEMA,
                k: 5,
                methods: vec![],
                skipped_queries: 1,
                skipped_qids: vec!["9".into()],
                sign_tests: vec![],
            },
        };
        let text = report.to_jsonl().unwrap();
        assert!(text.lines().next().unwrap().contains(r#""record":"query""#));
        assert!(text.contains(r#""method":"greedy-cover-eps""#));
        assert!(!text.contains("wall_ms"));
        assert_eq!(ExperimentReport::read_jsonl(text.as_bytes()).unwrap(), report);
        assert!(ExperimentReport::read_jsonl(&b"{}\n"[..]).is_err());
    }
}
