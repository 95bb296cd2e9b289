//! Summary evaluation: ROUGE-1/2/L F1, token F1 and compression rate.
//!
//! All overlap scores use `F1 = 2 * overlap / (|candidate| + |reference|)`,
//! which equals `2PR / (P + R)` and is exactly symmetric. Zero overlap,
//! including empty inputs, scores 0.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect())
            .or_insert(0) += 1;
    }
    counts
}

fn f1(overlap: usize, cand: usize, reference: usize) -> f64 {
    if overlap == 0 || cand + reference == 0 {
        return 0.0;
    }
    2.0 * overlap as f64 / (cand + reference) as f64
}

/// ROUGE-N F1 with clipped n-gram counts.
pub fn rouge_n_f1<A: AsRef<str>, B: AsRef<str>>(candidate: &[A], reference: &[B], n: usize) -> f64 {
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let overlap = c
        .iter()
        .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    f1(
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

pub fn lcs_len<A: AsRef<str>, B: AsRef<str>>(a: &[A], b: &[B]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l_f1<A: AsRef<str>, B: AsRef<str>>(candidate: &[A], reference: &[B]) -> f64 {
    f1(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// Bag-of-tokens F1 with multiset overlap.
pub fn token_f1<A: AsRef<str>, B: AsRef<str>>(candidate: &[A], reference: &[B]) -> f64 {
    rouge_n_f1(candidate, reference, 1)
}

/// `|candidate| / m`.
pub fn compression_rate(candidate_len: usize, source_len: usize) -> Result<f64> {
    if source_len == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(candidate_len as f64 / source_len as f64)
}

/// Metric used to pick oracle summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    Rouge1,
    Rouge2,
    #[default]
    RougeL,
    TokenF1,
}

impl Metric {
    pub fn score<A: AsRef<str>, B: AsRef<str>>(self, candidate: &[A], reference: &[B]) -> f64 {
        match self {
            Metric::Rouge1 => rouge_n_f1(candidate, reference, 1),
            Metric::Rouge2 => rouge_n_f1(candidate, reference, 2),
            Metric::RougeL => rouge_l_f1(candidate, reference),
            Metric::TokenF1 => token_f1(candidate, reference),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rouge1 => "rouge1",
            Metric::Rouge2 => "rouge2",
            Metric::RougeL => "rougeL",
            Metric::TokenF1 => "token_f1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "rouge1" | "r1" => Ok(Metric::Rouge1),
            "rouge2" | "r2" => Ok(Metric::Rouge2),
            "rougel" | "rl" => Ok(Metric::RougeL),
            "tokenf1" | "f1" => Ok(Metric::TokenF1),
            _ => Err(format!("unknown metric {s:?} (rouge1, rouge2, rougeL, token_f1)")),
        }
    }
}

/// Scores of one (candidate, reference) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairScores {
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub token_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compression_rate: Option<f64>,
}

pub fn score_pair<A: AsRef<str>, B: AsRef<str>>(
    candidate: &[A],
    reference: &[B],
    source_len: Option<usize>,
) -> Result<PairScores> {
    Ok(PairScores {
        rouge1: rouge_n_f1(candidate, reference, 1),
        rouge2: rouge_n_f1(candidate, reference, 2),
        rouge_l: rouge_l_f1(candidate, reference),
        token_f1: token_f1(candidate, reference),
        compression_rate: source_len
            .map(|m| compression_rate(candidate.len(), m))
            .transpose()?,
    })
}

/// Macro averages over a test set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub pairs: usize,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub token_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compression_rate: Option<f64>,
}

impl MetricReport {
    /// Averages per-pair scores. Compression rate is reported only when every
    /// pair has one.
    pub fn from_scores(scores: &[PairScores]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = scores.len() as f64;
        let mean = |f: fn(&PairScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
        let cr: Option<Vec<f64>> = scores.iter().map(|s| s.compression_rate).collect();
        Ok(Self {
            pairs: scores.len(),
            rouge1: mean(|s| s.rouge1),
            rouge2: mean(|s| s.rouge2),
            rouge_l: mean(|s| s.rouge_l),
            token_f1: mean(|s| s.token_f1),
            compression_rate: cr.map(|v| v.iter().sum::<f64>() / n),
        })
    }

    /// Aligned plain-text table.
    pub fn table(&self) -> String {
        let mut rows = vec![
            ("pairs", self.pairs.to_string()),
            ("rouge1", format!("{:.4}", self.rouge1)),
            ("rouge2", format!("{:.4}", self.rouge2)),
            ("rougeL", format!("{:.4}", self.rouge_l)),
            ("token_f1", format!("{:.4}", self.token_f1)),
        ];
        if let Some(cr) = self.compression_rate {
            rows.push(("compression", format!("{cr:.4}")));
        }
        rows.iter()
            .map(|(k, v)| format!("{k:<12} {v:>10}\n"))
            .collect()
    }
}

/// Scores aligned prediction/reference lists.
pub fn evaluate<A, B>(
    predictions: &[Vec<A>],
    references: &[Vec<B>],
    source_lens: Option<&[usize]>,
) -> Result<MetricReport>
where
    A: AsRef<str>,
    B: AsRef<str>,
{
    if predictions.len() != references.len() {
        return Err(Error::LineCountMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }
    if let Some(s) = source_lens {
        if s.len() != predictions.len() {
            return Err(Error::LineCountMismatch {
                predictions: predictions.len(),
                references: s.len(),
            });
        }
    }
    let scores = predictions
        .iter()
        .zip(references)
        .enumerate()
        .map(|(i, (p, r))| score_pair(p, r, source_lens.map(|s| s[i])))
        .collect::<Result<Vec<_>>>()?;
    MetricReport::from_scores(&scores)
}
