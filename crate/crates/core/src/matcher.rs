//! The contextual matching expert.
//!
//! For a target prefix extended by candidate `w`, the greedy alignment score
//! is the best cosine similarity against source prefixes `x_{1:j}` that end
//! strictly after the previous alignment. A softmax over the candidates'
//! scores gives the step distribution.

use crate::corpus::SourceSequence;
use crate::embeddings::{norm, CandidateSet};
use crate::encoder::{prefix_vector, ContextEncoder, EncoderState, LayerCombo};
use crate::error::{Error, Result};
use crate::fluency::softmax;

/// Prefix vectors of `x_{1:1} .. x_{1:m+1}` under one layer combination.
#[derive(Debug, Clone)]
pub struct SourcePrefixBank {
    vectors: Vec<Vec<f64>>,
    norms: Vec<f64>,
    combo: LayerCombo,
}

impl SourcePrefixBank {
    pub fn from_vectors(vectors: Vec<Vec<f64>>, combo: LayerCombo) -> Self {
        let norms = vectors.iter().map(|v| norm(v)).collect();
        Self {
            vectors,
            norms,
            combo,
        }
    }

    /// `m + 1`.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Vector of the prefix ending at 1-based position `j`.
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j - 1]
    }

    pub fn combo(&self) -> LayerCombo {
        self.combo
    }
}

pub fn build_source_bank(
    enc: &dyn ContextEncoder,
    x: &SourceSequence,
    combo: LayerCombo,
) -> Result<SourcePrefixBank> {
    combo.check(enc.num_layers())?;
    let mut state = enc.begin()?;
    let mut vectors = Vec::with_capacity(x.eos_index());
    for tok in x.tokens() {
        state = enc.advance(&state, tok)?;
        vectors.push(prefix_vector(&state, combo)?);
    }
    Ok(SourcePrefixBank::from_vectors(vectors, combo))
}

/// One contextual matching step over a candidate set, in candidate order.
#[derive(Debug, Clone)]
pub struct MatchStep {
    /// `q_cm(w | y_<n, x)`.
    pub dist: Vec<f64>,
    /// Greedy alignment scores `s_w`.
    pub scores: Vec<f64>,
    /// Smallest maximizing source prefix end `j` for each candidate.
    pub argmax_pos: Vec<usize>,
    /// Target states after appending each candidate, kept for the next step.
    pub states: Vec<EncoderState>,
}

/// Greedy alignment over the window `(z_prev, m + 1]`.
pub fn match_step(
    bank: &SourcePrefixBank,
    target_state: &EncoderState,
    candidates: &CandidateSet,
    z_prev: usize,
    enc: &dyn ContextEncoder,
    combo: LayerCombo,
) -> Result<MatchStep> {
    let end = bank.len();
    if z_prev >= end {
        return Err(Error::EmptyWindow { z_prev, end });
    }
    let mut scores = Vec::with_capacity(candidates.len());
    let mut argmax_pos = Vec::with_capacity(candidates.len());
    let mut states = Vec::with_capacity(candidates.len());
    for w in candidates.words() {
        let st = enc.advance(target_state, w)?;
        let v = prefix_vector(&st, combo)?;
        if v.len() != bank.vectors[0].len() {
            return Err(Error::LengthMismatch(v.len(), bank.vectors[0].len()));
        }
        let vn = norm(&v);
        let mut best = f64::NEG_INFINITY;
        let mut best_j = z_prev + 1;
        for j in z_prev + 1..=end {
            let denom = bank.norms[j - 1] * vn;
            let s = if denom == 0.0 {
                0.0
            } else {
                dot(&bank.vectors[j - 1], &v) / denom
            };
            if s > best {
                best = s;
                best_j = j;
            }
        }
        scores.push(best);
        argmax_pos.push(best_j);
        states.push(st);
    }
    Ok(MatchStep {
        dist: softmax(&scores),
        scores,
        argmax_pos,
        states,
    })
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `log q_cm(chosen)`.
pub fn cm_log_prob(step: &MatchStep, candidates: &CandidateSet, chosen: &str) -> Result<f64> {
    let i = candidates
        .position(chosen)
        .ok_or_else(|| Error::NotInCandidates(chosen.to_string()))?;
    Ok(step.dist[i].ln())
}
