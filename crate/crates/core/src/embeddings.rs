//! Word embeddings, cosine similarity, candidate sets and the Voronoi
//! partition of the vocabulary around a candidate set.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dense word vectors for the full vocabulary `V`, in file order.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl EmbeddingTable {
    pub fn from_rows<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut table = EmbeddingTable {
            dim: 0,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            norms: Vec::new(),
        };
        for (i, (word, vec)) in rows.into_iter().enumerate() {
            table.push(i + 1, word.into(), vec)?;
        }
        table.finish()
    }

    fn push(&mut self, line: usize, word: String, vec: Vec<f64>) -> Result<()> {
        if self.words.is_empty() {
            if vec.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "row has no vector components".into(),
                });
            }
            self.dim = vec.len();
        } else if vec.len() != self.dim {
            return Err(Error::DimMismatch {
                line,
                expected: self.dim,
                found: vec.len(),
            });
        }
        if self.index.contains_key(&word) {
            return Err(Error::DuplicateWord(word));
        }
        self.norms.push(norm(&vec));
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend(vec);
        Ok(())
    }

    fn finish(self) -> Result<Self> {
        if self.words.len() < 2 {
            return Err(Error::VocabularyTooSmall(self.words.len()));
        }
        Ok(self)
    }

    /// Parses `word v1 v2 ... vD` rows. The dimension is fixed by the first row.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = EmbeddingTable {
            dim: 0,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            norms: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let vec = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|e| Error::Parse {
                        line: i + 1,
                        msg: format!("bad float {f:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            table.push(i + 1, word.to_string(), vec)?;
        }
        table.finish()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.row(i))
    }

    fn row_cosine(&self, a: usize, b: usize) -> f64 {
        let denom = self.norms[a] * self.norms[b];
        if denom == 0.0 {
            return 0.0;
        }
        dot(self.row(a), self.row(b)) / denom
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::parse(&text)
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, defined as 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch(u.len(), v.len()));
    }
    Ok(cosine_unchecked(u, v))
}

pub(crate) fn cosine_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let denom = norm(u) * norm(v);
    if denom == 0.0 {
        0.0
    } else {
        dot(u, v) / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateOrigin {
    Extractive,
    Abstractive { k: usize },
}

/// The restricted output vocabulary `C` for one source sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    words: Vec<String>,
    origin: CandidateOrigin,
    end_marker: String,
}

impl CandidateSet {
    /// Builds a set from words in order, dropping duplicates and making sure
    /// the end marker appears exactly once (last, unless already present).
    pub fn new<I, S>(words: I, end_marker: &str, origin: CandidateOrigin) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for w in words {
            let w = w.into();
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
        if !seen.contains(end_marker) {
            out.push(end_marker.to_string());
        }
        Self {
            words: out,
            origin,
            end_marker: end_marker.to_string(),
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn origin(&self) -> CandidateOrigin {
        self.origin
    }

    pub fn end_marker(&self) -> &str {
        &self.end_marker
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.position(word).is_some()
    }
}

/// Distinct word types of `x` in source order, plus the end marker.
pub fn extractive_candidates(x: &crate::corpus::SourceSequence) -> CandidateSet {
    CandidateSet::new(
        x.content().iter().cloned(),
        x.end_marker(),
        CandidateOrigin::Extractive,
    )
}

/// Precomputed neighbor lists, one `word: n1 n2 ... nK` line per word.
#[derive(Debug, Clone, Default)]
pub struct NeighborCache {
    neighbors: HashMap<String, Vec<String>>,
}

impl NeighborCache {
    pub fn parse(text: &str) -> Result<Self> {
        let mut neighbors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, rest) = line.split_once(':').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected `word: n1 n2 ...`".into(),
            })?;
            let word = word.trim().to_string();
            if word.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "empty word".into(),
                });
            }
            let list = rest.split_whitespace().map(str::to_string).collect();
            if neighbors.insert(word.clone(), list).is_some() {
                return Err(Error::DuplicateWord(word));
            }
        }
        Ok(Self { neighbors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.neighbors.get(word).map(Vec::as_slice)
    }
}

/// What to do with a source word that has no embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownWordPolicy {
    #[default]
    Error,
    /// Keep the word itself as a candidate, without neighbors.
    KeepWithoutNeighbors,
}

/// The `k` nearest word types (cosine, exhaustive scan) of `word`, itself first.
/// Ties go to the earlier row of the table.
pub fn nearest_neighbors(table: &EmbeddingTable, word: &str, k: usize) -> Option<Vec<String>> {
    let me = table.index_of(word)?;
    let mut scored: Vec<(f64, usize)> = (0..table.len())
        .filter(|&i| i != me)
        .map(|i| (table.row_cosine(me, i), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out = Vec::with_capacity(k);
    out.push(table.words[me].clone());
    out.extend(
        scored
            .into_iter()
            .take(k.saturating_sub(1))
            .map(|(_, i)| table.words[i].clone()),
    );
    Some(out)
}

/// Union over content tokens of their `k` nearest word types, first-seen
/// order, plus the end marker.
pub fn knn_candidates(
    x: &crate::corpus::SourceSequence,
    k: usize,
    table: &EmbeddingTable,
    cache: Option<&NeighborCache>,
    unknown: UnknownWordPolicy,
) -> Result<CandidateSet> {
    if k == 0 {
        return Err(Error::BadConfig("K must be at least 1".into()));
    }
    let mut words: Vec<String> = Vec::new();
    for tok in x.content() {
        if let Some(cached) = cache.and_then(|c| c.get(tok)) {
            words.push(tok.clone());
            words.extend(
                cached
                    .iter()
                    .filter(|n| *n != tok)
                    .take(k - 1)
                    .cloned(),
            );
            continue;
        }
        match nearest_neighbors(table, tok, k) {
            Some(n) => words.extend(n),
            None => match unknown {
                UnknownWordPolicy::Error => return Err(Error::UnknownSourceWord(tok.clone())),
                UnknownWordPolicy::KeepWithoutNeighbors => words.push(tok.clone()),
            },
        }
    }
    Ok(CandidateSet::new(
        words,
        x.end_marker(),
        CandidateOrigin::Abstractive { k },
    ))
}

/// Assignment of every vocabulary word to exactly one candidate's cell `N(w)`.
#[derive(Debug, Clone)]
pub struct VoronoiPartition {
    candidates: Vec<String>,
    cells: Vec<Vec<String>>,
    cell_of: HashMap<String, usize>,
}

impl VoronoiPartition {
    /// Candidate words in the order of the set the partition was built from.
    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    /// Members of the cell owned by `candidate`.
    pub fn cell(&self, candidate: &str) -> Option<&[String]> {
        let i = self.candidates.iter().position(|c| c == candidate)?;
        Some(&self.cells[i])
    }

    pub fn cells(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.candidates
            .iter()
            .map(String::as_str)
            .zip(self.cells.iter().map(Vec::as_slice))
    }

    /// The candidate owning `word`.
    pub fn owner(&self, word: &str) -> Option<&str> {
        self.cell_of
            .get(word)
            .map(|&i| self.candidates[i].as_str())
    }

    /// Index (in candidate order) of the cell owning `word`.
    pub fn owner_index(&self, word: &str) -> Option<usize> {
        self.cell_of.get(word).copied()
    }

    pub fn built_from(&self, c: &CandidateSet) -> bool {
        self.candidates == c.words()
    }
}

/// Assigns each word of the table to its most cosine-similar candidate.
///
/// Candidates own themselves. Candidates without an embedding (such as the
/// end marker) form singleton cells and attract nothing else. Ties go to the
/// candidate that comes first in `c`.
pub fn voronoi_partition(table: &EmbeddingTable, c: &CandidateSet) -> Result<VoronoiPartition> {
    if c.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let candidate_rows: Vec<(usize, usize)> = c
        .words()
        .iter()
        .enumerate()
        .filter_map(|(ci, w)| table.index_of(w).map(|row| (ci, row)))
        .collect();
    if candidate_rows.is_empty() {
        return Err(Error::BadConfig(
            "no candidate has an embedding; the vocabulary cannot be partitioned".into(),
        ));
    }
    let self_owned: HashMap<&str, usize> = c
        .words()
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();

    let owners: Vec<usize> = (0..table.len())
        .into_par_iter()
        .map(|row| {
            if let Some(&ci) = self_owned.get(table.words[row].as_str()) {
                return ci;
            }
            let mut best = candidate_rows[0].0;
            let mut best_sim = f64::NEG_INFINITY;
            for &(ci, crow) in &candidate_rows {
                let s = table.row_cosine(row, crow);
                if s > best_sim {
                    best_sim = s;
                    best = ci;
                }
            }
            best
        })
        .collect();

    let mut cells = vec![Vec::new(); c.len()];
    let mut cell_of = HashMap::with_capacity(table.len() + c.len());
    for (row, &ci) in owners.iter().enumerate() {
        cells[ci].push(table.words[row].clone());
        cell_of.insert(table.words[row].clone(), ci);
    }
    for (ci, w) in c.words().iter().enumerate() {
        if !table.contains(w) {
            cells[ci].push(w.clone());
            cell_of.insert(w.clone(), ci);
        }
    }
    Ok(VoronoiPartition {
        candidates: c.words().to_vec(),
        cells,
        cell_of,
    })
}
