//! End-to-end summarization: preprocessing, candidate construction, both
//! experts and beam search, plus the JSON records written per input line.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::corpus::{normalize_tokens, preprocess, PreprocessOptions, SourceSequence};
use crate::decoder::{alignment_trace, beam_search, oracle_select, DecodeResult, DecoderConfig, Experts, Finished};
use crate::embeddings::{
    extractive_candidates, knn_candidates, voronoi_partition, CandidateSet, EmbeddingTable,
    NeighborCache, UnknownWordPolicy,
};
use crate::encoder::{ContextEncoder, Encoder};
use crate::error::{Error, Result};
use crate::eval::Metric;
use crate::fluency::{FluencyExpert, NgramLm, SmoothingMode};
use crate::matcher::build_source_bank;

/// How the candidate set is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateMode {
    #[default]
    Abstractive,
    Extractive,
}

impl fmt::Display for CandidateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CandidateMode::Abstractive => "abstractive",
            CandidateMode::Extractive => "extractive",
        })
    }
}

impl FromStr for CandidateMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "abstractive" => Ok(CandidateMode::Abstractive),
            "extractive" => Ok(CandidateMode::Extractive),
            _ => Err(format!("unknown mode {s:?} (abstractive, extractive)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SummarizerConfig {
    pub mode: CandidateMode,
    pub k: usize,
    pub decoder: DecoderConfig,
    pub unknown_words: UnknownWordPolicy,
    pub preprocess: PreprocessOptions,
    /// Drop the fluency expert instead of weighting it.
    pub disable_fluency: bool,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        Self {
            mode: CandidateMode::Abstractive,
            k: 6,
            decoder: DecoderConfig::default(),
            unknown_words: UnknownWordPolicy::KeepWithoutNeighbors,
            preprocess: PreprocessOptions::default(),
            disable_fluency: false,
        }
    }
}

impl SummarizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.decoder.validate()?;
        if self.k == 0 {
            return Err(Error::BadConfig("K must be at least 1".into()));
        }
        if let SmoothingMode::Temperature(t) = self.decoder.smoothing {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::NonPositiveTemperature(t));
            }
        }
        Ok(())
    }
}

/// Immutable bundle of everything needed to summarize; shareable across threads.
pub struct Summarizer {
    input_table: Arc<EmbeddingTable>,
    output_table: Arc<EmbeddingTable>,
    neighbors: Option<NeighborCache>,
    lm: NgramLm,
    encoder: Encoder,
    cfg: SummarizerConfig,
}

/// Outcome of summarizing one sentence.
#[derive(Debug, Clone)]
pub struct Summary {
    pub source: SourceSequence,
    pub candidates: CandidateSet,
    pub result: DecodeResult,
}

impl Summary {
    pub fn best(&self) -> &Finished {
        self.result.best()
    }

    /// Emitted tokens of the best hypothesis.
    pub fn tokens(&self) -> Vec<&str> {
        self.best().hypothesis.emitted(self.source.end_marker())
    }

    pub fn text(&self) -> String {
        self.tokens().join(" ")
    }

    pub fn oracle<S: AsRef<str>>(&self, reference: &[S], metric: Metric) -> Result<&Finished> {
        oracle_select(&self.result.pool, reference, metric, self.source.end_marker())
    }

    pub fn record(&self, source: &str) -> SummaryRecord {
        let best = self.best();
        SummaryRecord {
            source: source.to_string(),
            summary: Some(self.text()),
            normalized_score: Some(best.normalized_score),
            cm_logprob: Some(best.hypothesis.cm_logprob),
            fm_logprob: Some(best.hypothesis.fm_logprob),
            alignments: Some(alignment_trace(&best.hypothesis, self.source.end_marker())),
            finished_pool_size: Some(self.result.pool.len()),
            oracle_summary: None,
            error: None,
        }
    }

    pub fn pool_record(&self, source: &str) -> PoolRecord {
        let end = self.source.end_marker();
        PoolRecord {
            source: source.to_string(),
            pool: self
                .result
                .pool
                .iter()
                .map(|f| PoolEntry {
                    summary: f.hypothesis.emitted(end).join(" "),
                    normalized_score: f.normalized_score,
                    cm_logprob: f.hypothesis.cm_logprob,
                    fm_logprob: f.hypothesis.fm_logprob,
                    alignments: alignment_trace(&f.hypothesis, end),
                })
                .collect(),
            error: None,
        }
    }
}

/// One line of summarizer output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRecord {
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cm_logprob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fm_logprob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignments: Option<Vec<(usize, usize)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_pool_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_summary: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SummaryRecord {
    pub fn failed(source: &str, err: &Error) -> Self {
        Self {
            source: source.to_string(),
            summary: None,
            normalized_score: None,
            cm_logprob: None,
            fm_logprob: None,
            alignments: None,
            finished_pool_size: None,
            oracle_summary: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolEntry {
    pub summary: String,
    pub normalized_score: f64,
    pub cm_logprob: f64,
    pub fm_logprob: f64,
    pub alignments: Vec<(usize, usize)>,
}

/// All finished hypotheses for one input line, best first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolRecord {
    pub source: String,
    pub pool: Vec<PoolEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Summarizer {
    /// `input_table` drives neighbor search and the encoder's bottom layer;
    /// `output_table` drives the Voronoi partition.
    pub fn new(
        input_table: Arc<EmbeddingTable>,
        output_table: Arc<EmbeddingTable>,
        neighbors: Option<NeighborCache>,
        lm: NgramLm,
        encoder: Encoder,
        cfg: SummarizerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        cfg.decoder.combo.check(encoder.num_layers())?;
        Ok(Self {
            input_table,
            output_table,
            neighbors,
            lm,
            encoder,
            cfg,
        })
    }

    pub fn config(&self) -> &SummarizerConfig {
        &self.cfg
    }

    /// Replaces the configuration after validating it against the encoder.
    pub fn set_config(&mut self, cfg: SummarizerConfig) -> Result<()> {
        cfg.validate()?;
        cfg.decoder.combo.check(self.encoder.num_layers())?;
        self.cfg = cfg;
        Ok(())
    }

    pub fn lm(&self) -> &NgramLm {
        &self.lm
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn candidates(&self, x: &SourceSequence) -> Result<CandidateSet> {
        match self.cfg.mode {
            CandidateMode::Extractive => Ok(extractive_candidates(x)),
            CandidateMode::Abstractive => knn_candidates(
                x,
                self.cfg.k,
                &self.input_table,
                self.neighbors.as_ref(),
                self.cfg.unknown_words,
            ),
        }
    }

    pub fn summarize_source(&self, x: &SourceSequence) -> Result<Summary> {
        let candidates = self.candidates(x)?;
        let dc = &self.cfg.decoder;
        let bank = build_source_bank(&self.encoder, x, dc.combo)?;
        let partition = match dc.smoothing {
            SmoothingMode::ClusterSmoothing if !self.cfg.disable_fluency => {
                Some(voronoi_partition(&self.output_table, &candidates)?)
            }
            _ => None,
        };
        let fluency = if self.cfg.disable_fluency {
            None
        } else {
            Some(FluencyExpert::new(&self.lm, &candidates, partition.as_ref(), dc.smoothing)?)
        };
        let result = beam_search(
            x,
            &candidates,
            Experts {
                encoder: &self.encoder,
                bank: &bank,
                fluency: fluency.as_ref(),
            },
            dc,
        )?;
        Ok(Summary {
            source: x.clone(),
            candidates,
            result,
        })
    }

    pub fn summarize(&self, raw: &str) -> Result<Summary> {
        self.summarize_source(&preprocess(raw, &self.cfg.preprocess)?)
    }
}

/// Tokenizes a reference or prediction line the way corpus text is tokenized.
pub fn reference_tokens(raw: &str) -> Result<Vec<String>> {
    match normalize_tokens(raw, &PreprocessOptions::corpus()) {
        Ok((t, _)) => Ok(t),
        Err(Error::EmptyInput) => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}
