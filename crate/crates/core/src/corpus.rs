//! Tokenization, normalization and corpus ingestion.
//!
//! Inputs are assumed to be pre-tokenized: tokens are whitespace separated
//! and no punctuation splitting is attempted.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use log::warn;

use crate::error::{Error, Result};

/// Reserved end-of-source marker. Also the language model's sentence-end symbol.
pub const END_MARKER: &str = "</s>";
/// Begin symbol fed to the encoder before any real token.
pub const BEGIN_MARKER: &str = "<s>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub lowercase: bool,
    pub strip_periods: bool,
    pub append_eos: bool,
    pub end_marker: String,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_periods: true,
            append_eos: true,
            end_marker: END_MARKER.to_string(),
        }
    }
}

impl PreprocessOptions {
    /// Options used for language model training text: no end marker appended.
    pub fn corpus() -> Self {
        Self {
            append_eos: false,
            ..Self::default()
        }
    }
}

/// A preprocessed source sentence `x_1 .. x_m` followed by the end marker at `m + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSequence {
    tokens: Vec<String>,
    end_marker: String,
}

impl SourceSequence {
    /// Builds a sequence from content tokens, appending the end marker.
    pub fn from_content<I, S>(content: I, end_marker: &str) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = content.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(t) = tokens.iter().find(|t| t.is_empty() || t.as_str() == end_marker) {
            return Err(Error::ReservedMarker(t.clone()));
        }
        tokens.push(end_marker.to_string());
        Ok(Self {
            tokens,
            end_marker: end_marker.to_string(),
        })
    }

    /// All tokens including the trailing end marker.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Content tokens `x_1 .. x_m`.
    pub fn content(&self) -> &[String] {
        &self.tokens[..self.tokens.len() - 1]
    }

    /// Number of content tokens, `m`.
    pub fn content_len(&self) -> usize {
        self.tokens.len() - 1
    }

    /// 1-based position of the end marker, `m + 1`.
    pub fn eos_index(&self) -> usize {
        self.tokens.len()
    }

    pub fn end_marker(&self) -> &str {
        &self.end_marker
    }
}

/// Applies the token-level rules of [`preprocess`] without requiring a
/// non-empty result. A trailing end marker is kept out of the returned tokens
/// and reported through the flag.
pub fn normalize_tokens(raw: &str, opts: &PreprocessOptions) -> Result<(Vec<String>, bool)> {
    let mut tokens: Vec<String> = raw
        .split_whitespace()
        .map(|t| {
            if opts.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect();

    let mut had_marker = false;
    if tokens.last().map(String::as_str) == Some(opts.end_marker.as_str()) && opts.append_eos {
        tokens.pop();
        had_marker = true;
    }
    if let Some(t) = tokens.iter().find(|t| **t == opts.end_marker) {
        return Err(Error::ReservedMarker(t.clone()));
    }

    if opts.strip_periods {
        tokens.retain(|t| t != ".");
        // "fell." -> "fell", abbreviations such as "u.s." keep their periods
        if let Some(last) = tokens.last_mut() {
            if last.len() > 1 && last.ends_with('.') && last.matches('.').count() == 1 {
                last.pop();
            }
        }
    }
    Ok((tokens, had_marker))
}

/// Whitespace-tokenizes, lowercases, removes periods and appends the end
/// marker. Lowercasing and period removal follow `opts`; text without an end
/// marker comes from [`normalize_tokens`].
///
/// A final end marker already present in `raw` is accepted when `append_eos`
/// is set, so the function is idempotent on its own output.
pub fn preprocess(raw: &str, opts: &PreprocessOptions) -> Result<SourceSequence> {
    let (tokens, _) = normalize_tokens(raw, opts)?;
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !opts.append_eos {
        return Err(Error::BadConfig(
            "preprocess always yields an end-marked sequence; use normalize_tokens".into(),
        ));
    }
    SourceSequence::from_content(tokens, &opts.end_marker)
}

/// Tokenized training text with type counts in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub sentences: Vec<Vec<String>>,
    pub vocab: IndexMap<String, u64>,
    /// Blank lines and lines with no surviving tokens.
    pub skipped_lines: usize,
}

impl Corpus {
    pub fn from_lines<'a, I>(lines: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let opts = PreprocessOptions::corpus();
        let mut corpus = Corpus::default();
        for (i, line) in lines.into_iter().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            let (tokens, _) = normalize_tokens(line, &opts).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if tokens.is_empty() {
                corpus.skipped_lines += 1;
                continue;
            }
            corpus.push(tokens);
        }
        if corpus.sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if corpus.skipped_lines > 0 {
            warn!("skipped {} blank corpus line(s)", corpus.skipped_lines);
        }
        Ok(corpus)
    }

    pub fn push(&mut self, tokens: Vec<String>) {
        for t in &tokens {
            *self.vocab.entry(t.clone()).or_insert(0) += 1;
        }
        self.sentences.push(tokens);
    }

    pub fn token_count(&self) -> u64 {
        self.vocab.values().sum()
    }
}

/// Reads a one-sentence-per-line UTF-8 file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_lines(text.lines())
}
