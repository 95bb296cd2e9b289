//! Interpolated absolute-discount n-gram language model.
//!
//! The trained model is held directly in backoff form (per n-gram
//! probability plus per-context backoff weight), which is exactly what an
//! ARPA file stores, so saving and loading lose nothing but float formatting.

use std::collections::HashMap;

use indexmap::IndexMap;

use crate::corpus::{Corpus, BEGIN_MARKER, END_MARKER};
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";

/// Total probability mass reserved for the uniform unigram floor.
const UNIGRAM_FLOOR_MASS: f64 = 1e-10;

/// Id that never matches any table entry; used for out-of-vocabulary history words.
const NO_WORD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NgramEntry {
    pub prob: f64,
    pub bow: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub order: usize,
    pub discount: f64,
    /// Add an `<unk>` type so out-of-vocabulary queries get a positive probability.
    pub unk: bool,
    /// Types added to the vocabulary even if unseen in the corpus.
    pub extra_vocab: Vec<String>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            order: 3,
            discount: 0.75,
            unk: false,
            extra_vocab: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NgramLm {
    pub(crate) order: usize,
    pub(crate) discount: Option<f64>,
    pub(crate) vocab: IndexMap<String, u32>,
    pub(crate) bos: u32,
    pub(crate) eos: u32,
    pub(crate) unk: Option<u32>,
    pub(crate) uni: Vec<NgramEntry>,
    /// `higher[n - 2]` holds the n-grams of order `n >= 2`.
    pub(crate) higher: Vec<HashMap<Box<[u32]>, NgramEntry>>,
    /// `followers[n - 2]` maps an (n-1)-word context to its explicit n-gram continuations.
    pub(crate) followers: Vec<HashMap<Box<[u32]>, Vec<(u32, f64)>>>,
}

pub fn train_ngram_lm(corpus: &Corpus, order: usize, discount: f64) -> Result<NgramLm> {
    NgramLm::train(
        corpus,
        &TrainOptions {
            order,
            discount,
            ..Default::default()
        },
    )
}

impl NgramLm {
    pub fn train(corpus: &Corpus, opts: &TrainOptions) -> Result<Self> {
        if corpus.sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if !(1..=5).contains(&opts.order) {
            return Err(Error::BadOrder(opts.order));
        }
        let d = opts.discount;
        if !(0.0..1.0).contains(&d) {
            return Err(Error::BadDiscount(d));
        }

        let mut vocab: IndexMap<String, u32> = IndexMap::new();
        let intern = |w: &str, vocab: &mut IndexMap<String, u32>| -> u32 {
            let next = vocab.len() as u32;
            *vocab.entry(w.to_string()).or_insert(next)
        };
        let bos = intern(BEGIN_MARKER, &mut vocab);
        for w in corpus.vocab.keys() {
            intern(w, &mut vocab);
        }
        for w in &opts.extra_vocab {
            intern(w, &mut vocab);
        }
        let eos = intern(END_MARKER, &mut vocab);
        let unk = opts.unk.then(|| intern(UNK, &mut vocab));

        // counts[n - 1]: n-gram -> count
        let mut counts: Vec<HashMap<Box<[u32]>, u64>> = vec![HashMap::new(); opts.order];
        let mut padded = Vec::new();
        for sent in &corpus.sentences {
            padded.clear();
            padded.push(bos);
            padded.extend(sent.iter().map(|w| vocab[w.as_str()]));
            padded.push(eos);
            for i in 1..padded.len() {
                for n in 1..=opts.order.min(i + 1) {
                    let gram: Box<[u32]> = padded[i + 1 - n..=i].into();
                    *counts[n - 1].entry(gram).or_insert(0) += 1;
                }
            }
        }

        let v = vocab.len();
        let predictable = (v - 1) as f64;
        let total: u64 = counts[0].values().sum();
        let seen_types = counts[0].len() as f64;
        let n_tokens = total as f64;
        let floor = UNIGRAM_FLOOR_MASS / predictable;
        let mut uni = vec![NgramEntry { prob: 0.0, bow: 1.0 }; v];
        for (id, e) in uni.iter_mut().enumerate() {
            if id as u32 == bos {
                continue;
            }
            let c = counts[0].get(&[id as u32][..]).copied().unwrap_or(0) as f64;
            let base = (c - d).max(0.0) / n_tokens + d * seen_types / n_tokens / predictable;
            e.prob = base * (1.0 - UNIGRAM_FLOOR_MASS) + floor;
        }

        let mut lm = NgramLm {
            order: opts.order,
            discount: Some(d),
            vocab,
            bos,
            eos,
            unk,
            uni,
            higher: Vec::new(),
            followers: Vec::new(),
        };

        for n in 2..=opts.order {
            // group n-gram counts by context
            let mut by_context: HashMap<Box<[u32]>, Vec<(u32, u64)>> = HashMap::new();
            for (gram, &c) in &counts[n - 1] {
                by_context
                    .entry(gram[..n - 1].into())
                    .or_default()
                    .push((gram[n - 1], c));
            }
            let mut table = HashMap::new();
            let mut follow = HashMap::new();
            for (ctx, mut words) in by_context {
                words.sort_unstable();
                let ctx_total: u64 = words.iter().map(|w| w.1).sum();
                let ctx_total = ctx_total as f64;
                let gamma = d * words.len() as f64 / ctx_total;
                let mut list = Vec::with_capacity(words.len());
                for (w, c) in words {
                    let lower = lm.prob_ids(w, &ctx[1..]);
                    let p = (c as f64 - d) / ctx_total + gamma * lower;
                    let mut key = ctx.to_vec();
                    key.push(w);
                    table.insert(key.into_boxed_slice(), NgramEntry { prob: p, bow: 1.0 });
                    list.push((w, p));
                }
                lm.set_bow(&ctx, gamma);
                follow.insert(ctx, list);
            }
            lm.higher.push(table);
            lm.followers.push(follow);
        }
        Ok(lm)
    }

    /// Sets the backoff weight on the (already built) n-gram entry for `ctx`.
    fn set_bow(&mut self, ctx: &[u32], bow: f64) {
        if ctx.len() == 1 {
            self.uni[ctx[0] as usize].bow = bow;
        } else if let Some(e) = self.higher[ctx.len() - 2].get_mut(ctx) {
            e.bow = bow;
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Discount used in training; unknown for models read from ARPA files.
    pub fn discount(&self) -> Option<f64> {
        self.discount
    }

    /// Number of types, including the boundary symbols.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.vocab.keys().map(String::as_str)
    }

    pub fn word(&self, id: u32) -> &str {
        self.vocab.get_index(id as usize).map(|(w, _)| w.as_str()).unwrap_or("")
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.vocab.get(word).copied()
    }

    pub fn eos_id(&self) -> u32 {
        self.eos
    }

    pub fn bos_id(&self) -> u32 {
        self.bos
    }

    pub fn unk_id(&self) -> Option<u32> {
        self.unk
    }

    /// Id used for `word` in a query: its own, else `<unk>` when available.
    pub fn query_id(&self, word: &str) -> Option<u32> {
        self.id(word).or(self.unk)
    }

    /// Converts a history to the context the model conditions on: a leading
    /// begin symbol, truncated to the last `order - 1` ids.
    pub fn context_ids<S: AsRef<str>>(&self, history: &[S]) -> Vec<u32> {
        let keep = self.order - 1;
        if keep == 0 {
            return Vec::new();
        }
        let mut ids: Vec<u32> = Vec::with_capacity(keep);
        if history.len() < keep {
            ids.push(self.bos);
        }
        let start = history.len().saturating_sub(keep);
        ids.extend(
            history[start..]
                .iter()
                .map(|w| self.query_id(w.as_ref()).unwrap_or(NO_WORD)),
        );
        ids
    }

    fn bow(&self, ctx: &[u32]) -> f64 {
        match ctx.len() {
            0 => 1.0,
            1 => self.uni.get(ctx[0] as usize).map_or(1.0, |e| e.bow),
            k => self.higher[k - 2].get(ctx).map_or(1.0, |e| e.bow),
        }
    }

    pub(crate) fn prob_ids(&self, w: u32, ctx: &[u32]) -> f64 {
        if ctx.is_empty() {
            return self.uni.get(w as usize).map_or(0.0, |e| e.prob);
        }
        let mut key = Vec::with_capacity(ctx.len() + 1);
        key.extend_from_slice(ctx);
        key.push(w);
        if let Some(e) = self.higher[ctx.len() - 1].get(&key[..]) {
            return e.prob;
        }
        self.bow(ctx) * self.prob_ids(w, &ctx[1..])
    }

    /// `lm(word | history)`. The end marker queries the sentence-end symbol.
    pub fn conditional_prob<S: AsRef<str>>(&self, word: &str, history: &[S]) -> Result<f64> {
        let w = self
            .query_id(word)
            .filter(|&w| w != self.bos)
            .ok_or_else(|| Error::UnknownWord(word.to_string()))?;
        Ok(self.prob_ids(w, &self.context_ids(history)))
    }

    /// Per-token perplexity over `sentences`, counting each sentence end.
    /// Tokens the model cannot score are skipped and counted in `.1`.
    pub fn perplexity<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> (f64, usize) {
        let mut log_sum = 0.0;
        let mut n = 0usize;
        let mut oov = 0usize;
        for sent in sentences {
            let words: Vec<&str> = sent.iter().map(AsRef::as_ref).collect();
            for i in 0..=words.len() {
                let w = if i == words.len() {
                    Some(self.eos)
                } else {
                    self.query_id(words[i]).filter(|&w| w != self.bos)
                };
                match w {
                    Some(w) => {
                        log_sum += self.prob_ids(w, &self.context_ids(&words[..i])).ln();
                        n += 1;
                    }
                    None => oov += 1,
                }
            }
        }
        let ppl = if n == 0 { f64::NAN } else { (-log_sum / n as f64).exp() };
        (ppl, oov)
    }

    /// Probability of every type given the history, indexed by id. The begin
    /// symbol always gets 0.
    pub fn distribution<S: AsRef<str>>(&self, history: &[S]) -> Vec<f64> {
        self.distribution_ids(&self.context_ids(history))
    }

    pub(crate) fn distribution_ids(&self, ctx: &[u32]) -> Vec<f64> {
        let mut dist: Vec<f64> = self.uni.iter().map(|e| e.prob).collect();
        for k in 1..=ctx.len() {
            let h = &ctx[ctx.len() - k..];
            let bow = self.bow(h);
            if bow != 1.0 {
                dist.iter_mut().for_each(|p| *p *= bow);
            }
            if let Some(list) = self.followers[k - 1].get(h) {
                for &(w, p) in list {
                    dist[w as usize] = p;
                }
            }
        }
        dist[self.bos as usize] = 0.0;
        dist
    }
}
