//! Product-of-experts beam search.
//!
//! Hypotheses are scored by `cm_logprob + lambda * fm_logprob` inside the beam.
//! A child whose alignment reaches the end of the source (`z = m + 1`) is
//! finished and moves to the pool. Finished hypotheses are re-ranked by the
//! score divided by `|y| + alpha`.

use std::cmp::Ordering;

use crate::corpus::SourceSequence;
use crate::embeddings::CandidateSet;
use crate::encoder::{ContextEncoder, EncoderState, LayerCombo};
use crate::error::{Error, Result};
use crate::eval::Metric;
use crate::fluency::{FluencyExpert, SmoothingMode, StepDistribution};
use crate::matcher::{match_step, MatchStep, SourcePrefixBank};

/// Smallest fluency probability used before taking a log.
pub const FLUENCY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub beam: usize,
    pub smoothing: SmoothingMode,
    pub combo: LayerCombo,
    /// Defaults to `m + 1` when unset.
    pub max_steps: Option<usize>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            lambda: 0.11,
            alpha: 0.0,
            beam: 10,
            smoothing: SmoothingMode::ClusterSmoothing,
            combo: LayerCombo::Cat,
            max_steps: None,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::BadConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !self.alpha.is_finite() {
            return Err(Error::BadConfig(format!("alpha must be finite, got {}", self.alpha)));
        }
        if self.beam == 0 {
            return Err(Error::BadConfig("beam must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::BadConfig("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<String>,
    /// `z_1 .. z_n`, 1-based source prefix ends.
    pub alignments: Vec<usize>,
    pub cm_logprob: f64,
    pub fm_logprob: f64,
    pub state: EncoderState,
    pub finished: bool,
}

impl Hypothesis {
    pub fn root(state: EncoderState) -> Self {
        Self {
            tokens: Vec::new(),
            alignments: Vec::new(),
            cm_logprob: 0.0,
            fm_logprob: 0.0,
            state,
            finished: false,
        }
    }

    /// Unnormalized objective `cm + lambda * fm`.
    pub fn score(&self, lambda: f64) -> f64 {
        self.cm_logprob + lambda * self.fm_logprob
    }

    /// Tokens with end markers removed.
    pub fn emitted(&self, end_marker: &str) -> Vec<&str> {
        self.tokens
            .iter()
            .map(String::as_str)
            .filter(|t| *t != end_marker)
            .collect()
    }
}

/// A finished hypothesis with its length-normalized score.
#[derive(Debug, Clone, PartialEq)]
pub struct Finished {
    pub hypothesis: Hypothesis,
    pub normalized_score: f64,
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    /// Finished hypotheses, best first.
    pub pool: Vec<Finished>,
}

impl DecodeResult {
    pub fn best(&self) -> &Finished {
        &self.pool[0]
    }
}

/// Everything the search consults besides the candidate set.
#[derive(Clone, Copy)]
pub struct Experts<'a> {
    pub encoder: &'a dyn ContextEncoder,
    pub bank: &'a SourcePrefixBank,
    /// `None` removes the fluency term entirely.
    pub fluency: Option<&'a FluencyExpert<'a>>,
}

/// Children of `h`, one per candidate, in candidate order. Once `h` has
/// emitted `m` tokens only the end marker may follow, so no summary is longer
/// than its source.
pub fn step_extend(
    h: &Hypothesis,
    step: MatchStep,
    fdist: Option<&StepDistribution>,
    candidates: &CandidateSet,
    m: usize,
) -> Result<Vec<Hypothesis>> {
    if h.finished {
        return Err(Error::BadConfig("cannot extend a finished hypothesis".into()));
    }
    let end = candidates.end_marker();
    let at_limit = h.tokens.iter().filter(|t| *t != end).count() >= m;
    let mut children = Vec::with_capacity(candidates.len());
    for (i, (w, state)) in candidates.words().iter().zip(step.states).enumerate() {
        if at_limit && w != end {
            continue;
        }
        let z = step.argmax_pos[i];
        let fm = match fdist {
            Some(f) => {
                let p = f.probs[i];
                if p < FLUENCY_FLOOR {
                    log::debug!("fluency probability {p:e} for {w:?} floored");
                }
                p.max(FLUENCY_FLOOR).ln()
            }
            None => 0.0,
        };
        let mut tokens = h.tokens.clone();
        tokens.push(w.clone());
        let mut alignments = h.alignments.clone();
        alignments.push(z);
        children.push(Hypothesis {
            tokens,
            alignments,
            cm_logprob: h.cm_logprob + step.dist[i].ln(),
            fm_logprob: h.fm_logprob + fm,
            state,
            finished: z == m + 1,
        });
    }
    Ok(children)
}

/// `(cm + lambda * fm) / (|y| + alpha)`, with `|y|` counting the end marker.
pub fn length_normalized_score(h: &Hypothesis, cfg: &DecoderConfig) -> Result<f64> {
    let lp = h.tokens.len() as f64 + cfg.alpha;
    if lp <= 0.0 {
        return Err(Error::DegenerateLength(lp));
    }
    Ok(h.score(cfg.lambda) / lp)
}

fn by_score_then_tokens(a: (f64, &[String]), b: (f64, &[String])) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

pub fn beam_search(
    x: &SourceSequence,
    candidates: &CandidateSet,
    experts: Experts<'_>,
    cfg: &DecoderConfig,
) -> Result<DecodeResult> {
    cfg.validate()?;
    if candidates.end_marker() != x.end_marker() {
        return Err(Error::BadConfig("candidate set and source use different end markers".into()));
    }
    let m = x.content_len();
    if experts.bank.len() != m + 1 {
        return Err(Error::LengthMismatch(experts.bank.len(), m + 1));
    }
    let max_steps = cfg.max_steps.unwrap_or(m + 1);
    let mut beam = vec![Hypothesis::root(experts.encoder.begin()?)];
    let mut pool = Vec::new();
    for _ in 0..max_steps {
        if beam.is_empty() {
            break;
        }
        let mut children = Vec::with_capacity(beam.len() * candidates.len());
        for h in &beam {
            let z_prev = h.alignments.last().copied().unwrap_or(0);
            let step = match_step(
                experts.bank,
                &h.state,
                candidates,
                z_prev,
                experts.encoder,
                cfg.combo,
            )?;
            let fdist = experts.fluency.map(|f| f.step(&h.tokens));
            children.extend(step_extend(h, step, fdist.as_ref(), candidates, m)?);
        }
        children.sort_by(|a, b| {
            by_score_then_tokens((a.score(cfg.lambda), &a.tokens), (b.score(cfg.lambda), &b.tokens))
        });
        children.truncate(cfg.beam);
        beam.clear();
        for c in children {
            if c.finished {
                pool.push(c);
            } else {
                beam.push(c);
            }
        }
    }
    if pool.is_empty() {
        return Err(Error::NoFinishedHypothesis);
    }
    let mut pool = pool
        .into_iter()
        .map(|h| {
            Ok(Finished {
                normalized_score: length_normalized_score(&h, cfg)?,
                hypothesis: h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    pool.sort_by(|a, b| {
        by_score_then_tokens(
            (a.normalized_score, &a.hypothesis.tokens),
            (b.normalized_score, &b.hypothesis.tokens),
        )
    });
    Ok(DecodeResult { pool })
}

/// Pool member scoring best against `reference`; ties go to the higher
/// normalized score (earlier in a sorted pool).
pub fn oracle_select<'p, S: AsRef<str>>(
    pool: &'p [Finished],
    reference: &[S],
    metric: Metric,
    end_marker: &str,
) -> Result<&'p Finished> {
    let mut best: Option<(f64, &Finished)> = None;
    for f in pool {
        let s = metric.score(&f.hypothesis.emitted(end_marker), reference);
        let better = match best {
            None => true,
            Some((bs, bf)) => {
                s > bs || (s == bs && f.normalized_score > bf.normalized_score)
            }
        };
        if better {
            best = Some((s, f));
        }
    }
    best.map(|(_, f)| f).ok_or(Error::EmptyPool)
}

/// `(n, z_n)` for every emitted token, `n` counting emitted tokens from 1.
pub fn alignment_trace(h: &Hypothesis, end_marker: &str) -> Vec<(usize, usize)> {
    h.tokens
        .iter()
        .zip(&h.alignments)
        .filter(|(t, _)| *t != end_marker)
        .enumerate()
        .map(|(i, (_, &z))| (i + 1, z))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::embeddings::{extractive_candidates, voronoi_partition, CandidateOrigin, EmbeddingTable};
    use crate::encoder::{BuiltinConfig, BuiltinEncoder};
    use crate::fluency::{train_ngram_lm, NgramLm};
    use crate::matcher::build_source_bank;
    use std::sync::Arc;

    struct Toy {
        table: Arc<EmbeddingTable>,
        lm: NgramLm,
        enc: BuiltinEncoder,
    }

    fn toy() -> Toy {
        let table = Arc::new(
            EmbeddingTable::parse(
                "a 1 0 0.2\nb 0.8 0.3 0\nc 0 1 0.1\nd 0.1 0.9 0.4\ne 0 0.1 1\nf 0.3 0 0.9\n",
            )
            .unwrap(),
        );
        let corpus = Corpus::from_lines(["a b c", "c d e", "a d", "f e b", "b c", "e a f"]).unwrap();
        let lm = train_ngram_lm(&corpus, 3, 0.5).unwrap();
        let enc = BuiltinEncoder::new(
            BuiltinConfig {
                seed: 9,
                layers: 3,
                dim: 3,
                ..Default::default()
            },
            Some(table.clone()),
        )
        .unwrap();
        Toy { table, lm, enc }
    }

    fn src(words: &[&str]) -> SourceSequence {
        SourceSequence::from_content(words.iter().copied(), "</s>").unwrap()
    }

    fn decode(t: &Toy, x: &SourceSequence, c: &CandidateSet, cfg: &DecoderConfig) -> DecodeResult {
        let bank = build_source_bank(&t.enc, x, cfg.combo).unwrap();
        let part = voronoi_partition(&t.table, c).unwrap();
        let fl = FluencyExpert::new(&t.lm, c, Some(&part), cfg.smoothing).unwrap();
        beam_search(
            x,
            c,
            Experts {
                encoder: &t.enc,
                bank: &bank,
                fluency: Some(&fl),
            },
            cfg,
        )
        .unwrap()
    }

    #[test]
    fn child_scores_are_summed_logs() {
        let t = toy();
        let x = src(&["a", "c", "e"]);
        let c = extractive_candidates(&x);
        let bank = build_source_bank(&t.enc, &x, LayerCombo::Cat).unwrap();
        let root = Hypothesis::root(t.enc.begin().unwrap());
        let step = match_step(&bank, &root.state, &c, 0, &t.enc, LayerCombo::Cat).unwrap();
        let dist = step.dist.clone();
        let zs = step.argmax_pos.clone();
        let fdist = StepDistribution {
            probs: vec![0.5, 0.25, 0.125, 0.0],
            normalized: false,
        };
        let kids = step_extend(&root, step, Some(&fdist), &c, 3).unwrap();
        assert_eq!(kids.len(), c.len());
        for (i, k) in kids.iter().enumerate() {
            assert_eq!(k.tokens, [c.words()[i].clone()]);
            assert_eq!(k.alignments, [zs[i]]);
            assert_eq!(k.cm_logprob, dist[i].ln());
            let want_fm = [0.5f64.ln(), 0.25f64.ln(), 0.125f64.ln(), 1e-300f64.ln()][i];
            assert_eq!(k.fm_logprob, want_fm);
            assert_eq!(k.finished, zs[i] == 4);
            let lambda = 0.3;
            assert_eq!(k.score(lambda), dist[i].ln() + lambda * want_fm);
        }
        assert!(step_extend(
            &Hypothesis {
                finished: true,
                ..root.clone()
            },
            match_step(&bank, &root.state, &c, 0, &t.enc, LayerCombo::Cat).unwrap(),
            None,
            &c,
            3
        )
        .is_err());
    }

    #[test]
    fn only_end_marker_after_m_tokens() {
        let t = toy();
        let x = src(&["a", "b"]);
        let c = extractive_candidates(&x);
        let bank = build_source_bank(&t.enc, &x, LayerCombo::Cat).unwrap();
        let mut h = Hypothesis::root(t.enc.begin().unwrap());
        h.state = t.enc.encode(&["a", "b"]).unwrap();
        h.tokens = vec!["a".into(), "b".into()];
        h.alignments = vec![1, 2];
        let step = match_step(&bank, &h.state, &c, 2, &t.enc, LayerCombo::Cat).unwrap();
        let kids = step_extend(&h, step, None, &c, 2).unwrap();
        assert_eq!(kids.len(), 1);
        assert_eq!(kids[0].tokens.last().unwrap(), "</s>");
        assert!(kids[0].finished);
    }

    #[test]
    fn normalized_score_arithmetic() {
        let t = toy();
        let mut h = Hypothesis::root(t.enc.start());
        h.tokens = vec!["a".into(), "b".into(), "c".into(), "</s>".into()];
        h.cm_logprob = -2.0;
        let cfg = DecoderConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert_eq!(length_normalized_score(&h, &cfg).unwrap(), -0.5);
        let mut short = h.clone();
        short.tokens.truncate(3);
        let mut long = h.clone();
        long.tokens.push("d".into());
        let cfg = DecoderConfig {
            alpha: -0.1,
            ..cfg
        };
        let s = length_normalized_score(&short, &cfg).unwrap();
        let l = length_normalized_score(&long, &cfg).unwrap();
        assert_eq!(s, -2.0 / 2.9);
        assert_eq!(l, -2.0 / 4.9);
        assert!(s < l);
        h.tokens.clear();
        assert!(matches!(
            length_normalized_score(&h, &cfg),
            Err(Error::DegenerateLength(_))
        ));
    }

    #[test]
    fn decode_invariants() {
        let t = toy();
        let x = src(&["a", "c", "e", "b"]);
        for c in [
            extractive_candidates(&x),
            CandidateSet::new(["d", "a", "f"], "</s>", CandidateOrigin::Abstractive { k: 2 }),
        ] {
            let r = decode(&t, &x, &c, &DecoderConfig::default());
            assert!(!r.pool.is_empty());
            for w in r.pool.windows(2) {
                assert!(w[0].normalized_score >= w[1].normalized_score);
            }
            for f in &r.pool {
                let h = &f.hypothesis;
                assert!(h.finished);
                assert_eq!(*h.alignments.last().unwrap(), 5);
                assert!(h.alignments.windows(2).all(|w| w[0] < w[1]));
                assert!(h.emitted("</s>").len() <= 4);
                let trace = alignment_trace(h, "</s>");
                assert_eq!(trace.len(), h.emitted("</s>").len());
                assert!(trace.windows(2).all(|w| w[0].1 < w[1].1));
            }
        }
    }

    #[test]
    fn deterministic_and_greedy_beam() {
        let t = toy();
        let x = src(&["b", "d", "f"]);
        let c = extractive_candidates(&x);
        let cfg = DecoderConfig::default();
        let a = decode(&t, &x, &c, &cfg);
        let b = decode(&t, &x, &c, &cfg);
        assert_eq!(a.pool, b.pool);

        // width 1 follows the locally best child at each step
        let g = decode(&t, &x, &c, &DecoderConfig { beam: 1, ..cfg.clone() });
        assert_eq!(g.pool.len(), 1);
        let bank = build_source_bank(&t.enc, &x, cfg.combo).unwrap();
        let part = voronoi_partition(&t.table, &c).unwrap();
        let fl = FluencyExpert::new(&t.lm, &c, Some(&part), cfg.smoothing).unwrap();
        let mut h = Hypothesis::root(t.enc.begin().unwrap());
        while !h.finished {
            let z = h.alignments.last().copied().unwrap_or(0);
            let step = match_step(&bank, &h.state, &c, z, &t.enc, cfg.combo).unwrap();
            let kids = step_extend(&h, step, Some(&fl.step(&h.tokens)), &c, 3).unwrap();
            h = kids
                .into_iter()
                .min_by(|a, b| {
                    by_score_then_tokens((a.score(cfg.lambda), &a.tokens), (b.score(cfg.lambda), &b.tokens))
                })
                .unwrap();
        }
        assert_eq!(g.best().hypothesis.tokens, h.tokens);
    }

    #[test]
    fn no_finished_with_short_max_steps() {
        let t = toy();
        let x = src(&["a", "b", "c", "d"]);
        let c = CandidateSet::new(["a"], "</s>", CandidateOrigin::Extractive);
        let cfg = DecoderConfig {
            combo: LayerCombo::Bot,
            max_steps: Some(1),
            beam: 1,
            lambda: 1.0,
            ..Default::default()
        };
        let bank = build_source_bank(&t.enc, &x, cfg.combo).unwrap();
        let part = voronoi_partition(&t.table, &c).unwrap();
        let fl = FluencyExpert::new(&t.lm, &c, Some(&part), cfg.smoothing).unwrap();
        // both children match some prefix exactly; fluency prefers starting
        // with "a", which leaves the only surviving child unfinished
        let res = beam_search(
            &x,
            &c,
            Experts {
                encoder: &t.enc,
                bank: &bank,
                fluency: Some(&fl),
            },
            &cfg,
        );
        assert!(matches!(res, Err(Error::NoFinishedHypothesis)));
    }

    #[test]
    fn oracle_picks_metric_argmax() {
        let t = toy();
        let mk = |toks: &[&str], score: f64| Finished {
            hypothesis: Hypothesis {
                tokens: toks.iter().map(|s| s.to_string()).collect(),
                ..Hypothesis::root(t.enc.start())
            },
            normalized_score: score,
        };
        let pool = vec![
            mk(&["a", "b", "</s>"], -0.1),
            mk(&["c", "d", "</s>"], -0.2),
            mk(&["c", "e", "</s>"], -0.3),
        ];
        let r = oracle_select(&pool, &["c", "d"], Metric::RougeL, "</s>").unwrap();
        assert_eq!(r.hypothesis.tokens[1], "d");
        // tie on the metric goes to the better normalized score
        let r = oracle_select(&pool, &["c"], Metric::Rouge1, "</s>").unwrap();
        assert_eq!(r.normalized_score, -0.2);
        let r = oracle_select(&pool[2..], &["z"], Metric::Rouge1, "</s>").unwrap();
        assert_eq!(r.normalized_score, -0.3);
        assert!(matches!(
            oracle_select(&[], &["c"], Metric::Rouge1, "</s>"),
            Err(Error::EmptyPool)
        ));
    }

    #[test]
    fn identity_trace() {
        let t = toy();
        let x = src(&["a", "c", "e"]);
        let c = extractive_candidates(&x);
        let cfg = DecoderConfig {
            combo: LayerCombo::Bot,
            lambda: 0.0,
            beam: 64,
            ..Default::default()
        };
        let r = decode(&t, &x, &c, &cfg);
        let ident = r
            .pool
            .iter()
            .find(|f| f.hypothesis.emitted("</s>") == ["a", "c", "e"])
            .expect("identity summary is reachable");
        assert_eq!(alignment_trace(&ident.hypothesis, "</s>"), [(1, 1), (2, 2), (3, 3)]);
    }
}
