//! The domain fluency expert: an n-gram language model restricted to a
//! candidate set by cluster smoothing, temperature, or no adjustment.

mod arpa;
mod ngram;

use std::fmt;
use std::str::FromStr;

pub use ngram::{train_ngram_lm, NgramLm, TrainOptions, UNK};

use crate::embeddings::{CandidateSet, VoronoiPartition};
use crate::error::{Error, Result};

/// How the full-vocabulary LM distribution is brought down to the candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothingMode {
    /// Each candidate receives the summed probability of its Voronoi cell.
    ClusterSmoothing,
    /// `lm(w)^(1/T)` over the candidates, renormalized.
    Temperature(f64),
    /// Raw `lm(w)` values, not renormalized.
    NoAdjustment,
}

impl Default for SmoothingMode {
    fn default() -> Self {
        SmoothingMode::ClusterSmoothing
    }
}

impl fmt::Display for SmoothingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothingMode::ClusterSmoothing => write!(f, "cs"),
            SmoothingMode::Temperature(t) => write!(f, "temp:{t}"),
            SmoothingMode::NoAdjustment => write!(f, "na"),
        }
    }
}

impl FromStr for SmoothingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "cs" => Ok(SmoothingMode::ClusterSmoothing),
            "na" => Ok(SmoothingMode::NoAdjustment),
            _ => {
                let t = lower
                    .strip_prefix("temp:")
                    .or_else(|| lower.strip_prefix("temp"))
                    .ok_or_else(|| format!("unknown smoothing mode {s:?} (cs, temp:<T>, na)"))?;
                let t: f64 = t
                    .parse()
                    .map_err(|_| format!("bad temperature in {s:?}"))?;
                Ok(SmoothingMode::Temperature(t))
            }
        }
    }
}

/// `p_fm(. | history)` over a candidate set, in candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub probs: Vec<f64>,
    pub normalized: bool,
}

impl StepDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Fluency expert bound to one candidate set. The candidate-to-LM and
/// LM-to-cell maps are computed once so each step is a single pass over the
/// LM distribution.
#[derive(Debug, Clone)]
pub struct FluencyExpert<'a> {
    lm: &'a NgramLm,
    mode: SmoothingMode,
    /// LM id of every candidate, `None` when the LM cannot score it.
    candidate_ids: Vec<Option<u32>>,
    /// Owning candidate index of every LM id (cluster smoothing only).
    cell_of_lm_id: Vec<Option<u32>>,
}

impl<'a> FluencyExpert<'a> {
    pub fn new(
        lm: &'a NgramLm,
        candidates: &CandidateSet,
        partition: Option<&VoronoiPartition>,
        mode: SmoothingMode,
    ) -> Result<Self> {
        if let SmoothingMode::Temperature(t) = mode {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::NonPositiveTemperature(t));
            }
        }
        let end = candidates.end_marker();
        let candidate_ids = candidates
            .words()
            .iter()
            .map(|w| {
                if w == end {
                    Some(lm.eos_id())
                } else {
                    lm.query_id(w)
                }
            })
            .collect();

        let mut cell_of_lm_id = Vec::new();
        if mode == SmoothingMode::ClusterSmoothing {
            let partition = partition.ok_or(Error::PartitionMismatch)?;
            if !partition.built_from(candidates) {
                return Err(Error::PartitionMismatch);
            }
            let end_cell = candidates.position(end).map(|i| i as u32);
            cell_of_lm_id = (0..lm.vocab_size() as u32)
                .map(|id| {
                    if id == lm.eos_id() {
                        end_cell
                    } else if id == lm.bos_id() {
                        None
                    } else {
                        partition.owner_index(lm.word(id)).map(|i| i as u32)
                    }
                })
                .collect();
        }
        Ok(Self {
            lm,
            mode,
            candidate_ids,
            cell_of_lm_id,
        })
    }

    pub fn mode(&self) -> SmoothingMode {
        self.mode
    }

    pub fn lm(&self) -> &NgramLm {
        self.lm
    }

    pub fn step<S: AsRef<str>>(&self, history: &[S]) -> StepDistribution {
        let dist = self.lm.distribution(history);
        match self.mode {
            SmoothingMode::ClusterSmoothing => {
                let mut probs = vec![0.0; self.candidate_ids.len()];
                let mut dropped = 0.0;
                for (id, &p) in dist.iter().enumerate() {
                    match self.cell_of_lm_id[id] {
                        Some(c) => probs[c as usize] += p,
                        None => dropped += p,
                    }
                }
                // LM types without an embedding own no cell; spread their mass
                // proportionally so the result stays a distribution over C.
                if dropped > 0.0 {
                    let kept: f64 = probs.iter().sum();
                    if kept > 0.0 {
                        probs.iter_mut().for_each(|p| *p /= kept);
                    }
                }
                StepDistribution {
                    probs,
                    normalized: true,
                }
            }
            SmoothingMode::Temperature(t) => {
                let logits: Vec<f64> = self
                    .candidate_ids
                    .iter()
                    .map(|id| match id {
                        Some(id) => dist[*id as usize].ln() / t,
                        None => f64::NEG_INFINITY,
                    })
                    .collect();
                StepDistribution {
                    probs: softmax(&logits),
                    normalized: true,
                }
            }
            SmoothingMode::NoAdjustment => StepDistribution {
                probs: self
                    .candidate_ids
                    .iter()
                    .map(|id| id.map_or(0.0, |id| dist[id as usize]))
                    .collect(),
                normalized: false,
            },
        }
    }
}

/// Numerically stable softmax. All `-inf` inputs give the uniform distribution.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / logits.len() as f64; logits.len()];
    }
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// One-off version of [`FluencyExpert::step`].
pub fn fluency_step_dist<S: AsRef<str>>(
    lm: &NgramLm,
    history: &[S],
    candidates: &CandidateSet,
    partition: Option<&VoronoiPartition>,
    mode: SmoothingMode,
) -> Result<StepDistribution> {
    Ok(FluencyExpert::new(lm, candidates, partition, mode)?.step(history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::embeddings::{voronoi_partition, CandidateOrigin, EmbeddingTable};

    fn setup() -> (EmbeddingTable, NgramLm) {
        let table = EmbeddingTable::parse(
            "a 1 0 0\nb 0.9 0.2 0\nc 0 1 0\nd 0.1 0.9 0.3\ne 0 0 1\nf 0.2 0.1 0.95\n",
        )
        .unwrap();
        let corpus = Corpus::from_lines([
            "a b c", "c d e f", "a a d", "f e", "b c d", "e a", "d d f b",
        ])
        .unwrap();
        let lm = train_ngram_lm(&corpus, 2, 0.6).unwrap();
        (table, lm)
    }

    #[test]
    fn smoothing_mode_parse() {
        assert_eq!("cs".parse::<SmoothingMode>().unwrap(), SmoothingMode::ClusterSmoothing);
        assert_eq!("NA".parse::<SmoothingMode>().unwrap(), SmoothingMode::NoAdjustment);
        assert_eq!(
            "temp:5".parse::<SmoothingMode>().unwrap(),
            SmoothingMode::Temperature(5.0)
        );
        assert_eq!(
            "temp10".parse::<SmoothingMode>().unwrap(),
            SmoothingMode::Temperature(10.0)
        );
        assert!("x".parse::<SmoothingMode>().is_err());
        assert_eq!(SmoothingMode::Temperature(5.0).to_string(), "temp:5");
    }

    #[test]
    fn cs_with_full_candidate_set_is_raw_lm() {
        let (table, lm) = setup();
        let c = CandidateSet::new(table.words().to_vec(), "</s>", CandidateOrigin::Extractive);
        let p = voronoi_partition(&table, &c).unwrap();
        for h in [vec![], vec!["a"], vec!["c", "d"]] {
            let d = fluency_step_dist(&lm, &h, &c, Some(&p), SmoothingMode::ClusterSmoothing).unwrap();
            for (w, &prob) in c.words().iter().zip(&d.probs) {
                let raw = lm.conditional_prob(w, &h).unwrap();
                assert!((prob - raw).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cs_matches_bruteforce_cell_sums() {
        let (table, lm) = setup();
        let c = CandidateSet::new(["a", "e"], "</s>", CandidateOrigin::Extractive);
        let p = voronoi_partition(&table, &c).unwrap();
        let h = ["b"];
        let d = fluency_step_dist(&lm, &h, &c, Some(&p), SmoothingMode::ClusterSmoothing).unwrap();
        assert!(d.normalized);
        // brute force: nearest candidate per word by direct cosine, then sum
        let mut expect = [0.0f64; 3];
        for w in table.words() {
            let v = table.get(w).unwrap();
            let sa = crate::embeddings::cosine(v, table.get("a").unwrap()).unwrap();
            let se = crate::embeddings::cosine(v, table.get("e").unwrap()).unwrap();
            let slot = if w == "a" { 0 } else if w == "e" { 1 } else if sa >= se { 0 } else { 1 };
            expect[slot] += lm.conditional_prob(w, &h).unwrap();
        }
        expect[2] += lm.conditional_prob("</s>", &h).unwrap();
        for (got, want) in d.probs.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((d.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cs_needs_matching_partition() {
        let (table, lm) = setup();
        let c1 = CandidateSet::new(["a", "e"], "</s>", CandidateOrigin::Extractive);
        let c2 = CandidateSet::new(["a", "c"], "</s>", CandidateOrigin::Extractive);
        let p = voronoi_partition(&table, &c1).unwrap();
        let h: [&str; 0] = [];
        assert!(matches!(
            fluency_step_dist(&lm, &h, &c2, Some(&p), SmoothingMode::ClusterSmoothing),
            Err(Error::PartitionMismatch)
        ));
        assert!(matches!(
            fluency_step_dist(&lm, &h, &c2, None, SmoothingMode::ClusterSmoothing),
            Err(Error::PartitionMismatch)
        ));
    }

    #[test]
    fn temperature_modes() {
        let (_, lm) = setup();
        let c = CandidateSet::new(["a", "d", "f"], "</s>", CandidateOrigin::Extractive);
        let h = ["c"];
        let hot = fluency_step_dist(&lm, &h, &c, None, SmoothingMode::Temperature(1e6)).unwrap();
        for p in &hot.probs {
            assert!((p - 0.25).abs() < 1e-4);
        }
        // T = 1: restriction plus renormalization
        let one = fluency_step_dist(&lm, &h, &c, None, SmoothingMode::Temperature(1.0)).unwrap();
        let raw: Vec<f64> = c.words().iter().map(|w| lm.conditional_prob(w, &h).unwrap()).collect();
        let z: f64 = raw.iter().sum();
        for (p, r) in one.probs.iter().zip(&raw) {
            assert!((p - r / z).abs() < 1e-12);
        }
        assert!(matches!(
            fluency_step_dist(&lm, &h, &c, None, SmoothingMode::Temperature(0.0)),
            Err(Error::NonPositiveTemperature(_))
        ));
        assert!(matches!(
            fluency_step_dist(&lm, &h, &c, None, SmoothingMode::Temperature(-2.0)),
            Err(Error::NonPositiveTemperature(_))
        ));
    }

    #[test]
    fn no_adjustment_is_raw() {
        let (_, lm) = setup();
        let c = CandidateSet::new(["a", "zzz"], "</s>", CandidateOrigin::Extractive);
        let h = ["a"];
        let d = fluency_step_dist(&lm, &h, &c, None, SmoothingMode::NoAdjustment).unwrap();
        assert!(!d.normalized);
        assert_eq!(d.probs[0], lm.conditional_prob("a", &h).unwrap());
        assert_eq!(d.probs[1], 0.0);
        assert_eq!(d.probs[2], lm.conditional_prob("</s>", &h).unwrap());
    }

    #[test]
    fn cs_cell_order_irrelevant() {
        let (table, lm) = setup();
        let c = CandidateSet::new(["c", "a"], "</s>", CandidateOrigin::Extractive);
        let p = voronoi_partition(&table, &c).unwrap();
        let d = fluency_step_dist(&lm, &["e"], &c, Some(&p), SmoothingMode::ClusterSmoothing).unwrap();
        for (i, w) in c.words().iter().enumerate() {
            let mut members: Vec<&String> = p.cell(w).unwrap().iter().collect();
            members.reverse();
            let s: f64 = members
                .iter()
                .map(|m| lm.conditional_prob(m, &["e"]).unwrap_or(0.0))
                .sum();
            assert!((s - d.probs[i]).abs() < 1e-12);
        }
    }
}
