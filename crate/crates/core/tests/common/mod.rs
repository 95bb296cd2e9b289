#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use ctxsum::corpus::load_corpus;
use ctxsum::embeddings::{load_embeddings, EmbeddingTable};
use ctxsum::encoder::{BuiltinConfig, BuiltinEncoder};
use ctxsum::fluency::{train_ngram_lm, NgramLm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub struct Toy {
    pub table: Arc<EmbeddingTable>,
    pub lm: NgramLm,
    pub encoder: BuiltinEncoder,
}

/// Toy table, trigram LM on the 50-line toy corpus, seeded builtin encoder.
pub fn toy() -> Toy {
    let table = Arc::new(load_embeddings(fixture("toy_embeddings.txt")).unwrap());
    let corpus = load_corpus(fixture("toy_corpus.txt")).unwrap();
    let lm = train_ngram_lm(&corpus, 3, 0.75).unwrap();
    let encoder = BuiltinEncoder::new(
        BuiltinConfig {
            seed: 17,
            layers: 3,
            dim: table.dim(),
            ..Default::default()
        },
        Some(table.clone()),
    )
    .unwrap();
    Toy { table, lm, encoder }
}

/// Seeded synthetic sentences over the toy vocabulary, with occasional
/// unknown words, capitalization and final periods.
pub fn synthetic_sentences(n: usize, seed: u64) -> Vec<String> {
    let table = load_embeddings(fixture("toy_embeddings.txt")).unwrap();
    let words = table.words();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..=12);
            let mut toks: Vec<String> = (0..len)
                .map(|_| {
                    if rng.gen_bool(0.03) {
                        format!("zz{}", rng.gen_range(0..5))
                    } else {
                        words[rng.gen_range(0..words.len())].clone()
                    }
                })
                .collect();
            if rng.gen_bool(0.3) {
                let first = toks[0].clone();
                toks[0] = first[..1].to_uppercase() + &first[1..];
            }
            let mut s = toks.join(" ");
            if rng.gen_bool(0.5) {
                s.push_str(" .");
            }
            s
        })
        .collect()
}
