use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ContextEncoder, EncoderState};
use crate::corpus::{BEGIN_MARKER, END_MARKER};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinConfig {
    pub seed: u64,
    pub layers: usize,
    pub dim: usize,
    pub spectral_radius: f64,
    pub bias_scale: f64,
    /// Map tokens without an embedding to a fixed seeded vector instead of failing.
    pub unk: bool,
}

impl Default for BuiltinConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            layers: 3,
            dim: 512,
            spectral_radius: 0.9,
            bias_scale: 0.1,
            unk: true,
        }
    }
}

/// Untrained echo-state style encoder with fixed seeded weights.
///
/// The bottom layer is the token's embedding, either looked up in a table
/// or derived from a hash of the token. Each higher layer `l` computes
/// `tanh(W_in[l] u + W_rec[l] h_prev + b[l])` where `u` is the unit-normalized
/// layer below and `W_rec` is scaled to the configured spectral radius.
#[derive(Debug, Clone)]
pub struct BuiltinEncoder {
    cfg: BuiltinConfig,
    table: Option<Arc<EmbeddingTable>>,
    w_in: Vec<Vec<f64>>,
    w_rec: Vec<Vec<f64>>,
    bias: Vec<Vec<f64>>,
    unk_vec: Vec<f64>,
}

impl PartialEq for BuiltinEncoder {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg
            && self.w_in == other.w_in
            && self.w_rec == other.w_rec
            && self.bias == other.bias
            && self.unk_vec == other.unk_vec
    }
}

impl BuiltinEncoder {
    /// With a table, the bottom layer uses its rows and `dim` must match the
    /// table dimension.
    pub fn new(cfg: BuiltinConfig, table: Option<Arc<EmbeddingTable>>) -> Result<Self> {
        if cfg.layers == 0 || cfg.dim == 0 {
            return Err(Error::BadEncoderConfig(
                "layers and dim must be at least 1".into(),
            ));
        }
        if let Some(t) = &table {
            if t.dim() != cfg.dim {
                return Err(Error::BadEncoderConfig(format!(
                    "dim {} does not match embedding dimension {}",
                    cfg.dim,
                    t.dim()
                )));
            }
        }
        let d = cfg.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut uniform = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect()
        };
        let mut w_in = Vec::new();
        let mut w_rec = Vec::new();
        let mut bias = Vec::new();
        for _ in 1..cfg.layers {
            w_in.push(uniform(d * d, 1.0));
            let mut rec = uniform(d * d, 1.0);
            let rho = spectral_radius(&rec, d);
            if rho > 0.0 {
                let s = cfg.spectral_radius / rho;
                rec.iter_mut().for_each(|w| *w *= s);
            }
            w_rec.push(rec);
            bias.push(uniform(d, cfg.bias_scale));
        }
        let unk_vec = uniform(d, 1.0);
        Ok(Self {
            cfg,
            table,
            w_in,
            w_rec,
            bias,
            unk_vec,
        })
    }

    pub fn config(&self) -> &BuiltinConfig {
        &self.cfg
    }

    /// Fixed bottom-layer vector of `token`.
    pub fn embed(&self, token: &str) -> Result<Vec<f64>> {
        match &self.table {
            None => Ok(self.hashed(token)),
            Some(t) => {
                if let Some(row) = t.get(token) {
                    Ok(row.to_vec())
                } else if token == BEGIN_MARKER || token == END_MARKER {
                    Ok(self.hashed(token))
                } else if self.cfg.unk {
                    Ok(self.unk_vec.clone())
                } else {
                    Err(Error::UnknownToken(token.to_string()))
                }
            }
        }
    }

    fn hashed(&self, token: &str) -> Vec<f64> {
        let key = super::PrefixKey::EMPTY.extend(token).value();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ key.rotate_left(17));
        (0..self.cfg.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

fn matvec_add(m: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(d)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = crate::embeddings::norm(v);
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Spectral radius estimate from the average growth rate of repeated
/// multiplication (Gelfand's formula), which also converges when the
/// dominant eigenvalues form a complex pair.
fn spectral_radius(m: &[f64], d: usize) -> f64 {
    const WARMUP: usize = 50;
    const STEPS: usize = 300;
    let mut x: Vec<f64> = (0..d).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let n = crate::embeddings::norm(&x);
    x.iter_mut().for_each(|v| *v /= n);
    let mut log_growth = 0.0;
    for step in 0..WARMUP + STEPS {
        let mut y = vec![0.0; d];
        matvec_add(m, &x, &mut y);
        let n = crate::embeddings::norm(&y);
        if n == 0.0 {
            return 0.0;
        }
        if step >= WARMUP {
            log_growth += n.ln();
        }
        x = y.into_iter().map(|v| v / n).collect();
    }
    (log_growth / STEPS as f64).exp()
}

impl ContextEncoder for BuiltinEncoder {
    fn num_layers(&self) -> usize {
        self.cfg.layers
    }

    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn advance(&self, state: &EncoderState, token: &str) -> Result<EncoderState> {
        let d = self.cfg.dim;
        let mut hidden = Vec::with_capacity(self.cfg.layers * d);
        hidden.extend(self.embed(token)?);
        for l in 1..self.cfg.layers {
            let input = unit(&hidden[(l - 1) * d..l * d]);
            let mut pre = self.bias[l - 1].clone();
            matvec_add(&self.w_in[l - 1], &input, &mut pre);
            matvec_add(&self.w_rec[l - 1], state.layer(l), &mut pre);
            hidden.extend(pre.into_iter().map(f64::tanh));
        }
        Ok(state.successor(token, hidden))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{prefix_vector, LayerCombo};

    fn small(seed: u64, layers: usize) -> BuiltinEncoder {
        BuiltinEncoder::new(
            BuiltinConfig {
                seed,
                layers,
                dim: 8,
                ..Default::default()
            },
            None,
        )
        .unwrap()
    }

    #[test]
    fn seeded_weights_are_reproducible() {
        assert_eq!(small(7, 3), small(7, 3));
        assert_ne!(small(7, 3), small(8, 3));
    }

    #[test]
    fn spectral_scaling() {
        let e = small(3, 3);
        for w in &e.w_rec {
            let rho = spectral_radius(w, 8);
            assert!((rho - 0.9).abs() < 0.05, "rho = {rho}");
        }
    }

    #[test]
    fn start_and_advance() {
        let e = small(7, 3);
        let s0 = e.start();
        assert_eq!(s0.count(), 0);
        assert_eq!(s0, e.start());
        let s1 = e.advance(&s0, "a").unwrap();
        assert_ne!(s1, s0);
        assert_eq!(s1.count(), 1);
        assert_eq!(e.advance(&s0, "a").unwrap(), s1);
    }

    #[test]
    fn bottom_layer_is_context_free() {
        let e = small(7, 3);
        let h1 = e.encode(&["x", "y"]).unwrap();
        let h2 = e.encode(&["q", "r", "s"]).unwrap();
        let a = e.advance(&h1, "t").unwrap();
        let b = e.advance(&h2, "t").unwrap();
        assert_eq!(a.layer(0), b.layer(0));
        assert_eq!(a.layer(0), e.embed("t").unwrap().as_slice());
        assert_ne!(a.layer(2), b.layer(2));
        assert_eq!(
            prefix_vector(&a, LayerCombo::Bot).unwrap(),
            e.embed("t").unwrap()
        );
    }

    #[test]
    fn branching_is_order_independent() {
        let e = small(11, 3);
        let base = e.encode(&["a", "b"]).unwrap();
        let first = e.advance(&base, "c").unwrap();
        let second = e.advance(&base, "d").unwrap();
        let second_again = e.advance(&base, "d").unwrap();
        let first_again = e.advance(&base, "c").unwrap();
        assert_eq!(first, first_again);
        assert_eq!(second, second_again);
        // incremental and one-pass encodings agree
        assert_eq!(e.encode(&["a", "b", "c"]).unwrap(), first);
    }

    #[test]
    fn table_backed_bottom_layer() {
        let t = Arc::new(EmbeddingTable::parse("a 1 0\nb 0 1\n").unwrap());
        let cfg = BuiltinConfig {
            seed: 1,
            layers: 2,
            dim: 2,
            unk: false,
            ..Default::default()
        };
        let e = BuiltinEncoder::new(cfg.clone(), Some(t.clone())).unwrap();
        assert_eq!(e.embed("a").unwrap(), [1.0, 0.0]);
        assert!(e.embed("</s>").is_ok());
        assert!(matches!(e.embed("zz"), Err(Error::UnknownToken(_))));
        let e = BuiltinEncoder::new(BuiltinConfig { unk: true, ..cfg.clone() }, Some(t.clone())).unwrap();
        assert_eq!(e.embed("zz").unwrap(), e.embed("yy").unwrap());
        assert!(BuiltinEncoder::new(BuiltinConfig { dim: 3, ..cfg }, Some(t)).is_err());
    }

    #[test]
    fn bad_config() {
        assert!(BuiltinEncoder::new(
            BuiltinConfig {
                layers: 0,
                ..Default::default()
            },
            None
        )
        .is_err());
    }

    #[test]
    fn cat_self_similarity() {
        let e = small(5, 3);
        let s = e.encode(&["a", "b", "c"]).unwrap();
        let v = prefix_vector(&s, LayerCombo::Cat).unwrap();
        assert_eq!(v.len(), 24);
        assert!((crate::embeddings::cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }
}
