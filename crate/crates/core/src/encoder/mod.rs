//! Left-contextual prefix encoders.
//!
//! An encoder maps a token prefix to `L` hidden layers of width `d`. Layer 1
//! (`bot`) is a context-free word embedding; higher layers depend on the
//! whole prefix. States are plain values: advancing a copy never touches
//! the original, which is what beam search relies on.

mod builtin;
mod precomputed;

use std::fmt;
use std::str::FromStr;

pub use builtin::{BuiltinConfig, BuiltinEncoder};
pub use precomputed::{write_precomputed, PrecomputedEncoder, PrecomputedSequence};

use crate::corpus::BEGIN_MARKER;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Hash of a token prefix, extended one token at a time. A leading begin
/// symbol is not part of the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrefixKey(u64);

impl PrefixKey {
    pub const EMPTY: PrefixKey = PrefixKey(FNV_OFFSET);

    pub fn extend(self, token: &str) -> PrefixKey {
        let mut h = self.0;
        for &b in token.as_bytes().iter().chain(std::iter::once(&0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        PrefixKey(h)
    }

    pub fn of<S: AsRef<str>>(tokens: &[S]) -> PrefixKey {
        tokens
            .iter()
            .fold(PrefixKey::EMPTY, |k, t| k.extend(t.as_ref()))
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

/// Hidden layers after consuming some prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    layers: usize,
    dim: usize,
    /// Layer-major, `layers * dim` values; index 0 is the bottom layer.
    hidden: Vec<f64>,
    count: usize,
    key: PrefixKey,
}

impl EncoderState {
    pub(crate) fn zeros(layers: usize, dim: usize) -> Self {
        Self {
            layers,
            dim,
            hidden: vec![0.0; layers * dim],
            count: 0,
            key: PrefixKey::EMPTY,
        }
    }

    pub(crate) fn successor(&self, token: &str, hidden: Vec<f64>) -> Self {
        let key = if self.count == 0 && token == BEGIN_MARKER {
            self.key
        } else {
            self.key.extend(token)
        };
        Self {
            layers: self.layers,
            dim: self.dim,
            hidden,
            count: self.count + 1,
            key,
        }
    }

    /// Tokens consumed so far, the begin symbol included.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn key(&self) -> PrefixKey {
        self.key
    }

    pub fn num_layers(&self) -> usize {
        self.layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Layer `l`, 0-based from the bottom.
    pub fn layer(&self, l: usize) -> &[f64] {
        &self.hidden[l * self.dim..(l + 1) * self.dim]
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }
}

/// Which layers form the prefix vector compared by the matcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayerCombo {
    #[default]
    Cat,
    Avg,
    Top,
    Mid,
    Bot,
}

impl LayerCombo {
    pub fn name(self) -> &'static str {
        match self {
            LayerCombo::Cat => "cat",
            LayerCombo::Avg => "avg",
            LayerCombo::Top => "top",
            LayerCombo::Mid => "mid",
            LayerCombo::Bot => "bot",
        }
    }

    fn min_layers(self) -> usize {
        match self {
            LayerCombo::Avg | LayerCombo::Mid => 3,
            _ => 1,
        }
    }

    pub fn check(self, layers: usize) -> Result<()> {
        if layers < self.min_layers() {
            return Err(Error::ComboUnsupported {
                combo: self.name(),
                needed: self.min_layers(),
                layers,
            });
        }
        Ok(())
    }

    /// Length of the prefix vector for an `layers x dim` encoder.
    pub fn output_dim(self, layers: usize, dim: usize) -> usize {
        match self {
            LayerCombo::Cat => layers * dim,
            _ => dim,
        }
    }
}

impl fmt::Display for LayerCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerCombo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cat" => Ok(LayerCombo::Cat),
            "avg" => Ok(LayerCombo::Avg),
            "top" => Ok(LayerCombo::Top),
            "mid" => Ok(LayerCombo::Mid),
            "bot" => Ok(LayerCombo::Bot),
            _ => Err(format!("unknown layer combination {s:?} (cat, avg, top, mid, bot)")),
        }
    }
}

/// Combines the layers of `state` into one vector.
pub fn prefix_vector(state: &EncoderState, combo: LayerCombo) -> Result<Vec<f64>> {
    if state.count == 0 {
        return Err(Error::EmptyPrefix);
    }
    combo.check(state.layers)?;
    let l = state.layers;
    Ok(match combo {
        LayerCombo::Cat => state.hidden.clone(),
        LayerCombo::Bot => state.layer(0).to_vec(),
        LayerCombo::Top => state.layer(l - 1).to_vec(),
        LayerCombo::Mid => state.layer((l - 1) / 2).to_vec(),
        LayerCombo::Avg => {
            let mut out = vec![0.0; state.dim];
            for i in 0..l {
                for (o, v) in out.iter_mut().zip(state.layer(i)) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|o| *o /= l as f64);
            out
        }
    })
}

/// A left-to-right prefix encoder.
pub trait ContextEncoder: Send + Sync {
    fn num_layers(&self) -> usize;

    fn dim(&self) -> usize;

    /// State before any token: zero vectors, count 0.
    fn start(&self) -> EncoderState {
        EncoderState::zeros(self.num_layers(), self.dim())
    }

    /// State after consuming `token`. Pure: same input state and token give
    /// the same output.
    fn advance(&self, state: &EncoderState, token: &str) -> Result<EncoderState>;

    /// Start state advanced over the begin symbol. Source and target
    /// encodings both start here.
    fn begin(&self) -> Result<EncoderState> {
        self.advance(&self.start(), BEGIN_MARKER)
    }

    fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<EncoderState>
    where
        Self: Sized,
    {
        let mut s = self.begin()?;
        for t in tokens {
            s = self.advance(&s, t.as_ref())?;
        }
        Ok(s)
    }
}

/// Backend selection for [`encoder_init`].
#[derive(Debug, Clone)]
pub enum EncoderBackend {
    Builtin(BuiltinConfig),
    Precomputed(std::path::PathBuf),
}

/// Either backend behind one concrete type.
#[derive(Debug, Clone)]
pub enum Encoder {
    Builtin(BuiltinEncoder),
    Precomputed(PrecomputedEncoder),
}

pub fn encoder_init(backend: &EncoderBackend) -> Result<Encoder> {
    Ok(match backend {
        EncoderBackend::Builtin(cfg) => Encoder::Builtin(BuiltinEncoder::new(cfg.clone(), None)?),
        EncoderBackend::Precomputed(path) => Encoder::Precomputed(PrecomputedEncoder::load(path)?),
    })
}

impl ContextEncoder for Encoder {
    fn num_layers(&self) -> usize {
        match self {
            Encoder::Builtin(e) => e.num_layers(),
            Encoder::Precomputed(e) => e.num_layers(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Encoder::Builtin(e) => e.dim(),
            Encoder::Precomputed(e) => e.dim(),
        }
    }

    fn advance(&self, state: &EncoderState, token: &str) -> Result<EncoderState> {
        match self {
            Encoder::Builtin(e) => e.advance(state, token),
            Encoder::Precomputed(e) => e.advance(state, token),
        }
    }
}
