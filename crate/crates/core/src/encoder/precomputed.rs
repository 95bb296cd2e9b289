//! Loader (and writer) for externally exported prefix states.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! header:   "PFXS" | version u16 | layers u16 | dim u32 | sequences u32
//! sequence: tokens u32 | tokens x (len u32 | utf-8 bytes) | tokens x layers x dim f32
//! ```
//!
//! The states of a sequence are stored per prefix length `1..=tokens`,
//! bottom layer first. A companion `<file>.idx` text file lists
//! `<prefix-key hex> <byte offset>` for every sequence.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{ContextEncoder, EncoderState, PrefixKey};
use crate::corpus::BEGIN_MARKER;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PFXS";
pub const VERSION: u16 = 1;

/// One exported sentence: its tokens and the flattened per-prefix states.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedSequence {
    pub tokens: Vec<String>,
    /// `tokens.len() * layers * dim` values.
    pub states: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct PrecomputedEncoder {
    layers: usize,
    dim: usize,
    states: HashMap<PrefixKey, Vec<f32>>,
    sequences: usize,
}

fn index_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".idx");
    PathBuf::from(p)
}

/// Writes the binary file and its index.
pub fn write_precomputed(
    path: impl AsRef<Path>,
    layers: usize,
    dim: usize,
    sequences: &[PrecomputedSequence],
) -> Result<()> {
    let path = path.as_ref();
    let layers16 = u16::try_from(layers)
        .map_err(|_| Error::Format(format!("too many layers: {layers}")))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&layers16.to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(sequences.len() as u32).to_le_bytes());
    let mut index = String::new();
    for seq in sequences {
        if seq.states.len() != seq.tokens.len() * layers * dim {
            return Err(Error::Format(format!(
                "sequence has {} state values, expected {}",
                seq.states.len(),
                seq.tokens.len() * layers * dim
            )));
        }
        index.push_str(&format!(
            "{:016x} {}\n",
            PrefixKey::of(&seq.tokens).value(),
            buf.len()
        ));
        buf.extend_from_slice(&(seq.tokens.len() as u32).to_le_bytes());
        for t in &seq.tokens {
            buf.extend_from_slice(&(t.len() as u32).to_le_bytes());
            buf.extend_from_slice(t.as_bytes());
        }
        for v in &seq.states {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;
    let idx = index_path(path);
    let mut f = fs::File::create(&idx).map_err(|e| Error::io(&idx, e))?;
    f.write_all(index.as_bytes()).map_err(|e| Error::io(&idx, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated file: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl PrecomputedEncoder {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (enc, offsets) = Self::parse(&bytes)?;
        let idx = index_path(path);
        if idx.exists() {
            let text = fs::read_to_string(&idx).map_err(|e| Error::io(&idx, e))?;
            let expected: Vec<(u64, usize)> = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    let (h, o) = l
                        .split_once(' ')
                        .ok_or_else(|| Error::Format(format!("bad index line {l:?}")))?;
                    let h = u64::from_str_radix(h, 16)
                        .map_err(|_| Error::Format(format!("bad index hash {h:?}")))?;
                    let o = o
                        .trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad index offset {o:?}")))?;
                    Ok((h, o))
                })
                .collect::<Result<_>>()?;
            if expected != offsets {
                return Err(Error::Format("index does not match state file".into()));
            }
        }
        Ok(enc)
    }

    /// Parses the binary format, returning the encoder and the
    /// (sequence key, offset) pairs seen.
    pub fn parse(bytes: &[u8]) -> Result<(Self, Vec<(u64, usize)>)> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic, expected PFXS".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let layers = r.u16()? as usize;
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        if layers == 0 || dim == 0 {
            return Err(Error::Format("layers and dim must be positive".into()));
        }
        let width = layers * dim;
        let mut states: HashMap<PrefixKey, Vec<f32>> = HashMap::new();
        let mut offsets = Vec::with_capacity(count);
        for _ in 0..count {
            let offset = r.pos;
            let n = r.u32()? as usize;
            let mut tokens = Vec::with_capacity(n);
            for _ in 0..n {
                let len = r.u32()? as usize;
                let t = std::str::from_utf8(r.take(len)?)
                    .map_err(|e| Error::Format(format!("token is not UTF-8: {e}")))?;
                tokens.push(t.to_string());
            }
            let raw = r.take(n * width * 4)?;
            let mut key = PrefixKey::EMPTY;
            for (j, t) in tokens.iter().enumerate() {
                key = key.extend(t);
                let v: Vec<f32> = raw[j * width * 4..(j + 1) * width * 4]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                match states.get(&key) {
                    Some(prev) if prev.iter().map(|x| x.to_bits()).ne(v.iter().map(|x| x.to_bits())) => {
                        return Err(Error::Format(format!(
                            "conflicting states for a shared prefix ending in {t:?}"
                        )));
                    }
                    Some(_) => {}
                    None => {
                        states.insert(key, v);
                    }
                }
            }
            offsets.push((key.value(), offset));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after {count} sequences; header does not match contents",
                bytes.len() - r.pos
            )));
        }
        Ok((
            Self {
                layers,
                dim,
                states,
                sequences: count,
            },
            offsets,
        ))
    }

    pub fn sequences(&self) -> usize {
        self.sequences
    }

    /// Stored state for a prefix, as written.
    pub fn raw_state(&self, key: PrefixKey) -> Option<&[f32]> {
        self.states.get(&key).map(Vec::as_slice)
    }
}

impl ContextEncoder for PrecomputedEncoder {
    fn num_layers(&self) -> usize {
        self.layers
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn advance(&self, state: &EncoderState, token: &str) -> Result<EncoderState> {
        // exported states are already conditioned on the sentence start
        if state.count() == 0 && token == BEGIN_MARKER {
            return Ok(state.successor(token, vec![0.0; self.layers * self.dim]));
        }
        let key = state.key().extend(token);
        let v = self
            .states
            .get(&key)
            .ok_or_else(|| Error::MissingPrecomputedState(token.to_string()))?;
        Ok(state.successor(token, v.iter().map(|&x| x as f64).collect()))
    }
}
