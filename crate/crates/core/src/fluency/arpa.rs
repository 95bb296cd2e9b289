//! ARPA text format for [`NgramLm`]: `\data\` counts, one `\N-grams:`
//! section per order with log10 probabilities and backoff weights.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::ngram::{NgramEntry, NgramLm, UNK};
use crate::corpus::{BEGIN_MARKER, END_MARKER};
use crate::error::{Error, Result};

/// log10 value written for zero probabilities and backoff weights.
const LOG_ZERO: f64 = -99.0;

fn log10_or_zero(p: f64) -> f64 {
    if p > 0.0 {
        p.log10()
    } else {
        LOG_ZERO
    }
}

fn exp10_or_zero(l: f64) -> f64 {
    if l <= LOG_ZERO {
        0.0
    } else {
        10f64.powf(l)
    }
}

impl NgramLm {
    pub fn write_arpa<W: Write>(&self, mut out: W) -> io::Result<()> {
        let uni_keys: Vec<[u32; 1]> = (0..self.uni.len() as u32).map(|i| [i]).collect();
        let mut sections: Vec<Vec<(&[u32], NgramEntry)>> = Vec::with_capacity(self.order);
        sections.push(
            uni_keys
                .iter()
                .zip(&self.uni)
                .map(|(k, e)| (&k[..], *e))
                .collect(),
        );
        for table in &self.higher {
            let mut rows: Vec<(&[u32], NgramEntry)> =
                table.iter().map(|(k, e)| (&k[..], *e)).collect();
            rows.sort_by(|a, b| a.0.cmp(b.0));
            sections.push(rows);
        }

        writeln!(out, "\\data\\")?;
        for (n, rows) in sections.iter().enumerate() {
            writeln!(out, "ngram {}={}", n + 1, rows.len())?;
        }
        for (n, rows) in sections.iter().enumerate() {
            let has_context_slot = n + 1 < self.order;
            writeln!(out)?;
            writeln!(out, "\\{}-grams:", n + 1)?;
            for (key, e) in rows {
                let words: Vec<&str> = key.iter().map(|&id| self.word(id)).collect();
                write!(out, "{}\t{}", log10_or_zero(e.prob), words.join(" "))?;
                if has_context_slot && self.followers[n].contains_key(*key) {
                    write!(out, "\t{}", log10_or_zero(e.bow))?;
                }
                writeln!(out)?;
            }
        }
        writeln!(out)?;
        writeln!(out, "\\end\\")?;
        Ok(())
    }

    pub fn save_arpa(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = io::BufWriter::new(file);
        self.write_arpa(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_arpa(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_arpa(&text)
    }

    pub fn parse_arpa(text: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Arpa {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

        // header
        let mut declared: Vec<usize> = Vec::new();
        let mut in_data = false;
        let mut last_line = 0;
        for (no, line) in lines.by_ref() {
            last_line = no;
            if line.is_empty() {
                if in_data && !declared.is_empty() {
                    break;
                }
                continue;
            }
            if line == "\\data\\" {
                in_data = true;
                continue;
            }
            if !in_data {
                continue;
            }
            let rest = line
                .strip_prefix("ngram ")
                .ok_or_else(|| err(no, "expected `ngram N=count`"))?;
            let (n, c) = rest
                .split_once('=')
                .ok_or_else(|| err(no, "expected `ngram N=count`"))?;
            let n: usize = n.trim().parse().map_err(|_| err(no, "bad order"))?;
            let c: usize = c.trim().parse().map_err(|_| err(no, "bad count"))?;
            if n != declared.len() + 1 {
                return Err(err(no, "orders must be listed 1, 2, ..."));
            }
            declared.push(c);
        }
        let order = declared.len();
        if order == 0 {
            return Err(err(last_line, "missing \\data\\ section"));
        }
        if order > 5 {
            return Err(Error::BadOrder(order));
        }

        let mut vocab: IndexMap<String, u32> = IndexMap::new();
        let mut uni: Vec<NgramEntry> = Vec::new();
        let mut higher: Vec<HashMap<Box<[u32]>, NgramEntry>> = vec![HashMap::new(); order - 1];
        let mut current = 0usize;
        let mut seen_end = false;

        for (no, line) in lines {
            if line.is_empty() {
                continue;
            }
            if line == "\\end\\" {
                seen_end = true;
                break;
            }
            if let Some(h) = line.strip_prefix('\\') {
                let n = h
                    .strip_suffix("-grams:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| err(no, "expected `\\N-grams:`"))?;
                if n != current + 1 || n > order {
                    return Err(err(no, "unexpected section"));
                }
                current = n;
                continue;
            }
            if current == 0 {
                return Err(err(no, "n-gram row outside a section"));
            }
            let mut fields = line.split_whitespace();
            let logp: f64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| err(no, "bad log probability"))?;
            let words: Vec<&str> = fields.by_ref().take(current).collect();
            if words.len() != current {
                return Err(err(no, "too few words"));
            }
            let bow = match fields.next() {
                Some(f) => Some(f.parse::<f64>().map_err(|_| err(no, "bad backoff weight"))?),
                None => None,
            };
            if fields.next().is_some() {
                return Err(err(no, "trailing fields"));
            }
            let entry = NgramEntry {
                prob: exp10_or_zero(logp),
                bow: bow.map_or(1.0, exp10_or_zero),
            };
            if current == 1 {
                let next = vocab.len() as u32;
                if vocab.insert(words[0].to_string(), next).is_some() {
                    return Err(Error::DuplicateWord(words[0].to_string()));
                }
                uni.push(entry);
            } else {
                let key: Box<[u32]> = words
                    .iter()
                    .map(|w| vocab.get(*w).copied().ok_or_else(|| err(no, "word missing from unigrams")))
                    .collect::<Result<Vec<_>>>()?
                    .into();
                higher[current - 2].insert(key, entry);
            }
        }
        if !seen_end {
            return Err(err(last_line, "missing \\end\\"));
        }
        if uni.len() != declared[0] || higher.iter().zip(&declared[1..]).any(|(t, &c)| t.len() != c) {
            return Err(err(last_line, "section sizes differ from \\data\\ counts"));
        }
        let bos = *vocab
            .get(BEGIN_MARKER)
            .ok_or_else(|| err(last_line, "missing <s> unigram"))?;
        let eos = *vocab
            .get(END_MARKER)
            .ok_or_else(|| err(last_line, "missing </s> unigram"))?;
        let unk = vocab.get(UNK).copied();
        uni[bos as usize].prob = 0.0;

        let mut followers: Vec<HashMap<Box<[u32]>, Vec<(u32, f64)>>> =
            vec![HashMap::new(); order - 1];
        for (i, table) in higher.iter().enumerate() {
            let mut keys: Vec<&Box<[u32]>> = table.keys().collect();
            keys.sort();
            for key in keys {
                let n = key.len();
                followers[i]
                    .entry(key[..n - 1].into())
                    .or_insert_with(Vec::new)
                    .push((key[n - 1], table[key].prob));
            }
        }

        Ok(NgramLm {
            order,
            discount: None,
            vocab,
            bos,
            eos,
            unk,
            uni,
            higher,
            followers,
        })
    }
}
