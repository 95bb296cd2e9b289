//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors (bad flags, unreadable inputs, mismatched files).

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::corpus::{load_corpus, normalize_tokens, PreprocessOptions};
use crate::decoder::DecoderConfig;
use crate::embeddings::{load_embeddings, NeighborCache};
use crate::encoder::{BuiltinConfig, BuiltinEncoder, Encoder, LayerCombo, PrecomputedEncoder};
use crate::error::Error;
use crate::eval::{score_pair, Metric, MetricReport};
use crate::fluency::{NgramLm, SmoothingMode, TrainOptions};
use crate::pipeline::{reference_tokens, CandidateMode, PoolRecord, Summarizer, SummarizerConfig, SummaryRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ctxsum",
    version,
    about = "Unsupervised sentence summarization by contextual matching",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an n-gram fluency model and write it as ARPA.
    TrainLm(TrainLmArgs),
    /// Summarize one sentence per line, writing JSON lines.
    Summarize(SummarizeArgs),
    /// Score predictions against references.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    /// Training corpus, one sentence per line.
    pub corpus: PathBuf,
    /// Output ARPA file.
    pub output: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=5))]
    pub order: u8,
    #[arg(long, default_value_t = 0.75)]
    pub discount: f64,
    /// Add an <unk> type.
    #[arg(long)]
    pub unk: bool,
    /// Add every word of this embedding file to the vocabulary.
    #[arg(long, value_name = "EMBEDDINGS")]
    pub vocab_from: Option<PathBuf>,
    /// Held-out sentences for a perplexity report.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// key=value defaults for any long flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Input sentences, one per line.
    pub input: PathBuf,
    /// Word embeddings (`word v1 .. vD`).
    pub embeddings: PathBuf,
    /// Fluency model in ARPA format.
    pub lm: PathBuf,
    /// Output JSON lines; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Separate embeddings for the Voronoi partition.
    #[arg(long)]
    pub output_embeddings: Option<PathBuf>,
    /// Precomputed neighbor lists (`word: n1 n2 ..`).
    #[arg(long)]
    pub neighbors: Option<PathBuf>,
    #[arg(long, default_value_t = CandidateMode::Abstractive)]
    pub mode: CandidateMode,
    #[arg(long, default_value_t = 0.11)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long, default_value_t = LayerCombo::Cat)]
    pub combo: LayerCombo,
    /// cs, temp:<T> or na.
    #[arg(long, default_value_t = SmoothingMode::ClusterSmoothing)]
    pub smoothing: SmoothingMode,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Reference summaries; adds `oracle_summary` to each record.
    #[arg(long, value_name = "REFERENCES")]
    pub oracle: Option<PathBuf>,
    #[arg(long, default_value_t = Metric::RougeL)]
    pub oracle_metric: Metric,
    /// Write every finished hypothesis to this JSON-lines file.
    #[arg(long)]
    pub dump_pool: Option<PathBuf>,
    /// Prefix states exported by an external encoder, used instead of the
    /// builtin encoder.
    #[arg(long)]
    pub precomputed: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    /// Keep sentence-final periods.
    #[arg(long)]
    pub keep_periods: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions: summarizer JSON lines or plain text.
    pub predictions: PathBuf,
    /// References, one per line.
    pub references: PathBuf,
    /// Source sentences for the compression rate; defaults to the `source`
    /// field of JSON predictions.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Also print per-pair scores.
    #[arg(long)]
    pub per_pair: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. }
            | Error::LineCountMismatch { .. }
            | Error::BadConfig(_)
            | Error::BadOrder(_)
            | Error::BadDiscount(_)
            | Error::BadEncoderConfig(_)
            | Error::ComboUnsupported { .. }
            | Error::NonPositiveTemperature(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Reads `key = value` lines into `--key value` arguments. `key = true`
/// becomes a bare `--key`; `false` drops it.
pub fn config_args(path: &Path) -> CliResult<Vec<OsString>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::usage(format!("{}:{}: expected key=value", path.display(), i + 1))
        })?;
        let key = k.trim().replace('_', "-");
        let v = v.trim();
        if key == "config" {
            return Err(CliError::usage(format!(
                "{}:{}: config files cannot include other config files",
                path.display(),
                i + 1
            )));
        }
        match v {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => out.push(format!("--{key}={v}").into()),
        }
    }
    Ok(out)
}

/// Inserts config-file arguments right after the subcommand so that flags
/// given on the command line take precedence.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut config = None;
    let mut iter = args.iter().enumerate();
    while let Some((i, a)) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if s == "--" {
            break;
        }
    }
    let Some(path) = config else {
        return Ok(args);
    };
    let extra = config_args(&path)?;
    let sub = args
        .iter()
        .position(|a| matches!(a.to_str(), Some("train-lm" | "summarize" | "eval")))
        .unwrap_or(0);
    let mut out: Vec<OsString> = args[..=sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

/// Parses and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return e.code;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::TrainLm(a) => train_lm(a),
        Command::Summarize(a) => summarize(a),
        Command::Eval(a) => eval(a),
    }
}

fn require_file(p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{}: no such file", p.display())))
    }
}

fn read_lines(p: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    let mut lines: Vec<String> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    Ok(lines)
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).map_err(|e| Error::io(p, e))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_err(e: io::Error) -> CliError {
    CliError {
        code: EXIT_FAILURE,
        message: format!("write failed: {e}"),
    }
}

fn train_lm(a: TrainLmArgs) -> CliResult<()> {
    require_file(&a.corpus)?;
    for p in a.vocab_from.iter().chain(&a.dev) {
        require_file(p)?;
    }
    if !(0.0..1.0).contains(&a.discount) {
        return Err(CliError::usage(format!(
            "--discount must be in [0, 1), got {}",
            a.discount
        )));
    }
    let corpus = load_corpus(&a.corpus)?;
    let extra_vocab = match &a.vocab_from {
        Some(p) => load_embeddings(p)?.words().to_vec(),
        None => Vec::new(),
    };
    let lm = NgramLm::train(
        &corpus,
        &TrainOptions {
            order: a.order as usize,
            discount: a.discount,
            unk: a.unk,
            extra_vocab,
        },
    )?;
    lm.save_arpa(&a.output)?;
    eprintln!(
        "trained order-{} model on {} sentences, vocabulary {}",
        lm.order(),
        corpus.sentences.len(),
        lm.vocab_size()
    );
    if let Some(dev) = &a.dev {
        let dev = load_corpus(dev)?;
        let (ppl, oov) = lm.perplexity(&dev.sentences);
        eprintln!("dev perplexity {ppl:.4} ({oov} unscored tokens)");
    }
    Ok(())
}

fn summarize(a: SummarizeArgs) -> CliResult<()> {
    for p in [&a.input, &a.embeddings, &a.lm]
        .into_iter()
        .chain(&a.output_embeddings)
        .chain(&a.neighbors)
        .chain(&a.oracle)
        .chain(&a.precomputed)
    {
        require_file(p)?;
    }
    if a.jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let cfg = SummarizerConfig {
        mode: a.mode,
        k: a.k,
        decoder: DecoderConfig {
            lambda: a.lambda,
            alpha: a.alpha,
            beam: a.beam,
            smoothing: a.smoothing,
            combo: a.combo,
            max_steps: a.max_steps,
        },
        preprocess: PreprocessOptions {
            strip_periods: !a.keep_periods,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.validate()?;

    let lines = read_lines(&a.input)?;
    let references = match &a.oracle {
        Some(p) => {
            let r = read_lines(p)?;
            if r.len() != lines.len() {
                return Err(Error::LineCountMismatch {
                    predictions: lines.len(),
                    references: r.len(),
                }
                .into());
            }
            Some(r)
        }
        None => None,
    };

    let input_table = Arc::new(load_embeddings(&a.embeddings)?);
    let output_table = match &a.output_embeddings {
        Some(p) => Arc::new(load_embeddings(p)?),
        None => input_table.clone(),
    };
    let neighbors = a.neighbors.as_ref().map(NeighborCache::load).transpose()?;
    let lm = NgramLm::load_arpa(&a.lm)?;
    let encoder = match &a.precomputed {
        Some(p) => Encoder::Precomputed(PrecomputedEncoder::load(p)?),
        None => Encoder::Builtin(BuiltinEncoder::new(
            BuiltinConfig {
                seed: a.seed,
                layers: a.layers,
                dim: input_table.dim(),
                ..Default::default()
            },
            Some(input_table.clone()),
        )?),
    };
    let summarizer = Summarizer::new(input_table, output_table, neighbors, lm, encoder, cfg)?;

    eprintln!(
        "ctxsum summarize: mode={} lambda={} alpha={} beam={} K={} combo={} smoothing={} jobs={}",
        a.mode, a.lambda, a.alpha, a.beam, a.k, a.combo, a.smoothing, a.jobs
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| CliError {
            code: EXIT_FAILURE,
            message: e.to_string(),
        })?;
    let dump = a.dump_pool.is_some();
    let results: Vec<(SummaryRecord, Option<PoolRecord>)> = pool.install(|| {
        lines
            .par_iter()
            .enumerate()
            .map(|(i, line)| {
                let reference = references.as_ref().map(|r| reference_tokens(&r[i]));
                process_line(&summarizer, line, reference, a.oracle_metric, dump)
            })
            .collect()
    });

    let mut out = open_output(a.output.as_deref())?;
    let mut failures = 0usize;
    for (rec, _) in &results {
        failures += rec.error.is_some() as usize;
        serde_json::to_writer(&mut out, rec).map_err(|e| write_err(e.into()))?;
        out.write_all(b"\n").map_err(write_err)?;
    }
    out.flush().map_err(write_err)?;
    if let Some(p) = &a.dump_pool {
        let mut f = open_output(Some(p))?;
        for (_, pool) in &results {
            if let Some(pool) = pool {
                serde_json::to_writer(&mut f, pool).map_err(|e| write_err(e.into()))?;
                f.write_all(b"\n").map_err(write_err)?;
            }
        }
        f.flush().map_err(write_err)?;
    }
    if failures > 0 {
        eprintln!("{failures} of {} line(s) failed", lines.len());
    }
    Ok(())
}

fn process_line(
    s: &Summarizer,
    line: &str,
    reference: Option<crate::error::Result<Vec<String>>>,
    metric: Metric,
    dump: bool,
) -> (SummaryRecord, Option<PoolRecord>) {
    let failed = |e: &Error| {
        let pool = dump.then(|| PoolRecord {
            source: line.to_string(),
            pool: Vec::new(),
            error: Some(e.to_string()),
        });
        (SummaryRecord::failed(line, e), pool)
    };
    let summary = match s.summarize(line) {
        Ok(x) => x,
        Err(e) => return failed(&e),
    };
    let mut rec = summary.record(line);
    if let Some(r) = reference {
        match r.and_then(|r| summary.oracle(&r, metric).map(|f| f.hypothesis.emitted(summary.source.end_marker()).join(" "))) {
            Ok(o) => rec.oracle_summary = Some(o),
            Err(e) => return failed(&e),
        }
    }
    let pool = dump.then(|| summary.pool_record(line));
    (rec, pool)
}

/// A prediction line: summarizer JSON or plain text.
fn parse_prediction(line: &str) -> CliResult<(String, Option<String>)> {
    if line.trim_start().starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| CliError::usage(format!("bad JSON prediction: {e}")))?;
        let summary = v
            .get("summary")
            .and_then(|s| s.as_str())
            .unwrap_or_default()
            .to_string();
        let source = v.get("source").and_then(|s| s.as_str()).map(String::from);
        Ok((summary, source))
    } else {
        Ok((line.to_string(), None))
    }
}

fn eval(a: EvalArgs) -> CliResult<()> {
    require_file(&a.predictions)?;
    require_file(&a.references)?;
    if let Some(p) = &a.source {
        require_file(p)?;
    }
    let preds = read_lines(&a.predictions)?;
    let refs = read_lines(&a.references)?;
    if preds.len() != refs.len() {
        return Err(Error::LineCountMismatch {
            predictions: preds.len(),
            references: refs.len(),
        }
        .into());
    }
    let sources = match &a.source {
        Some(p) => {
            let s = read_lines(p)?;
            if s.len() != preds.len() {
                return Err(Error::LineCountMismatch {
                    predictions: preds.len(),
                    references: s.len(),
                }
                .into());
            }
            Some(s)
        }
        None => None,
    };
    let opts = PreprocessOptions::corpus();
    let mut scores = Vec::with_capacity(preds.len());
    let mut all_have_source = true;
    let mut parsed = Vec::with_capacity(preds.len());
    for (i, p) in preds.iter().enumerate() {
        let (summary, json_source) = parse_prediction(p)?;
        let source = sources.as_ref().map(|s| s[i].clone()).or(json_source);
        all_have_source &= source.is_some();
        parsed.push((summary, source));
    }
    let mut out = io::stdout().lock();
    for (i, ((summary, source), reference)) in parsed.iter().zip(&refs).enumerate() {
        let cand = reference_tokens(summary)?;
        let reference = reference_tokens(reference)?;
        let m = match source.as_ref().filter(|_| all_have_source) {
            Some(s) => Some(
                normalize_tokens(s, &opts)
                    .map_err(|e| CliError::usage(format!("source line {}: {e}", i + 1)))?
                    .0
                    .len(),
            ),
            None => None,
        };
        let pair = score_pair(&cand, &reference, m)
            .map_err(|e| CliError::usage(format!("line {}: {e}", i + 1)))?;
        if a.per_pair {
            let mut v = serde_json::to_value(pair).map_err(|e| write_err(e.into()))?;
            v["line"] = (i + 1).into();
            writeln!(out, "{v}").map_err(write_err)?;
        }
        scores.push(pair);
    }
    let report = MetricReport::from_scores(&scores)?;
    serde_json::to_writer(&mut out, &report).map_err(|e| write_err(e.into()))?;
    writeln!(out).map_err(write_err)?;
    eprint!("{}", report.table());
    Ok(())
}
