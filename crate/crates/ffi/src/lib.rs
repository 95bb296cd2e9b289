//! C ABI for the ctxsum summarizer.
//!
//! Every fallible function returns a [`CtxsumStatus`]. On failure a message
//! is available from [`ctxsum_last_error_message`] on the same thread until
//! the next call into this library. Strings returned through out-parameters
//! are owned by the caller and released with [`ctxsum_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use ctxsum::embeddings::load_embeddings;
use ctxsum::encoder::{BuiltinConfig, BuiltinEncoder, Encoder, LayerCombo};
use ctxsum::error::Error;
use ctxsum::eval::Metric;
use ctxsum::fluency::{NgramLm, SmoothingMode};
use ctxsum::pipeline::{CandidateMode, Summarizer, SummaryRecord};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtxsumStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidConfig = 5,
    Decode = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtxsumMode {
    Abstractive = 0,
    Extractive = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtxsumMetric {
    Rouge1 = 0,
    Rouge2 = 1,
    RougeL = 2,
    TokenF1 = 3,
}

/// Opaque summarizer handle.
pub struct CtxsumSummarizer {
    inner: Summarizer,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> CtxsumStatus {
    match e {
        Error::Io { .. } => CtxsumStatus::Io,
        Error::Parse { .. }
        | Error::Arpa { .. }
        | Error::Format(_)
        | Error::DimMismatch { .. }
        | Error::DuplicateWord(_) => CtxsumStatus::Parse,
        Error::BadConfig(_)
        | Error::BadOrder(_)
        | Error::BadDiscount(_)
        | Error::BadEncoderConfig(_)
        | Error::ComboUnsupported { .. }
        | Error::NonPositiveTemperature(_) => CtxsumStatus::InvalidConfig,
        _ => CtxsumStatus::Decode,
    }
}

struct Failure(CtxsumStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

/// Runs `f`, recording any error or panic for [`ctxsum_last_error_message`].
fn guard(f: impl FnOnce() -> FfiResult<()>) -> CtxsumStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CtxsumStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CtxsumStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(CtxsumStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CtxsumStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn handle<'a>(s: *mut CtxsumSummarizer) -> FfiResult<&'a mut CtxsumSummarizer> {
    s.as_mut()
        .ok_or_else(|| Failure(CtxsumStatus::NullArgument, "summarizer is null".into()))
}

fn bad_config(msg: String) -> Failure {
    Failure(CtxsumStatus::InvalidConfig, msg)
}

fn out_string(out: *mut *mut c_char, s: String) -> FfiResult<()> {
    let c = CString::new(s).map_err(|_| bad_config("output contains NUL".into()))?;
    // SAFETY: caller checked `out` is non-null.
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ctxsum_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ctxsum_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a summarizer from an embedding file and an ARPA language model,
/// using the builtin encoder with default settings (abstractive mode,
/// lambda 0.11, beam 10, K 6, cat layers, cluster smoothing).
///
/// # Safety
/// Path arguments must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_summarizer_new(
    embeddings_path: *const c_char,
    lm_path: *const c_char,
    out: *mut *mut CtxsumSummarizer,
) -> CtxsumStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(CtxsumStatus::NullArgument, "out is null".into()));
        }
        *out = ptr::null_mut();
        let emb = str_arg(embeddings_path, "embeddings_path")?;
        let lm = str_arg(lm_path, "lm_path")?;
        let table = Arc::new(load_embeddings(Path::new(emb))?);
        let lm = NgramLm::load_arpa(Path::new(lm))?;
        let encoder = BuiltinEncoder::new(
            BuiltinConfig {
                dim: table.dim(),
                ..Default::default()
            },
            Some(table.clone()),
        )?;
        let inner = Summarizer::new(
            table.clone(),
            table,
            None,
            lm,
            Encoder::Builtin(encoder),
            Default::default(),
        )?;
        *out = Box::into_raw(Box::new(CtxsumSummarizer { inner }));
        Ok(())
    })
}

/// Releases a summarizer. NULL is ignored.
///
/// # Safety
/// `s` must come from [`ctxsum_summarizer_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_summarizer_free(s: *mut CtxsumSummarizer) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

unsafe fn update(
    s: *mut CtxsumSummarizer,
    f: impl FnOnce(&mut ctxsum::pipeline::SummarizerConfig) -> FfiResult<()>,
) -> CtxsumStatus {
    guard(|| {
        let h = handle(s)?;
        let mut cfg = h.inner.config().clone();
        f(&mut cfg)?;
        h.inner.set_config(cfg)?;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_summarizer_set_lambda(s: *mut CtxsumSummarizer, lambda: f64) -> CtxsumStatus {
    update(s, |c| {
        c.decoder.lambda = lambda;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_summarizer_set_alpha(s: *mut CtxsumSummarizer, alpha: f64) -> CtxsumStatus {
    update(s, |c| {
        c.decoder.alpha = alpha;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_summarizer_set_beam(s: *mut CtxsumSummarizer, beam: u32) -> CtxsumStatus {
    update(s, |c| {
        c.decoder.beam = beam as usize;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_summarizer_set_k(s: *mut CtxsumSummarizer, k: u32) -> CtxsumStatus {
    update(s, |c| {
        c.k = k as usize;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_summarizer_set_mode(s: *mut CtxsumSummarizer, mode: CtxsumMode) -> CtxsumStatus {
    update(s, |c| {
        c.mode = match mode {
            CtxsumMode::Abstractive => CandidateMode::Abstractive,
            CtxsumMode::Extractive => CandidateMode::Extractive,
        };
        Ok(())
    })
}

/// Smoothing as text: `cs`, `temp:<T>` or `na`.
///
/// # Safety
/// `s` must be a live handle; `smoothing` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_summarizer_set_smoothing(
    s: *mut CtxsumSummarizer,
    smoothing: *const c_char,
) -> CtxsumStatus {
    update(s, |c| {
        c.decoder.smoothing = str_arg(smoothing, "smoothing")?
            .parse::<SmoothingMode>()
            .map_err(bad_config)?;
        Ok(())
    })
}

/// Layer combination as text: `cat`, `avg`, `top`, `mid` or `bot`.
///
/// # Safety
/// `s` must be a live handle; `combo` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_summarizer_set_combo(
    s: *mut CtxsumSummarizer,
    combo: *const c_char,
) -> CtxsumStatus {
    update(s, |c| {
        c.decoder.combo = str_arg(combo, "combo")?
            .parse::<LayerCombo>()
            .map_err(bad_config)?;
        Ok(())
    })
}

/// Summarizes one sentence. On success `*out_json` receives a JSON object
/// with `source`, `summary`, `normalized_score`, `cm_logprob`, `fm_logprob`,
/// `alignments` and `finished_pool_size`.
///
/// # Safety
/// `s` must be a live handle, `sentence` a NUL-terminated string and
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_summarize(
    s: *const CtxsumSummarizer,
    sentence: *const c_char,
    out_json: *mut *mut c_char,
) -> CtxsumStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(Failure(CtxsumStatus::NullArgument, "out_json is null".into()));
        }
        *out_json = ptr::null_mut();
        let h = s
            .as_ref()
            .ok_or_else(|| Failure(CtxsumStatus::NullArgument, "summarizer is null".into()))?;
        let text = str_arg(sentence, "sentence")?;
        let rec: SummaryRecord = h.inner.summarize(text)?.record(text);
        let json = serde_json::to_string(&rec).map_err(|e| bad_config(e.to_string()))?;
        out_string(out_json, json)
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `p` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_string_free(p: *mut c_char) {
    if !p.is_null() {
        drop(CString::from_raw(p));
    }
}

/// Scores whitespace-tokenized `candidate` against `reference`.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ctxsum_score(
    candidate: *const c_char,
    reference: *const c_char,
    metric: CtxsumMetric,
    out: *mut f64,
) -> CtxsumStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(CtxsumStatus::NullArgument, "out is null".into()));
        }
        let c: Vec<&str> = str_arg(candidate, "candidate")?.split_whitespace().collect();
        let r: Vec<&str> = str_arg(reference, "reference")?.split_whitespace().collect();
        let m = match metric {
            CtxsumMetric::Rouge1 => Metric::Rouge1,
            CtxsumMetric::Rouge2 => Metric::Rouge2,
            CtxsumMetric::RougeL => Metric::RougeL,
            CtxsumMetric::TokenF1 => Metric::TokenF1,
        };
        *out = m.score(&c, &r);
        Ok(())
    })
}
