use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ctxsum::corpus::load_corpus;
use ctxsum::fluency::train_ngram_lm;
use ctxsum_ffi::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn cstr(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = ctxsum_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn build(dir: &std::path::Path) -> *mut CtxsumSummarizer {
    let lm = dir.join("lm.arpa");
    train_ngram_lm(&load_corpus(fixture("toy_corpus.txt")).unwrap(), 3, 0.75)
        .unwrap()
        .save_arpa(&lm)
        .unwrap();
    let emb = cstr(&fixture("toy_embeddings.txt"));
    let lm = cstr(&lm);
    let mut h = ptr::null_mut();
    let st = unsafe { ctxsum_summarizer_new(emb.as_ptr(), lm.as_ptr(), &mut h) };
    assert_eq!(st, CtxsumStatus::Ok);
    assert!(!h.is_null());
    assert!(ctxsum_last_error_message().is_null());
    h
}

fn summarize(h: *mut CtxsumSummarizer, s: &str) -> (CtxsumStatus, Option<serde_json::Value>) {
    let s = CString::new(s).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { ctxsum_summarize(h, s.as_ptr(), &mut out) };
    if out.is_null() {
        return (st, None);
    }
    let v = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    unsafe { ctxsum_string_free(out) };
    (st, Some(v))
}

#[test]
fn summarize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let h = build(dir.path());
    let (st, rec) = summarize(h, "The cat sat on the mat .");
    assert_eq!(st, CtxsumStatus::Ok);
    let rec = rec.unwrap();
    assert_eq!(rec["source"], "The cat sat on the mat .");
    let n = rec["summary"].as_str().unwrap().split_whitespace().count();
    assert_eq!(rec["alignments"].as_array().unwrap().len(), n);

    unsafe {
        assert_eq!(ctxsum_summarizer_set_mode(h, CtxsumMode::Extractive), CtxsumStatus::Ok);
        assert_eq!(ctxsum_summarizer_set_lambda(h, 0.0), CtxsumStatus::Ok);
        assert_eq!(ctxsum_summarizer_set_beam(h, 4), CtxsumStatus::Ok);
        assert_eq!(ctxsum_summarizer_set_k(h, 3), CtxsumStatus::Ok);
        assert_eq!(ctxsum_summarizer_set_alpha(h, 0.5), CtxsumStatus::Ok);
        let top = CString::new("top").unwrap();
        assert_eq!(ctxsum_summarizer_set_combo(h, top.as_ptr()), CtxsumStatus::Ok);
        let t = CString::new("temp:2").unwrap();
        assert_eq!(ctxsum_summarizer_set_smoothing(h, t.as_ptr()), CtxsumStatus::Ok);
    }
    let (st, rec) = summarize(h, "the dog ran");
    assert_eq!(st, CtxsumStatus::Ok);
    for t in rec.unwrap()["summary"].as_str().unwrap().split_whitespace() {
        assert!(["the", "dog", "ran"].contains(&t));
    }
    unsafe { ctxsum_summarizer_free(h) };
}

#[test]
fn error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let h = build(dir.path());
    unsafe {
        assert_eq!(ctxsum_summarizer_set_beam(h, 0), CtxsumStatus::InvalidConfig);
        assert!(!last_error().is_empty());
        let bad = CString::new("warm").unwrap();
        assert_eq!(ctxsum_summarizer_set_smoothing(h, bad.as_ptr()), CtxsumStatus::InvalidConfig);
        assert_eq!(ctxsum_summarizer_set_combo(h, bad.as_ptr()), CtxsumStatus::InvalidConfig);
        assert_eq!(ctxsum_summarizer_set_lambda(ptr::null_mut(), 1.0), CtxsumStatus::NullArgument);
        // failed setters leave the previous configuration in place
        assert_eq!(ctxsum_summarizer_set_lambda(h, 0.2), CtxsumStatus::Ok);
        assert!(ctxsum_last_error_message().is_null());
    }
    let (st, rec) = summarize(h, "");
    assert_eq!(st, CtxsumStatus::Decode);
    assert!(rec.is_none());
    let (st, _) = summarize(h, "the </s> cat");
    assert_eq!(st, CtxsumStatus::Decode);
    assert!(last_error().contains("</s>"));

    let mut out = ptr::null_mut();
    let s = CString::new("cat").unwrap();
    unsafe {
        assert_eq!(ctxsum_summarize(h, ptr::null(), &mut out), CtxsumStatus::NullArgument);
        assert_eq!(ctxsum_summarize(ptr::null(), s.as_ptr(), &mut out), CtxsumStatus::NullArgument);
        assert_eq!(ctxsum_summarize(h, s.as_ptr(), ptr::null_mut()), CtxsumStatus::NullArgument);
        let bytes = [0xffu8, 0xfe, 0];
        assert_eq!(
            ctxsum_summarize(h, bytes.as_ptr().cast(), &mut out),
            CtxsumStatus::InvalidUtf8
        );
        ctxsum_summarizer_free(h);
        ctxsum_summarizer_free(ptr::null_mut());
        ctxsum_string_free(ptr::null_mut());
    }
}

#[test]
fn constructor_failures() {
    let dir = tempfile::tempdir().unwrap();
    let emb = cstr(&fixture("toy_embeddings.txt"));
    let missing = cstr(&dir.path().join("missing.arpa"));
    let garbage = dir.path().join("garbage.arpa");
    std::fs::write(&garbage, "not an arpa file\n").unwrap();
    let garbage = cstr(&garbage);
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(ctxsum_summarizer_new(emb.as_ptr(), missing.as_ptr(), &mut h), CtxsumStatus::Io);
        assert!(h.is_null());
        assert!(last_error().contains("missing.arpa"));
        assert_eq!(ctxsum_summarizer_new(emb.as_ptr(), garbage.as_ptr(), &mut h), CtxsumStatus::Parse);
        assert!(h.is_null());
        assert_eq!(ctxsum_summarizer_new(ptr::null(), garbage.as_ptr(), &mut h), CtxsumStatus::NullArgument);
        assert_eq!(
            ctxsum_summarizer_new(emb.as_ptr(), garbage.as_ptr(), ptr::null_mut()),
            CtxsumStatus::NullArgument
        );
    }
}

#[test]
fn score_metrics() {
    let c = CString::new("the cat sat").unwrap();
    let r = CString::new("the cat sat down").unwrap();
    let mut v = 0.0;
    unsafe {
        assert_eq!(ctxsum_score(c.as_ptr(), r.as_ptr(), CtxsumMetric::Rouge1, &mut v), CtxsumStatus::Ok);
        assert!((v - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(ctxsum_score(c.as_ptr(), r.as_ptr(), CtxsumMetric::Rouge2, &mut v), CtxsumStatus::Ok);
        assert!((v - 0.8).abs() < 1e-12);
        assert_eq!(ctxsum_score(c.as_ptr(), r.as_ptr(), CtxsumMetric::RougeL, &mut v), CtxsumStatus::Ok);
        assert!((v - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(ctxsum_score(c.as_ptr(), c.as_ptr(), CtxsumMetric::TokenF1, &mut v), CtxsumStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(
            ctxsum_score(c.as_ptr(), r.as_ptr(), CtxsumMetric::Rouge1, ptr::null_mut()),
            CtxsumStatus::NullArgument
        );
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ctxsum_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/ctxsum.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "ctxsum_summarizer_new",
        "ctxsum_summarizer_free",
        "ctxsum_summarize",
        "ctxsum_string_free",
        "ctxsum_last_error_message",
        "ctxsum_score",
        "CTXSUM_STATUS_OK",
        "typedef struct CtxsumSummarizer CtxsumSummarizer",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ctxsum.h\"\nint main(void) {\n  CtxsumSummarizer *h = 0;\n  \
         CtxsumStatus st = ctxsum_summarizer_new(\"e\", \"l\", &h);\n  \
         ctxsum_summarizer_free(h);\n  return st == CTXSUM_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("cc not available; skipping C compile check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
