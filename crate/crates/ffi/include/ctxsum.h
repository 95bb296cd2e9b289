/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef CTXSUM_H
#define CTXSUM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum CtxsumStatus {
  CTXSUM_STATUS_OK = 0,
  CTXSUM_STATUS_NULL_ARGUMENT = 1,
  CTXSUM_STATUS_INVALID_UTF8 = 2,
  CTXSUM_STATUS_IO = 3,
  CTXSUM_STATUS_PARSE = 4,
  CTXSUM_STATUS_INVALID_CONFIG = 5,
  CTXSUM_STATUS_DECODE = 6,
  CTXSUM_STATUS_PANIC = 7,
} CtxsumStatus;

typedef enum CtxsumMode {
  CTXSUM_MODE_ABSTRACTIVE = 0,
  CTXSUM_MODE_EXTRACTIVE = 1,
} CtxsumMode;

typedef enum CtxsumMetric {
  CTXSUM_METRIC_ROUGE1 = 0,
  CTXSUM_METRIC_ROUGE2 = 1,
  CTXSUM_METRIC_ROUGE_L = 2,
  CTXSUM_METRIC_TOKEN_F1 = 3,
} CtxsumMetric;

// Opaque summarizer handle.
typedef struct CtxsumSummarizer CtxsumSummarizer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ctxsum_version(void);

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next call into the library on this thread.
const char *ctxsum_last_error_message(void);

// Builds a summarizer from an embedding file and an ARPA language model,
// using the builtin encoder with default settings (abstractive mode,
// lambda 0.11, beam 10, K 6, cat layers, cluster smoothing).
//
// # Safety
// Path arguments must be NUL-terminated strings; `out` must be writable.
enum CtxsumStatus ctxsum_summarizer_new(const char *embeddings_path,
                                        const char *lm_path,
                                        struct CtxsumSummarizer **out);

// Releases a summarizer. NULL is ignored.
//
// # Safety
// `s` must come from [`ctxsum_summarizer_new`] and not be used afterwards.
void ctxsum_summarizer_free(struct CtxsumSummarizer *s);

// # Safety
// `s` must be a live handle.
enum CtxsumStatus ctxsum_summarizer_set_lambda(struct CtxsumSummarizer *s, double lambda);

// # Safety
// `s` must be a live handle.
enum CtxsumStatus ctxsum_summarizer_set_alpha(struct CtxsumSummarizer *s, double alpha);

// # Safety
// `s` must be a live handle.
enum CtxsumStatus ctxsum_summarizer_set_beam(struct CtxsumSummarizer *s, uint32_t beam);

// # Safety
// `s` must be a live handle.
enum CtxsumStatus ctxsum_summarizer_set_k(struct CtxsumSummarizer *s, uint32_t k);

// # Safety
// `s` must be a live handle.
enum CtxsumStatus ctxsum_summarizer_set_mode(struct CtxsumSummarizer *s, enum CtxsumMode mode);

// Smoothing as text: `cs`, `temp:<T>` or `na`.
//
// # Safety
// `s` must be a live handle; `smoothing` a NUL-terminated string.
enum CtxsumStatus ctxsum_summarizer_set_smoothing(struct CtxsumSummarizer *s,
                                                  const char *smoothing);

// Layer combination as text: `cat`, `avg`, `top`, `mid` or `bot`.
//
// # Safety
// `s` must be a live handle; `combo` a NUL-terminated string.
enum CtxsumStatus ctxsum_summarizer_set_combo(struct CtxsumSummarizer *s, const char *combo);

// Summarizes one sentence. On success `*out_json` receives a JSON object
// with `source`, `summary`, `normalized_score`, `cm_logprob`, `fm_logprob`,
// `alignments` and `finished_pool_size`.
//
// # Safety
// `s` must be a live handle, `sentence` a NUL-terminated string and
// `out_json` writable.
enum CtxsumStatus ctxsum_summarize(const struct CtxsumSummarizer *s,
                                   const char *sentence,
                                   char **out_json);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `p` must come from this library and not be used afterwards.
void ctxsum_string_free(char *p);

// Scores whitespace-tokenized `candidate` against `reference`.
//
// # Safety
// Strings must be NUL-terminated; `out` must be writable.
enum CtxsumStatus ctxsum_score(const char *candidate,
                               const char *reference,
                               enum CtxsumMetric metric,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTXSUM_H */
