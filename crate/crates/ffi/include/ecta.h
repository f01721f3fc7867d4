#ifndef ECTA_H
#define ECTA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EctaStatus {
  ECTA_STATUS_OK = 0,
  ECTA_STATUS_NULL_POINTER = 1,
  ECTA_STATUS_INVALID_UTF8 = 2,
  ECTA_STATUS_IO = 3,
  ECTA_STATUS_INVALID_DATA = 4,
  ECTA_STATUS_INVALID_ARGUMENT = 5,
  ECTA_STATUS_NOT_FOUND = 6,
  ECTA_STATUS_PANIC = 7,
} EctaStatus;

/*
 A loaded, validated corpus.
 */
typedef struct EctaCorpus EctaCorpus;

/*
 A LoRA layer with frozen `W` and trainable `A`, `B`.
 */
typedef struct EctaLoraLayer EctaLoraLayer;

/*
 Parsed model output.
 */
typedef struct EctaTripletParse EctaTripletParse;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failure on this thread; empty after a success. The
 pointer stays valid until the next ecta call on the same thread.
 */
const char *ecta_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *ecta_version(void);

/*
 Releases a string returned by this library.

 # Safety
 `s` must be NULL or a pointer returned through an ecta out-parameter, not yet freed.
 */
void ecta_string_free(char *s);

/*
 `2pr / (p + r)`, 0 when `p + r` is 0.
 */
double ecta_f1(double p, double r);

/*
 Loads a JSONL corpus with the default delimiters and categories.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EctaStatus ecta_corpus_load(const char *path, struct EctaCorpus **out);

/*
 Number of documents, 0 for NULL.

 # Safety
 `corpus` must be NULL or a live handle.
 */
size_t ecta_corpus_len(const struct EctaCorpus *corpus);

/*
 Id of the document at `index`.

 # Safety
 `corpus` must be a live handle; `out` must be writable.
 */
enum EctaStatus ecta_corpus_document_id(const struct EctaCorpus *corpus, size_t index, char **out);

/*
 # Safety
 `corpus` must be NULL or a live handle, not used afterwards.
 */
void ecta_corpus_free(struct EctaCorpus *corpus);

/*
 Marker-annotated text of one document, with its triplet appendix.

 # Safety
 `corpus` must be a live handle, `doc_id` a NUL-terminated string, `out` writable.
 */
enum EctaStatus ecta_annotate_document(const struct EctaCorpus *corpus,
                                       const char *doc_id,
                                       char **out);

/*
 Parses model output against the standard categories. Never fails on content.

 # Safety
 `text` must be a NUL-terminated string; `out` must be writable.
 */
enum EctaStatus ecta_parse_triplets(const char *text, struct EctaTripletParse **out);

/*
 # Safety
 `parse` must be NULL or a live handle.
 */
size_t ecta_triplet_parse_candidate_count(const struct EctaTripletParse *parse);

/*
 # Safety
 `parse` must be NULL or a live handle.
 */
size_t ecta_triplet_parse_issue_count(const struct EctaTripletParse *parse);

/*
 Fields of candidate `index`. Each out-pointer may be NULL to skip it.

 # Safety
 `parse` must be a live handle; non-NULL out-pointers must be writable.
 */
enum EctaStatus ecta_triplet_parse_candidate(const struct EctaTripletParse *parse,
                                             size_t index,
                                             char **emotion,
                                             char **cause,
                                             char **category);

/*
 The whole parse as JSON: candidates, candidate_lines and issues.

 # Safety
 `parse` must be a live handle; `out` must be writable.
 */
enum EctaStatus ecta_triplet_parse_to_json(const struct EctaTripletParse *parse, char **out);

/*
 # Safety
 `parse` must be NULL or a live handle, not used afterwards.
 */
void ecta_triplet_parse_free(struct EctaTripletParse *parse);

/*
 Scores raw model outputs against the corpus gold triplets and writes the
 metrics report as JSON. `ids[i]` names the document of `outputs[i]`;
 documents without an output are scored as empty predictions. `policy` is
 "exclude", "penalize" or NULL for the default.

 # Safety
 `corpus` must be a live handle; `ids` and `outputs` must each point to `n`
 NUL-terminated strings (either may be NULL when `n` is 0); `out` must be writable.
 */
enum EctaStatus ecta_evaluate(const struct EctaCorpus *corpus,
                              const char *const *ids,
                              const char *const *outputs,
                              size_t n,
                              const char *policy,
                              char **out);

/*
 Wraps a row-major `d x k` weight matrix with rank-`r` factors: `A` drawn
 from a seeded uniform distribution, `B` zero.

 # Safety
 `w` must point to `d * k` doubles; `out` must be writable.
 */
enum EctaStatus ecta_lora_layer_new(const double *w,
                                    size_t d,
                                    size_t k,
                                    size_t r,
                                    uint64_t seed,
                                    struct EctaLoraLayer **out);

/*
 `y = Wx + BAx`; `x` has `k` entries and `y` receives `d`.

 # Safety
 `layer` must be a live handle; `x` must hold `x_len` doubles and `y` `y_len`.
 */
enum EctaStatus ecta_lora_forward(const struct EctaLoraLayer *layer,
                                  const double *x,
                                  size_t x_len,
                                  double *y,
                                  size_t y_len);

/*
 Per-sample SGD over `n` pairs. `xs` is `n * k` row-major inputs and `ts`
 is `n * d` targets. Writes the final mean loss to `final_loss` when non-NULL.

 # Safety
 `layer` must be a live handle; `xs` and `ts` must hold the stated counts.
 */
enum EctaStatus ecta_lora_fit(struct EctaLoraLayer *layer,
                              const double *xs,
                              const double *ts,
                              size_t n,
                              double learning_rate,
                              size_t epochs,
                              double *final_loss);

/*
 # Safety
 `layer` must be NULL or a live handle, not used afterwards.
 */
void ecta_lora_layer_free(struct EctaLoraLayer *layer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECTA_H */
