#ifndef DLAP_DLAP_H
#define DLAP_DLAP_H

/*
 * C interface to the dlap core. All functions return a dlap_status; on
 * failure the thread-local message is available from dlap_last_error().
 * Strings returned through out-parameters are heap allocated and must be
 * released with dlap_string_free(). Handles are opaque and released with
 * their matching *_free function; passing NULL to a free function is a no-op.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DLAP_API __declspec(dllexport)
#else
#define DLAP_API __attribute__((visibility("default")))
#endif

typedef enum dlap_status {
  DLAP_OK = 0,
  DLAP_ERR_INVALID_ARGUMENT = 1,
  DLAP_ERR_IO = 2,
  DLAP_ERR_FORMAT = 3,
  DLAP_ERR_SCHEMA = 4,
  DLAP_ERR_NOT_FOUND = 5,
  DLAP_ERR_TRANSPORT = 6,
  DLAP_ERR_PROTOCOL = 7,
  DLAP_ERR_PRECONDITION = 8,
  DLAP_ERR_INTERNAL = 9
} dlap_status;

typedef struct dlap_corpus dlap_corpus;
typedef struct dlap_index dlap_index;
typedef struct dlap_model dlap_model;

DLAP_API const char* dlap_version(void);
DLAP_API const char* dlap_last_error(void);
DLAP_API const char* dlap_status_name(dlap_status status);
DLAP_API void dlap_string_free(char* s);

/* ---- corpus ---- */
DLAP_API dlap_status dlap_corpus_load(const char* path, dlap_corpus** out);
DLAP_API void dlap_corpus_free(dlap_corpus* corpus);
DLAP_API dlap_status dlap_corpus_size(const dlap_corpus* corpus, size_t* out);
DLAP_API dlap_status dlap_corpus_label_counts(const dlap_corpus* corpus, size_t* vulnerable,
                                              size_t* benign);
DLAP_API dlap_status dlap_corpus_hash(const dlap_corpus* corpus, char** out_hex);
DLAP_API dlap_status dlap_corpus_undersample(const dlap_corpus* corpus, double ratio, uint64_t seed,
                                             dlap_corpus** out);
DLAP_API dlap_status dlap_corpus_split(const dlap_corpus* corpus, double train_fraction,
                                       uint64_t seed, dlap_corpus** train, dlap_corpus** test);
DLAP_API dlap_status dlap_corpus_save(const dlap_corpus* corpus, const char* path);
/* Writes one <id>.c file per record into dir (file stem = sanitized id). */
DLAP_API dlap_status dlap_corpus_export_sources(const dlap_corpus* corpus, const char* dir);

/* ---- similarity index ---- */
typedef struct dlap_index_params {
  size_t shingle;
  size_t slots;
  size_t bands;
  size_t rows;
  uint64_t seed;
} dlap_index_params;

DLAP_API dlap_index_params dlap_index_params_default(void);
DLAP_API dlap_status dlap_index_build(const dlap_corpus* corpus, const dlap_index_params* params,
                                      dlap_index** out);
DLAP_API dlap_status dlap_index_save(const dlap_index* index, const char* path);
DLAP_API dlap_status dlap_index_load(const char* path, dlap_index** out);
DLAP_API dlap_status dlap_index_size(const dlap_index* index, size_t* out);
/* Result is a JSON array of {"id","similarity"} objects. */
DLAP_API dlap_status dlap_index_query(const dlap_index* index, const char* source, size_t m,
                                      char** out_json);
DLAP_API void dlap_index_free(dlap_index* index);

/* ---- builtin probability model ---- */
DLAP_API dlap_status dlap_model_train(const dlap_corpus* train, uint64_t seed, size_t epochs,
                                      double learning_rate, double l2, dlap_model** out);
DLAP_API dlap_status dlap_model_save(const dlap_model* model, const char* path);
DLAP_API dlap_status dlap_model_load(const char* path, dlap_model** out);
DLAP_API dlap_status dlap_model_predict(const dlap_model* model, const char* source, double* out);
DLAP_API dlap_status dlap_model_fingerprint(const dlap_model* model, char** out_hex);
DLAP_API void dlap_model_free(dlap_model* model);

/* ---- static findings ---- */
/* Either report path may be NULL. Output is canonical findings JSON-Lines. */
DLAP_API dlap_status dlap_scan_import(const char* flawfinder_csv_path, const char* cppcheck_xml_path,
                                      const char* out_path, size_t* count);

/* ---- taxonomy ---- */
/* NULL paths select the shipped defaults. Returns a JSON summary; fails with
 * DLAP_ERR_SCHEMA when a mapped CWE does not resolve to a library node, in
 * which case out_json is still populated and must be freed. */
DLAP_API dlap_status dlap_taxonomy_check(const char* library_path, const char* mapping_path,
                                         char** out_json);

/* ---- prompts and runs ---- */
DLAP_API dlap_status dlap_prompt_dump(const char* config_path, const char* out_dir, size_t* count);
DLAP_API dlap_status dlap_run(const char* config_path, const char* out_dir, char** out_summary_json);
/* format: "markdown" or "csv". paths: results.jsonl files or run directories. */
DLAP_API dlap_status dlap_report(const char* const* paths, size_t n_paths, const char* format,
                                 int unparseable_as_positive, char** out_text);

/* kind: "role", "auxiliary" or "cot2step". aux may be NULL; for auxiliary it
 * defaults to the derived data-flow summary. Turns are joined as a JSON array. */
DLAP_API dlap_status dlap_render_baseline(const char* kind, const char* code, const char* aux,
                                          char** out_json);
/* Hash of the detection request (system persona + prompt) as used by the mock LLM. */
DLAP_API dlap_status dlap_prompt_hash(const char* prompt, char** out_hex);

#ifdef __cplusplus
}
#endif

#endif
