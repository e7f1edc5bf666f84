/* Dual-view distilled sentence matching: C interface.
 *
 * Every fallible call returns a dvsm_status; on failure dvsm_last_error()
 * describes the problem until the next call on the same thread. Objects are
 * opaque handles released with their matching _free function. Strings
 * returned through char** are owned by the caller and released with
 * dvsm_string_free. */
#ifndef DVSM_DVSM_H
#define DVSM_DVSM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DVSM_API __declspec(dllexport)
#else
#define DVSM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dvsm_status {
    DVSM_OK = 0,
    DVSM_USAGE_ERROR = 1,   /* bad arguments, plan, or configuration */
    DVSM_DATA_ERROR = 2,    /* malformed input files, cache or task mismatch */
    DVSM_NUMERIC_ERROR = 3  /* NaN/Inf, undefined correlation, failed gradient check */
} dvsm_status;

typedef struct dvsm_plan dvsm_plan;
typedef struct dvsm_model dvsm_model;
typedef struct dvsm_gradcheck_report dvsm_gradcheck_report;
typedef struct dvsm_sweep dvsm_sweep;

/* Called after every optimizer update. */
typedef void (*dvsm_step_fn)(void* user, size_t step, double loss, double lr, double lambda);

DVSM_API const char* dvsm_last_error(void);
DVSM_API void dvsm_string_free(char* s);

/* Training plans. Keys for dvsm_plan_set use the JSON field names, plus the
 * encoder fields (vocab_size, hidden_dim, ...) at top level. "teachers"
 * takes a comma-separated list of cache paths. */
DVSM_API dvsm_status dvsm_plan_new(dvsm_plan** out);
DVSM_API dvsm_status dvsm_plan_load(const char* path, dvsm_plan** out);
DVSM_API dvsm_status dvsm_plan_set(dvsm_plan* plan, const char* key, const char* value);
/* One field as text: strings unquoted, numbers in JSON spelling. */
DVSM_API dvsm_status dvsm_plan_get(const dvsm_plan* plan, const char* key, char** out);
DVSM_API dvsm_status dvsm_plan_to_json(const dvsm_plan* plan, char** out);
DVSM_API dvsm_status dvsm_plan_fingerprint(const dvsm_plan* plan, char** out);
DVSM_API void dvsm_plan_free(dvsm_plan* plan);

/* task is "classification" or "regression" ("nli" / "sts" also accepted). */
DVSM_API dvsm_status dvsm_gen_synthetic(size_t num_pairs, size_t vocab_size, uint64_t seed, const char* task,
                                        const char* out_path);
DVSM_API dvsm_status dvsm_build_vocab(const char* const* corpus_paths, size_t num_paths, size_t min_freq,
                                      const char* out_path);

/* Cross-encoder on gold targets. The vocabulary size in the plan is replaced
 * by the size of the vocabulary file. */
DVSM_API dvsm_status dvsm_train_teacher(const dvsm_plan* plan, const char* data_path, const char* vocab_path,
                                        dvsm_step_fn on_step, void* user, dvsm_model** out);
/* Runs each teacher checkpoint over the data file and writes one cache;
 * teacher ids are the checkpoint file stems. */
DVSM_API dvsm_status dvsm_cache_teachers(const char* const* checkpoint_paths, size_t num_teachers,
                                         const char* data_path, const char* out_path);
/* Siamese student. Modes other than "hard" read the caches listed in the
 * plan's teachers field; each must match data_path's fingerprint. */
DVSM_API dvsm_status dvsm_train_student(const dvsm_plan* plan, const char* data_path, const char* vocab_path,
                                        dvsm_step_fn on_step, void* user, dvsm_model** out);

DVSM_API dvsm_status dvsm_model_load(const char* path, dvsm_model** out);
DVSM_API dvsm_status dvsm_model_save(const dvsm_model* model, const char* path);
DVSM_API void dvsm_model_free(dvsm_model* model);
DVSM_API int dvsm_model_is_cross(const dvsm_model* model);
/* Output width: classes, or 1 for regression. */
DVSM_API size_t dvsm_model_num_outputs(const dvsm_model* model);
/* Sentence embedding (siamese models only). Writes up to capacity values and
 * the full dimension to *dim. */
DVSM_API dvsm_status dvsm_model_embed(const dvsm_model* model, const char* sentence, double* out, size_t capacity,
                                      size_t* dim);
/* Class distribution, or {score} in the cosine range for regression models. */
DVSM_API dvsm_status dvsm_model_predict(const dvsm_model* model, const char* sentence_a, const char* sentence_b,
                                        double* out, size_t capacity, size_t* count);
/* Cosine of the two sentence embeddings (siamese models only). */
DVSM_API dvsm_status dvsm_model_similarity(const dvsm_model* model, const char* sentence_a,
                                           const char* sentence_b, double* out);

/* Accuracy for classification data, Spearman for regression data. The report
 * is one JSON object; log_path, when non-null, gets it appended as a line. */
DVSM_API dvsm_status dvsm_evaluate(const dvsm_model* model, const char* data_path, const char* task, uint64_t seed,
                                   const char* config_fingerprint, const char* log_path, double* value,
                                   char** report_json);

/* Gradient check of every loss path with the plan's encoder config. A failed
 * check still returns DVSM_OK; inspect dvsm_gradcheck_passed. */
DVSM_API dvsm_status dvsm_gradcheck(const dvsm_plan* plan, uint64_t seed, double eps, double threshold,
                                    dvsm_gradcheck_report** out);
DVSM_API int dvsm_gradcheck_passed(const dvsm_gradcheck_report* report);
DVSM_API size_t dvsm_gradcheck_count(const dvsm_gradcheck_report* report);
DVSM_API const char* dvsm_gradcheck_path(const dvsm_gradcheck_report* report, size_t index);
DVSM_API double dvsm_gradcheck_error(const dvsm_gradcheck_report* report, size_t index);
DVSM_API dvsm_status dvsm_gradcheck_to_json(const dvsm_gradcheck_report* report, char** out);
DVSM_API void dvsm_gradcheck_free(dvsm_gradcheck_report* report);

/* Weighted students per alpha and seed plus one annealed row, scored by
 * Spearman on eval_path (regression pairs). */
DVSM_API dvsm_status dvsm_alpha_sweep(const dvsm_plan* plan, const char* data_path, const char* vocab_path,
                                      const char* eval_path, const double* alphas, size_t num_alphas,
                                      const uint64_t* seeds, size_t num_seeds, dvsm_sweep** out);
DVSM_API size_t dvsm_sweep_rows(const dvsm_sweep* sweep);
DVSM_API const char* dvsm_sweep_label(const dvsm_sweep* sweep, size_t row);
DVSM_API double dvsm_sweep_mean(const dvsm_sweep* sweep, size_t row);
DVSM_API double dvsm_sweep_stddev(const dvsm_sweep* sweep, size_t row);
DVSM_API dvsm_status dvsm_sweep_table(const dvsm_sweep* sweep, char** out);
DVSM_API void dvsm_sweep_free(dvsm_sweep* sweep);

#ifdef __cplusplus
}
#endif

#endif
