/* SPDX-License-Identifier: Apache-2.0 */

/*
 * icprobe C API.
 *
 * Attentional probes over instruction-contextualized token representations:
 * dataset loading, training, evaluation, prediction, experiment sweeps and
 * reports. All objects are opaque handles released with their *_free
 * function. Every fallible call returns an icp_status; on failure
 * icp_last_error() describes the problem (thread-local, valid until the next
 * failing call on the same thread).
 */

#ifndef ICPROBE_ICPROBE_H
#define ICPROBE_ICPROBE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(ICPROBE_BUILDING_LIBRARY)
#    define ICP_API __declspec(dllexport)
#  else
#    define ICP_API __declspec(dllimport)
#  endif
#else
#  define ICP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum icp_status {
  ICP_OK = 0,
  ICP_ERR_INVALID_ARGUMENT = 1, /* bad flag value, missing labels, bad config */
  ICP_ERR_DIMENSION = 2,        /* shapes disagree (e.g. checkpoint vs representations) */
  ICP_ERR_PARSE = 3,            /* malformed file */
  ICP_ERR_VERSION = 4,          /* unsupported file version */
  ICP_ERR_IO = 5,               /* file could not be read or written */
  ICP_ERR_RUNTIME = 6           /* anything else */
} icp_status;

typedef struct icp_dataset icp_dataset;
typedef struct icp_probe icp_probe;
typedef struct icp_history icp_history;
typedef struct icp_eval icp_eval;

typedef struct icp_train_options {
  double learning_rate;  /* 1e-3 */
  double beta1;          /* 0.9 */
  double beta2;          /* 0.999 */
  double epsilon;        /* 1e-8 */
  double val_frac;       /* 0.30 */
  uint32_t batch_size;   /* 8 */
  uint32_t max_epochs;   /* 100 */
  uint32_t patience;     /* 5 */
  uint32_t key_dim;      /* 64 */
  uint64_t seed;         /* 0 */
  int score_scaling;     /* 0; nonzero divides scores by sqrt(key_dim) */
  uint32_t train_size;   /* 0 = use every example; otherwise a stratified sample */
} icp_train_options;

ICP_API const char* icp_version(void);
ICP_API const char* icp_last_error(void);
ICP_API const char* icp_status_string(icp_status status);

/* Datasets: an ICPR container plus optional newline-delimited metadata. */
ICP_API icp_status icp_dataset_load(const char* reps_path, const char* meta_path /* nullable */,
                                    icp_dataset** out);
ICP_API void icp_dataset_free(icp_dataset* dataset);
ICP_API size_t icp_dataset_count(const icp_dataset* dataset);
ICP_API uint32_t icp_dataset_dim(const icp_dataset* dataset);
ICP_API size_t icp_dataset_labeled_count(const icp_dataset* dataset);

/* Training. */
ICP_API void icp_train_options_init(icp_train_options* options);
ICP_API icp_status icp_train(const icp_dataset* dataset, const icp_train_options* options, icp_probe** probe_out,
                             icp_history** history_out /* nullable */);

ICP_API void icp_history_free(icp_history* history);
ICP_API size_t icp_history_epochs(const icp_history* history);
ICP_API icp_status icp_history_epoch(const icp_history* history, size_t index, size_t* epoch, double* train_loss,
                                     double* train_macro_f1, double* val_macro_f1);
ICP_API size_t icp_history_best_epoch(const icp_history* history);
ICP_API double icp_history_best_val_f1(const icp_history* history);
ICP_API int icp_history_stopped_early(const icp_history* history);
ICP_API size_t icp_history_warning_count(const icp_history* history);
ICP_API const char* icp_history_warning(const icp_history* history, size_t index);
ICP_API icp_status icp_history_write_csv(const icp_history* history, const char* path);

/* Probes (checkpoints). */
ICP_API icp_status icp_probe_save(const icp_probe* probe, const char* path);
ICP_API icp_status icp_probe_load(const char* path, icp_probe** out);
ICP_API void icp_probe_free(icp_probe* probe);
ICP_API icp_status icp_probe_shape(const icp_probe* probe, uint32_t* dim, uint32_t* key_dim, uint32_t* n_classes);

/* Evaluation on a fully labeled dataset. */
ICP_API icp_status icp_evaluate(const icp_probe* probe, const icp_dataset* dataset, icp_eval** out);
ICP_API void icp_eval_free(icp_eval* eval);
ICP_API uint32_t icp_eval_n_classes(const icp_eval* eval);
ICP_API uint64_t icp_eval_total(const icp_eval* eval);
ICP_API double icp_eval_macro_f1(const icp_eval* eval);
ICP_API double icp_eval_class_f1(const icp_eval* eval, uint32_t cls);
ICP_API uint64_t icp_eval_count(const icp_eval* eval, uint32_t gold, uint32_t pred);

/* Writes the predictions table (example_id,gold,pred,p_0..p_{C-1}). */
ICP_API icp_status icp_predict_to_file(const icp_probe* probe, const icp_dataset* dataset, const char* out_path);

/* Experiment sweeps and reports; see the README for the config schema. */
ICP_API icp_status icp_sweep_run(const char* config_path, const char* out_dir, uint32_t workers, size_t* cells_out);
ICP_API icp_status icp_report(const char* cells_path, const char* out_dir, size_t* files_out);

/* Random-prediction macro-F1 baseline. prior: 0 = uniform, 1 = gold-matched. */
ICP_API icp_status icp_random_baseline_f1(const uint64_t* gold_counts, size_t n_classes, uint64_t seed, size_t trials,
                                          int prior, double* out);

#ifdef __cplusplus
}
#endif

#endif /* ICPROBE_ICPROBE_H */
