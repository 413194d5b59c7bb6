// SPDX-License-Identifier: Apache-2.0

#include "icprobe/icprobe.h"

#include <exception>
#include <new>
#include <string>

#include "icprobe/error.hpp"
#include "icprobe/experiments.hpp"
#include "icprobe/io.hpp"
#include "icprobe/metrics.hpp"
#include "icprobe/report.hpp"
#include "icprobe/trainer.hpp"

struct icp_dataset {
  icprobe::Dataset data;
};

struct icp_probe {
  icprobe::ProbeParams params;
  icprobe::CheckpointMeta meta;
};

struct icp_history {
  icprobe::TrainHistory history;
};

struct icp_eval {
  icprobe::ConfusionMatrix confusion;
  std::vector<double> class_f1;
  double macro = 0.0;
};

namespace {

thread_local std::string g_last_error;

icp_status status_of(icprobe::ErrorKind kind) {
  switch (kind) {
    case icprobe::ErrorKind::InvalidArgument: return ICP_ERR_INVALID_ARGUMENT;
    case icprobe::ErrorKind::Dimension: return ICP_ERR_DIMENSION;
    case icprobe::ErrorKind::Parse: return ICP_ERR_PARSE;
    case icprobe::ErrorKind::Version: return ICP_ERR_VERSION;
    case icprobe::ErrorKind::Io: return ICP_ERR_IO;
    case icprobe::ErrorKind::Runtime: return ICP_ERR_RUNTIME;
  }
  return ICP_ERR_RUNTIME;
}

template <typename F>
icp_status guarded(F&& body) {
  try {
    body();
    return ICP_OK;
  } catch (const icprobe::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ICP_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ICP_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown failure";
    return ICP_ERR_RUNTIME;
  }
}

void need(const void* pointer, const char* what) {
  icprobe::require(pointer != nullptr, icprobe::ErrorKind::InvalidArgument, std::string(what) + " is null");
}

icprobe::TrainConfig to_config(const icp_train_options& o) {
  icprobe::TrainConfig c;
  c.learning_rate = o.learning_rate;
  c.beta1 = o.beta1;
  c.beta2 = o.beta2;
  c.epsilon = o.epsilon;
  c.val_frac = o.val_frac;
  c.batch_size = o.batch_size;
  c.max_epochs = o.max_epochs;
  c.patience = o.patience;
  c.key_dim = o.key_dim;
  c.seed = o.seed;
  c.score_scaling = o.score_scaling != 0;
  return c;
}

}  // namespace

extern "C" {

const char* icp_version(void) { return "1.0.0"; }

const char* icp_last_error(void) { return g_last_error.c_str(); }

const char* icp_status_string(icp_status status) {
  switch (status) {
    case ICP_OK: return "ok";
    case ICP_ERR_INVALID_ARGUMENT: return "invalid argument";
    case ICP_ERR_DIMENSION: return "dimension error";
    case ICP_ERR_PARSE: return "parse error";
    case ICP_ERR_VERSION: return "version error";
    case ICP_ERR_IO: return "io error";
    case ICP_ERR_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

icp_status icp_dataset_load(const char* reps_path, const char* meta_path, icp_dataset** out) {
  return guarded([&] {
    need(reps_path, "reps_path");
    need(out, "out");
    *out = nullptr;
    std::optional<std::filesystem::path> meta;
    if (meta_path != nullptr && meta_path[0] != '\0') meta = meta_path;
    *out = new icp_dataset{icprobe::load_dataset(reps_path, meta)};
  });
}

void icp_dataset_free(icp_dataset* dataset) { delete dataset; }

size_t icp_dataset_count(const icp_dataset* dataset) { return dataset ? dataset->data.size() : 0; }

uint32_t icp_dataset_dim(const icp_dataset* dataset) { return dataset ? dataset->data.dim : 0; }

size_t icp_dataset_labeled_count(const icp_dataset* dataset) { return dataset ? dataset->data.labeled_count() : 0; }

void icp_train_options_init(icp_train_options* options) {
  if (options == nullptr) return;
  const icprobe::TrainConfig d;
  options->learning_rate = d.learning_rate;
  options->beta1 = d.beta1;
  options->beta2 = d.beta2;
  options->epsilon = d.epsilon;
  options->val_frac = d.val_frac;
  options->batch_size = static_cast<uint32_t>(d.batch_size);
  options->max_epochs = static_cast<uint32_t>(d.max_epochs);
  options->patience = static_cast<uint32_t>(d.patience);
  options->key_dim = static_cast<uint32_t>(d.key_dim);
  options->seed = d.seed;
  options->score_scaling = d.score_scaling ? 1 : 0;
  options->train_size = 0;
}

icp_status icp_train(const icp_dataset* dataset, const icp_train_options* options, icp_probe** probe_out,
                     icp_history** history_out) {
  return guarded([&] {
    need(dataset, "dataset");
    need(options, "options");
    need(probe_out, "probe_out");
    *probe_out = nullptr;
    if (history_out != nullptr) *history_out = nullptr;

    const icprobe::TrainConfig config = to_config(*options);
    config.validate();
    icprobe::LabeledSet set = icprobe::to_labeled_set(dataset->data);
    if (options->train_size != 0) {
      std::vector<std::string> ids;
      std::vector<std::size_t> labels;
      for (const auto& item : set.items()) {
        ids.push_back(item.example_id);
        labels.push_back(item.label);
      }
      set = set.subset(icprobe::sample_indices(ids, labels, config.seed, options->train_size));
    }
    icprobe::TrainResult result = icprobe::train(set, config);
    auto probe = std::make_unique<icp_probe>(icp_probe{std::move(result.params), {icprobe::config_digest(config)}});
    if (history_out != nullptr) *history_out = new icp_history{std::move(result.history)};
    *probe_out = probe.release();
  });
}

void icp_history_free(icp_history* history) { delete history; }

size_t icp_history_epochs(const icp_history* history) { return history ? history->history.epochs.size() : 0; }

icp_status icp_history_epoch(const icp_history* history, size_t index, size_t* epoch, double* train_loss,
                             double* train_macro_f1, double* val_macro_f1) {
  return guarded([&] {
    need(history, "history");
    icprobe::require(index < history->history.epochs.size(), icprobe::ErrorKind::InvalidArgument,
                     "epoch index out of range");
    const auto& e = history->history.epochs[index];
    if (epoch != nullptr) *epoch = e.epoch;
    if (train_loss != nullptr) *train_loss = e.train_loss;
    if (train_macro_f1 != nullptr) *train_macro_f1 = e.train_macro_f1;
    if (val_macro_f1 != nullptr) *val_macro_f1 = e.val_macro_f1;
  });
}

size_t icp_history_best_epoch(const icp_history* history) { return history ? history->history.best_epoch : 0; }

double icp_history_best_val_f1(const icp_history* history) {
  return history ? history->history.best_val_macro_f1() : 0.0;
}

int icp_history_stopped_early(const icp_history* history) {
  return history && history->history.stopped_early ? 1 : 0;
}

size_t icp_history_warning_count(const icp_history* history) {
  return history ? history->history.warnings.size() : 0;
}

const char* icp_history_warning(const icp_history* history, size_t index) {
  if (history == nullptr || index >= history->history.warnings.size()) return nullptr;
  return history->history.warnings[index].c_str();
}

icp_status icp_history_write_csv(const icp_history* history, const char* path) {
  return guarded([&] {
    need(history, "history");
    need(path, "path");
    icprobe::write_file_atomic(path, icprobe::encode_history(history->history));
  });
}

icp_status icp_probe_save(const icp_probe* probe, const char* path) {
  return guarded([&] {
    need(probe, "probe");
    need(path, "path");
    icprobe::save_checkpoint(probe->params, probe->meta, path);
  });
}

icp_status icp_probe_load(const char* path, icp_probe** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto [params, meta] = icprobe::load_checkpoint(path);
    *out = new icp_probe{std::move(params), meta};
  });
}

void icp_probe_free(icp_probe* probe) { delete probe; }

icp_status icp_probe_shape(const icp_probe* probe, uint32_t* dim, uint32_t* key_dim, uint32_t* n_classes) {
  return guarded([&] {
    need(probe, "probe");
    if (dim != nullptr) *dim = static_cast<uint32_t>(probe->params.dim());
    if (key_dim != nullptr) *key_dim = static_cast<uint32_t>(probe->params.key_dim());
    if (n_classes != nullptr) *n_classes = static_cast<uint32_t>(probe->params.n_classes());
  });
}

icp_status icp_evaluate(const icp_probe* probe, const icp_dataset* dataset, icp_eval** out) {
  return guarded([&] {
    need(probe, "probe");
    need(dataset, "dataset");
    need(out, "out");
    *out = nullptr;
    const auto& data = dataset->data;
    icprobe::require(data.fully_labeled(), icprobe::ErrorKind::InvalidArgument,
                     "eval requires labels (" + std::to_string(data.size() - data.labeled_count()) +
                         " examples are unlabeled)");
    icprobe::require(data.size() == 0 || data.dim == probe->params.dim(), icprobe::ErrorKind::Dimension,
                     "representations have dim " + std::to_string(data.dim) + ", checkpoint expects " +
                         std::to_string(probe->params.dim()));
    const std::size_t c = probe->params.n_classes();
    icprobe::ConfusionMatrix cm(c);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t gold = *data.labels[i];
      icprobe::require(gold < c, icprobe::ErrorKind::InvalidArgument,
                       "example '" + data.ids[i] + "' has label " + std::to_string(gold) + " but the probe has " +
                           std::to_string(c) + " classes");
      cm.add(gold, icprobe::predict(probe->params, *data.sequences[i]));
    }
    auto result = std::make_unique<icp_eval>();
    result->class_f1 = icprobe::per_class_f1(cm);
    result->macro = icprobe::macro_f1(cm);
    result->confusion = std::move(cm);
    *out = result.release();
  });
}

void icp_eval_free(icp_eval* eval) { delete eval; }

uint32_t icp_eval_n_classes(const icp_eval* eval) {
  return eval ? static_cast<uint32_t>(eval->confusion.n_classes()) : 0;
}

uint64_t icp_eval_total(const icp_eval* eval) { return eval ? eval->confusion.total() : 0; }

double icp_eval_macro_f1(const icp_eval* eval) { return eval ? eval->macro : 0.0; }

double icp_eval_class_f1(const icp_eval* eval, uint32_t cls) {
  return eval && cls < eval->class_f1.size() ? eval->class_f1[cls] : 0.0;
}

uint64_t icp_eval_count(const icp_eval* eval, uint32_t gold, uint32_t pred) {
  if (eval == nullptr || gold >= eval->confusion.n_classes() || pred >= eval->confusion.n_classes()) return 0;
  return eval->confusion.at(gold, pred);
}

icp_status icp_predict_to_file(const icp_probe* probe, const icp_dataset* dataset, const char* out_path) {
  return guarded([&] {
    need(probe, "probe");
    need(dataset, "dataset");
    need(out_path, "out_path");
    const auto& data = dataset->data;
    icprobe::require(data.size() == 0 || data.dim == probe->params.dim(), icprobe::ErrorKind::Dimension,
                     "representations have dim " + std::to_string(data.dim) + ", checkpoint expects " +
                         std::to_string(probe->params.dim()));
    std::vector<icprobe::PredictionRow> rows;
    rows.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto trace = icprobe::forward(probe->params, *data.sequences[i]);
      icprobe::PredictionRow row;
      row.example_id = data.ids[i];
      if (data.labels[i]) row.gold = *data.labels[i];
      row.pred = icprobe::argmax(trace.probs.values());
      row.probs.assign(trace.probs.values().begin(), trace.probs.values().end());
      rows.push_back(std::move(row));
    }
    icprobe::write_file_atomic(out_path, icprobe::encode_predictions(rows, probe->params.n_classes()));
  });
}

icp_status icp_sweep_run(const char* config_path, const char* out_dir, uint32_t workers, size_t* cells_out) {
  return guarded([&] {
    need(config_path, "config_path");
    need(out_dir, "out_dir");
    const auto cells = icprobe::run_sweep_to_dir(config_path, out_dir, workers == 0 ? 1 : workers);
    if (cells_out != nullptr) *cells_out = cells.size();
  });
}

icp_status icp_report(const char* cells_path, const char* out_dir, size_t* files_out) {
  return guarded([&] {
    need(cells_path, "cells_path");
    need(out_dir, "out_dir");
    const auto files = icprobe::write_report(cells_path, out_dir);
    if (files_out != nullptr) *files_out = files.size();
  });
}

icp_status icp_random_baseline_f1(const uint64_t* gold_counts, size_t n_classes, uint64_t seed, size_t trials,
                                  int prior, double* out) {
  return guarded([&] {
    need(gold_counts, "gold_counts");
    need(out, "out");
    icprobe::require(prior == 0 || prior == 1, icprobe::ErrorKind::InvalidArgument,
                     "prior must be 0 (uniform) or 1 (gold-matched)");
    *out = icprobe::random_baseline_f1(std::span<const std::uint64_t>(gold_counts, n_classes), seed, trials,
                                       prior == 0 ? icprobe::BaselinePrior::Uniform
                                                  : icprobe::BaselinePrior::GoldMatched);
  });
}

}  // extern "C"
