// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icprobe/probe.hpp"

namespace icprobe {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 8;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double val_frac = 0.30;
  std::uint64_t seed = 0;
  std::size_t key_dim = 64;
  bool score_scaling = false;
  ScoreMode score_mode = ScoreMode::Softmax;

  void validate() const;
};

// FNV-1a over a canonical rendering of every field.
std::uint64_t config_digest(const TrainConfig& config);

struct LabeledItem {
  std::shared_ptr<const RepSequence> reps;
  std::size_t label = 0;
  std::string example_id;
};

class LabeledSet {
 public:
  LabeledSet(std::size_t n_classes, std::size_t dim) : n_classes_(n_classes), dim_(dim) {}

  // Rejects labels outside [0, C) and sequences of the wrong dim.
  void add(LabeledItem item);

  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  std::size_t n_classes() const noexcept { return n_classes_; }
  std::size_t dim() const noexcept { return dim_; }
  const LabeledItem& operator[](std::size_t i) const noexcept { return items_[i]; }
  std::span<const LabeledItem> items() const noexcept { return items_; }

  std::vector<std::uint64_t> label_counts() const;
  LabeledSet subset(std::span<const std::size_t> indices) const;

 private:
  std::size_t n_classes_;
  std::size_t dim_;
  std::vector<LabeledItem> items_;
};

// A seeded ordering of `ids` in which every prefix is label-stratified:
// items are sorted by id, shuffled within each class, then interleaved by
// largest class deficit. Prefixes of one order are nested samples.
std::vector<std::size_t> stratified_order(std::span<const std::string> ids, std::span<const std::size_t> labels,
                                          std::uint64_t seed);

// Stratified partition into (train, validation). Validation gets
// round(val_frac · n) items, clamped to [1, n-1], with at least one item of
// every class that has two or more members when the budget allows.
std::pair<LabeledSet, LabeledSet> split_train_val(const LabeledSet& set, double val_frac, std::uint64_t seed);

struct AdamState {
  ProbeGrads first;
  ProbeGrads second;
  std::uint64_t step = 0;

  static AdamState for_params(const ProbeParams& params);
};

// One bias-corrected Adam update over flat tensors. `step` is the
// already-incremented step count (t ≥ 1).
void adam_update(std::span<float> params, std::span<const float> grads, std::span<float> first,
                 std::span<float> second, std::uint64_t step, const TrainConfig& config);

void adam_step(ProbeParams& params, const ProbeGrads& grads, AdamState& state, const TrainConfig& config);

// Patience counter over per-epoch validation scores. Only strict
// improvements reset it; ties keep the earlier best.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when `score` is a new best.
  bool observe(double score);
  bool should_stop() const noexcept { return since_best_ >= patience_; }

  std::size_t epochs_seen() const noexcept { return seen_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }  // 1-based, 0 before any observation
  double best_score() const noexcept { return best_; }

 private:
  std::size_t patience_;
  std::size_t seen_ = 0;
  std::size_t since_best_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;      // mean over the epoch's batches
  double train_macro_f1 = 0.0;  // training split, after the epoch's updates
  double val_macro_f1 = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::vector<std::string> warnings;

  double best_val_macro_f1() const;
};

struct TrainResult {
  ProbeParams params;  // the best-epoch parameters
  TrainHistory history;
};

// Glorot-uniform K, Q, W and zero b, drawn in that order from `rng`.
ProbeParams init_params(const ProbeShape& shape, const ProbeOptions& options, RngStream& rng);

// Splits off validation, trains with Adam and early stopping on validation
// macro-F1, and returns the best checkpoint.
TrainResult train(const LabeledSet& set, const TrainConfig& config);

// Macro-F1 of the probe's predictions on a labeled set.
double evaluate_macro_f1(const ProbeParams& params, const LabeledSet& set);

}  // namespace icprobe
