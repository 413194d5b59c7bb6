// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace icprobe {

// counts[gold][pred]. Abstentions (a predictor that produced no class) are
// kept per gold class; they count against recall and never as a prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_classes = 0);

  std::size_t n_classes() const noexcept { return n_; }
  std::uint64_t at(std::size_t gold, std::size_t pred) const noexcept { return counts_[gold * n_ + pred]; }
  std::uint64_t abstained(std::size_t gold) const noexcept { return abstained_[gold]; }

  void add(std::size_t gold, std::size_t pred);
  void add_abstention(std::size_t gold);

  std::uint64_t total() const noexcept;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> abstained_;
};

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> golds,
                          std::size_t n_classes);

// One-vs-rest F1 per class; 0/0 ratios are 0.
std::vector<double> per_class_f1(const ConfusionMatrix& cm);

// Unweighted mean of per_class_f1.
double macro_f1(const ConfusionMatrix& cm);

enum class BaselinePrior {
  Uniform,      // each class equally likely
  GoldMatched,  // classes drawn with the gold label frequencies
};

// Monte-Carlo mean macro-F1 of random predictions against a gold set with the
// given per-class counts.
double random_baseline_f1(std::span<const std::uint64_t> gold_counts, std::uint64_t seed, std::size_t trials,
                          BaselinePrior prior = BaselinePrior::Uniform);

}  // namespace icprobe
