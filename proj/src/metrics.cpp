// SPDX-License-Identifier: Apache-2.0

#include "icprobe/metrics.hpp"

#include <numeric>
#include <string>

#include "icprobe/error.hpp"
#include "icprobe/linalg.hpp"

namespace icprobe {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes)
    : n_(n_classes), counts_(n_classes * n_classes, 0), abstained_(n_classes, 0) {}

void ConfusionMatrix::add(std::size_t gold, std::size_t pred) {
  require(gold < n_ && pred < n_, ErrorKind::InvalidArgument,
          "label pair (" + std::to_string(gold) + ", " + std::to_string(pred) + ") out of range for " +
              std::to_string(n_) + " classes");
  ++counts_[gold * n_ + pred];
}

void ConfusionMatrix::add_abstention(std::size_t gold) {
  require(gold < n_, ErrorKind::InvalidArgument,
          "gold label " + std::to_string(gold) + " out of range for " + std::to_string(n_) + " classes");
  ++abstained_[gold];
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}) +
         std::accumulate(abstained_.begin(), abstained_.end(), std::uint64_t{0});
}

ConfusionMatrix confusion(std::span<const std::size_t> preds, std::span<const std::size_t> golds,
                          std::size_t n_classes) {
  require(preds.size() == golds.size(), ErrorKind::InvalidArgument,
          "confusion: " + std::to_string(preds.size()) + " predictions vs " + std::to_string(golds.size()) +
              " gold labels");
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(golds[i], preds[i]);
  return cm;
}

std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
  const std::size_t n = cm.n_classes();
  std::vector<double> f1(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t tp = cm.at(k, k);
    std::uint64_t predicted = 0;
    std::uint64_t actual = cm.abstained(k);
    for (std::size_t j = 0; j < n; ++j) {
      predicted += cm.at(j, k);
      actual += cm.at(k, j);
    }
    const double precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / predicted;
    const double recall = actual == 0 ? 0.0 : static_cast<double>(tp) / actual;
    f1[k] = precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  }
  return f1;
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.n_classes() == 0) return 0.0;
  const auto f1 = per_class_f1(cm);
  double total = 0.0;
  for (double x : f1) total += x;
  return total / static_cast<double>(f1.size());
}

double random_baseline_f1(std::span<const std::uint64_t> gold_counts, std::uint64_t seed, std::size_t trials,
                          BaselinePrior prior) {
  const std::uint64_t total = std::accumulate(gold_counts.begin(), gold_counts.end(), std::uint64_t{0});
  require(total > 0, ErrorKind::InvalidArgument, "random baseline needs at least one gold label");
  require(trials >= 1, ErrorKind::InvalidArgument, "random baseline needs at least one trial");
  const std::size_t n = gold_counts.size();

  RngStream rng(seed);
  double sum = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    ConfusionMatrix cm(n);
    for (std::size_t gold = 0; gold < n; ++gold) {
      for (std::uint64_t i = 0; i < gold_counts[gold]; ++i) {
        std::size_t pred = 0;
        if (prior == BaselinePrior::Uniform) {
          pred = static_cast<std::size_t>(rng.below(n));
        } else {
          std::uint64_t draw = rng.below(total);
          while (draw >= gold_counts[pred]) draw -= gold_counts[pred++];
        }
        cm.add(gold, pred);
      }
    }
    sum += macro_f1(cm);
  }
  return sum / static_cast<double>(trials);
}

}  // namespace icprobe
