// SPDX-License-Identifier: Apache-2.0

#include "icprobe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "icprobe/error.hpp"
#include "icprobe/log.hpp"
#include "icprobe/metrics.hpp"

namespace icprobe {
namespace {

constexpr std::uint64_t kSplitStream = 1;

std::vector<std::size_t> canonical_order(std::span<const std::string> ids) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  return order;
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::InvalidArgument,
          "learning rate must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0, ErrorKind::InvalidArgument, "beta1 must be in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, ErrorKind::InvalidArgument, "beta2 must be in [0, 1)");
  require(epsilon > 0.0, ErrorKind::InvalidArgument, "epsilon must be positive");
  require(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be at least 1");
  require(max_epochs >= 1, ErrorKind::InvalidArgument, "max epochs must be at least 1");
  require(patience >= 1, ErrorKind::InvalidArgument, "patience must be at least 1");
  require(val_frac > 0.0 && val_frac < 1.0, ErrorKind::InvalidArgument, "validation fraction must be in (0, 1)");
  require(key_dim >= 1, ErrorKind::InvalidArgument, "key dim must be at least 1");
}

std::uint64_t config_digest(const TrainConfig& c) {
  char text[512];
  std::snprintf(text, sizeof text, "lr=%.17g;b1=%.17g;b2=%.17g;eps=%.17g;bs=%zu;epochs=%zu;patience=%zu;"
                "val=%.17g;seed=%llu;dk=%zu;scaling=%d;mode=%d",
                c.learning_rate, c.beta1, c.beta2, c.epsilon, c.batch_size, c.max_epochs, c.patience, c.val_frac,
                static_cast<unsigned long long>(c.seed), c.key_dim, c.score_scaling ? 1 : 0,
                static_cast<int>(c.score_mode));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* p = text; *p != '\0'; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void LabeledSet::add(LabeledItem item) {
  require(item.reps != nullptr, ErrorKind::InvalidArgument, "labeled item has no representations");
  require(item.label < n_classes_, ErrorKind::InvalidArgument,
          "label " + std::to_string(item.label) + " of example '" + item.example_id + "' out of range for " +
              std::to_string(n_classes_) + " classes");
  require(item.reps->dim() == dim_, ErrorKind::Dimension,
          "example '" + item.example_id + "' has dim " + std::to_string(item.reps->dim()) + ", set has dim " +
              std::to_string(dim_));
  require(item.reps->n_tokens() > 0, ErrorKind::InvalidArgument,
          "example '" + item.example_id + "' has no tokens");
  items_.push_back(std::move(item));
}

std::vector<std::uint64_t> LabeledSet::label_counts() const {
  std::vector<std::uint64_t> counts(n_classes_, 0);
  for (const auto& item : items_) ++counts[item.label];
  return counts;
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> indices) const {
  LabeledSet out(n_classes_, dim_);
  out.items_.reserve(indices.size());
  for (std::size_t i : indices) {
    require(i < items_.size(), ErrorKind::InvalidArgument, "subset index out of range");
    out.items_.push_back(items_[i]);
  }
  return out;
}

std::vector<std::size_t> stratified_order(std::span<const std::string> ids, std::span<const std::size_t> labels,
                                          std::uint64_t seed) {
  require(ids.size() == labels.size(), ErrorKind::InvalidArgument, "ids and labels differ in length");
  const std::size_t n = ids.size();
  if (n == 0) return {};

  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i : canonical_order(ids)) by_class[labels[i]].push_back(i);

  RngStream rng(seed);
  std::vector<std::vector<std::size_t>*> groups;
  for (auto& [label, members] : by_class) {
    shuffle(std::span<std::size_t>(members), rng);
    groups.push_back(&members);
  }

  std::vector<std::size_t> taken(groups.size(), 0);
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t t = 1; t <= n; ++t) {
    std::size_t pick = groups.size();
    double best_deficit = 0.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (taken[g] == groups[g]->size()) continue;
      // Integer-exact deficit: t·n_g/n − taken_g, compared after scaling by n.
      const double deficit = static_cast<double>(t * groups[g]->size()) - static_cast<double>(taken[g] * n);
      if (pick == groups.size() || deficit > best_deficit) {
        pick = g;
        best_deficit = deficit;
      }
    }
    order.push_back((*groups[pick])[taken[pick]++]);
  }
  return order;
}

std::pair<LabeledSet, LabeledSet> split_train_val(const LabeledSet& set, double val_frac, std::uint64_t seed) {
  require(set.size() >= 2, ErrorKind::InvalidArgument,
          "train/validation split needs at least 2 items, got " + std::to_string(set.size()));
  require(val_frac > 0.0 && val_frac < 1.0, ErrorKind::InvalidArgument, "validation fraction must be in (0, 1)");
  const std::size_t n = set.size();

  std::vector<std::string> ids(n);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = set[i].example_id;
    labels[i] = set[i].label;
  }
  const auto order = stratified_order(ids, labels, seed);

  const auto rounded = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  const std::size_t n_val = std::clamp<std::size_t>(rounded, 1, n - 1);

  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  // Give every class with ≥ 2 members a validation item, taking the slot from
  // the class that holds the most validation items.
  const auto counts = set.label_counts();
  for (std::size_t cls = 0; cls < counts.size(); ++cls) {
    if (counts[cls] < 2) continue;
    const auto in_val = [&](std::size_t c) {
      return static_cast<std::size_t>(std::count_if(val.begin(), val.end(), [&](std::size_t i) { return labels[i] == c; }));
    };
    if (in_val(cls) > 0) continue;
    std::size_t donor = counts.size();
    std::size_t donor_count = 1;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      const std::size_t k = in_val(c);
      if (k > donor_count) {
        donor = c;
        donor_count = k;
      }
    }
    if (donor == counts.size()) break;
    const auto victim = std::find_if(val.rbegin(), val.rend(), [&](std::size_t i) { return labels[i] == donor; });
    const auto incoming = std::find_if(rest.begin(), rest.end(), [&](std::size_t i) { return labels[i] == cls; });
    std::swap(*victim, *incoming);
  }

  const auto canonical = [&](std::vector<std::size_t>& idx) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  };
  canonical(val);
  canonical(rest);
  return {set.subset(rest), set.subset(val)};
}

AdamState AdamState::for_params(const ProbeParams& params) {
  return {ProbeGrads::zeros_like(params), ProbeGrads::zeros_like(params), 0};
}

void adam_update(std::span<float> params, std::span<const float> grads, std::span<float> first,
                 std::span<float> second, std::uint64_t step, const TrainConfig& config) {
  require(params.size() == grads.size() && params.size() == first.size() && params.size() == second.size(),
          ErrorKind::Dimension, "adam: parameter, gradient and moment sizes differ");
  require(step >= 1, ErrorKind::InvalidArgument, "adam: step count must be at least 1");
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = config.beta1 * first[i] + (1.0 - config.beta1) * g;
    const double v = config.beta2 * second[i] + (1.0 - config.beta2) * g * g;
    first[i] = static_cast<float>(m);
    second[i] = static_cast<float>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] = static_cast<float>(params[i] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
  }
}

void adam_step(ProbeParams& params, const ProbeGrads& grads, AdamState& state, const TrainConfig& config) {
  ++state.step;
  adam_update(params.key.values(), grads.key.values(), state.first.key.values(), state.second.key.values(),
              state.step, config);
  adam_update(params.query.values(), grads.query.values(), state.first.query.values(),
              state.second.query.values(), state.step, config);
  adam_update(params.weight.values(), grads.weight.values(), state.first.weight.values(),
              state.second.weight.values(), state.step, config);
  adam_update(params.bias.values(), grads.bias.values(), state.first.bias.values(), state.second.bias.values(),
              state.step, config);
}

bool EarlyStopping::observe(double score) {
  ++seen_;
  if (seen_ == 1 || score > best_) {
    best_ = score;
    best_epoch_ = seen_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

double TrainHistory::best_val_macro_f1() const {
  if (best_epoch == 0 || best_epoch > epochs.size()) return 0.0;
  return epochs[best_epoch - 1].val_macro_f1;
}

ProbeParams init_params(const ProbeShape& shape, const ProbeOptions& options, RngStream& rng) {
  ProbeParams p = ProbeParams::zeros(shape, options);
  glorot_uniform(p.key, shape.dim, shape.key_dim, rng);
  glorot_uniform(p.query, shape.dim, shape.key_dim, rng);
  glorot_uniform(p.weight, shape.dim, shape.n_classes, rng);
  return p;
}

double evaluate_macro_f1(const ProbeParams& params, const LabeledSet& set) {
  ConfusionMatrix cm(params.n_classes());
  for (const auto& item : set.items()) cm.add(item.label, predict(params, *item.reps));
  return macro_f1(cm);
}

TrainResult train(const LabeledSet& set, const TrainConfig& config) {
  config.validate();
  require(set.size() >= 2, ErrorKind::InvalidArgument,
          "training needs at least 2 labeled examples, got " + std::to_string(set.size()));
  require(set.n_classes() >= 1, ErrorKind::InvalidArgument, "training needs at least one class");

  TrainHistory history;
  const auto counts = set.label_counts();
  if (std::count_if(counts.begin(), counts.end(), [](std::uint64_t c) { return c > 0; }) < 2) {
    history.warnings.emplace_back("training set contains a single class");
    log::info("training set contains a single class");
  }

  const ProbeShape shape{set.dim(), config.key_dim, set.n_classes()};
  const ProbeOptions options{config.score_scaling, config.score_mode};
  RngStream rng(config.seed);
  ProbeParams params = init_params(shape, options, rng);
  ProbeParams best = params;

  const auto [train_set, val_set] = split_train_val(set, config.val_frac, derive_seed(config.seed, kSplitStream));
  log::debug("split: " + std::to_string(train_set.size()) + " train / " + std::to_string(val_set.size()) +
             " validation");

  AdamState state = AdamState::for_params(params);
  EarlyStopping stopper(config.patience);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const float scale = 1.0f / static_cast<float>(stop - start);
      ProbeGrads grads = ProbeGrads::zeros_like(params);
      for (std::size_t k = start; k < stop; ++k) {
        const auto& item = train_set[order[k]];
        const ForwardTrace trace = forward(params, *item.reps);
        loss_sum += loss(trace, item.label);
        grads.add_scaled(backward(params, *item.reps, item.label, trace), scale);
      }
      adam_step(params, grads, state, config);
    }

    EpochRecord record{epoch, loss_sum / static_cast<double>(train_set.size()), evaluate_macro_f1(params, train_set),
                       evaluate_macro_f1(params, val_set)};
    history.epochs.push_back(record);
    if (log::enabled(log::Level::Debug)) {
      char line[128];
      std::snprintf(line, sizeof line, "epoch %zu loss %.6f train macro-F1 %.4f val macro-F1 %.4f", epoch,
                    record.train_loss, record.train_macro_f1, record.val_macro_f1);
      log::debug(line);
    }
    if (stopper.observe(record.val_macro_f1)) best = params;
    if (stopper.should_stop()) {
      history.stopped_early = true;
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  return {std::move(best), std::move(history)};
}

}  // namespace icprobe
