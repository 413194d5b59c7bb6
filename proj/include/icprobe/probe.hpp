// SPDX-License-Identifier: Apache-2.0

// Attentional probe over instruction-contextualized token representations.
//
//   s_i = (K h_i)ᵀ (Q h_0)          attention scores, h_0 = instruction token
//   α   = softmax(s)                attention weights over positions
//   z   = Σ_i α_i h_i               pooled representation
//   u   = Wᵀ z + b                  logits
//   p   = softmax(u)                class distribution

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "icprobe/linalg.hpp"

namespace icprobe {

// N×d token representations of one prompt. Row 0 is the instruction token.
class RepSequence {
 public:
  RepSequence() = default;
  RepSequence(std::size_t n_tokens, std::size_t dim, std::vector<float> rows);

  std::size_t n_tokens() const noexcept { return n_tokens_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const float> row(std::size_t i) const noexcept {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }
  std::span<const float> instruction() const noexcept { return row(0); }
  std::span<const float> values() const noexcept { return data_; }

  friend bool operator==(const RepSequence&, const RepSequence&) = default;

 private:
  std::size_t n_tokens_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

enum class ScoreMode {
  Softmax,  // α = softmax(s)
  Raw,      // α = s, unnormalized (ablation)
};

struct ProbeOptions {
  bool score_scaling = false;  // divide scores by sqrt(d_k)
  ScoreMode score_mode = ScoreMode::Softmax;

  friend bool operator==(const ProbeOptions&, const ProbeOptions&) = default;
};

struct ProbeShape {
  std::size_t dim = 0;
  std::size_t key_dim = 0;
  std::size_t n_classes = 0;

  friend bool operator==(const ProbeShape&, const ProbeShape&) = default;
};

struct ProbeParams {
  Matrix key;     // d_k × d
  Matrix query;   // d_k × d
  Matrix weight;  // d × C
  Vector bias;    // C
  ProbeOptions options;

  static ProbeParams zeros(const ProbeShape& shape, ProbeOptions options = {});

  ProbeShape shape() const noexcept { return {key.cols(), key.rows(), bias.size()}; }
  std::size_t dim() const noexcept { return key.cols(); }
  std::size_t key_dim() const noexcept { return key.rows(); }
  std::size_t n_classes() const noexcept { return bias.size(); }

  // Throws Dimension if the four tensors disagree, InvalidArgument on
  // non-finite entries.
  void validate() const;

  friend bool operator==(const ProbeParams&, const ProbeParams&) = default;
};

struct ForwardTrace {
  Vector scores;   // s, N
  Vector weights;  // α, N
  Vector pooled;   // z, d
  Vector logits;   // u, C
  Vector probs;    // p, C
};

// Gradients of the loss; shapes mirror ProbeParams.
struct ProbeGrads {
  Matrix key;
  Matrix query;
  Matrix weight;
  Vector bias;

  static ProbeGrads zeros_like(const ProbeParams& params);

  // this += scale * other
  void add_scaled(const ProbeGrads& other, float scale);
};

ForwardTrace forward(const ProbeParams& params, const RepSequence& reps);

// Cross-entropy −log p_label, with p_label clamped at 1e-12.
double loss(const ForwardTrace& trace, std::size_t label);

ProbeGrads backward(const ProbeParams& params, const RepSequence& reps, std::size_t label,
                    const ForwardTrace& trace);

// argmax p, ties toward the lowest class index.
std::size_t predict(const ProbeParams& params, const RepSequence& reps);

// Visits (param tensor, matching grad tensor) pairs in K, Q, W, b order.
template <typename F>
void for_each_tensor(ProbeParams& params, const ProbeGrads& grads, F&& visit) {
  visit(params.key.values(), grads.key.values());
  visit(params.query.values(), grads.query.values());
  visit(params.weight.values(), grads.weight.values());
  visit(params.bias.values(), grads.bias.values());
}

}  // namespace icprobe
