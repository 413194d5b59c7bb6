// SPDX-License-Identifier: Apache-2.0

#include "icprobe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "icprobe/error.hpp"

namespace icprobe {
namespace {

std::string shape_text(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void check_compatible(const ProbeParams& params, const RepSequence& reps) {
  require(reps.n_tokens() > 0, ErrorKind::InvalidArgument, "representation sequence has no tokens");
  require(reps.dim() == params.dim(), ErrorKind::Dimension,
          "representation dim " + std::to_string(reps.dim()) + " does not match probe dim " +
              std::to_string(params.dim()));
}

double score_scale(const ProbeParams& params) {
  return params.options.score_scaling ? 1.0 / std::sqrt(static_cast<double>(params.key_dim())) : 1.0;
}

}  // namespace

RepSequence::RepSequence(std::size_t n_tokens, std::size_t dim, std::vector<float> rows)
    : n_tokens_(n_tokens), dim_(dim), data_(std::move(rows)) {
  require(data_.size() == n_tokens * dim, ErrorKind::Dimension,
          "representation data has " + std::to_string(data_.size()) + " values, expected " +
              shape_text(n_tokens, dim));
}

ProbeParams ProbeParams::zeros(const ProbeShape& shape, ProbeOptions options) {
  ProbeParams p;
  p.key = Matrix(shape.key_dim, shape.dim);
  p.query = Matrix(shape.key_dim, shape.dim);
  p.weight = Matrix(shape.dim, shape.n_classes);
  p.bias = Vector(shape.n_classes);
  p.options = options;
  return p;
}

void ProbeParams::validate() const {
  const std::size_t d = key.cols();
  const std::size_t dk = key.rows();
  const std::size_t c = bias.size();
  require(d > 0 && dk > 0 && c > 0, ErrorKind::Dimension, "probe has an empty dimension");
  require(query.rows() == dk && query.cols() == d, ErrorKind::Dimension,
          "query is " + shape_text(query.rows(), query.cols()) + ", expected " + shape_text(dk, d));
  require(weight.rows() == d && weight.cols() == c, ErrorKind::Dimension,
          "weight is " + shape_text(weight.rows(), weight.cols()) + ", expected " + shape_text(d, c));
  require(all_finite(key.values()) && all_finite(query.values()) && all_finite(weight.values()) &&
              all_finite(bias.values()),
          ErrorKind::InvalidArgument, "probe parameters contain non-finite values");
}

ProbeGrads ProbeGrads::zeros_like(const ProbeParams& params) {
  return {Matrix(params.key.rows(), params.key.cols()), Matrix(params.query.rows(), params.query.cols()),
          Matrix(params.weight.rows(), params.weight.cols()), Vector(params.bias.size())};
}

void ProbeGrads::add_scaled(const ProbeGrads& other, float scale) {
  auto axpy = [scale](std::span<float> dst, std::span<const float> src) {
    require(dst.size() == src.size(), ErrorKind::Dimension, "gradient shapes differ");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  };
  axpy(key.values(), other.key.values());
  axpy(query.values(), other.query.values());
  axpy(weight.values(), other.weight.values());
  axpy(bias.values(), other.bias.values());
}

ForwardTrace forward(const ProbeParams& params, const RepSequence& reps) {
  check_compatible(params, reps);
  const std::size_t n = reps.n_tokens();
  const std::size_t d = reps.dim();

  ForwardTrace t;
  const Vector q = matvec(params.query, reps.instruction());
  const double scale = score_scale(params);
  t.scores = Vector(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector k = matvec(params.key, reps.row(i));
    t.scores[i] = static_cast<float>(scale * dot(k.values(), q.values()));
  }

  t.weights = params.options.score_mode == ScoreMode::Softmax ? softmax(t.scores) : t.scores;

  std::vector<double> z(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = t.weights[i];
    const auto h = reps.row(i);
    for (std::size_t j = 0; j < d; ++j) z[j] += a * h[j];
  }
  t.pooled = Vector(d);
  for (std::size_t j = 0; j < d; ++j) t.pooled[j] = static_cast<float>(z[j]);

  t.logits = matvec_transposed(params.weight, t.pooled.values());
  for (std::size_t c = 0; c < t.logits.size(); ++c) t.logits[c] += params.bias[c];
  t.probs = softmax(t.logits);
  return t;
}

double loss(const ForwardTrace& trace, std::size_t label) {
  require(label < trace.probs.size(), ErrorKind::InvalidArgument,
          "label " + std::to_string(label) + " out of range for " + std::to_string(trace.probs.size()) +
              " classes");
  return -std::log(std::max(static_cast<double>(trace.probs[label]), 1e-12));
}

ProbeGrads backward(const ProbeParams& params, const RepSequence& reps, std::size_t label,
                    const ForwardTrace& trace) {
  check_compatible(params, reps);
  const std::size_t n = reps.n_tokens();
  const std::size_t d = params.dim();
  const std::size_t dk = params.key_dim();
  const std::size_t c = params.n_classes();
  require(label < c, ErrorKind::InvalidArgument,
          "label " + std::to_string(label) + " out of range for " + std::to_string(c) + " classes");
  require(trace.scores.size() == n && trace.weights.size() == n && trace.pooled.size() == d &&
              trace.logits.size() == c && trace.probs.size() == c,
          ErrorKind::Dimension, "forward trace shapes do not match the probe and sequence");

  ProbeGrads g = ProbeGrads::zeros_like(params);

  // Output layer.
  std::vector<double> du(c);
  for (std::size_t k = 0; k < c; ++k) du[k] = trace.probs[k] - (k == label ? 1.0 : 0.0);
  for (std::size_t k = 0; k < c; ++k) g.bias[k] = static_cast<float>(du[k]);
  for (std::size_t j = 0; j < d; ++j) {
    const double zj = trace.pooled[j];
    for (std::size_t k = 0; k < c; ++k) g.weight(j, k) = static_cast<float>(zj * du[k]);
  }

  // dz = W du, then g_i = h_i · dz.
  std::vector<double> dz(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < c; ++k) acc += static_cast<double>(params.weight(j, k)) * du[k];
    dz[j] = acc;
  }
  std::vector<double> gi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto h = reps.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += h[j] * dz[j];
    gi[i] = acc;
  }

  // Back through the attention normalization.
  std::vector<double> ds(n);
  if (params.options.score_mode == ScoreMode::Softmax) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += static_cast<double>(trace.weights[i]) * gi[i];
    for (std::size_t i = 0; i < n; ++i) ds[i] = trace.weights[i] * (gi[i] - mean);
  } else {
    ds = gi;
  }
  const double scale = score_scale(params);
  for (double& x : ds) x *= scale;

  // s_i = k_iᵀ q with k_i = K h_i, q = Q h_0.
  //   dq = Σ_i ds_i k_i,  dQ = dq ⊗ h_0
  //   dK = Σ_i ds_i q ⊗ h_i = q ⊗ (Σ_i ds_i h_i)
  std::vector<double> weighted_h(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto h = reps.row(i);
    for (std::size_t j = 0; j < d; ++j) weighted_h[j] += ds[i] * h[j];
  }
  std::vector<double> dq(dk, 0.0);
  for (std::size_t a = 0; a < dk; ++a) {
    const auto krow = params.key.row(a);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += krow[j] * weighted_h[j];
    dq[a] = acc;
  }
  const auto h0 = reps.instruction();
  const Vector q = matvec(params.query, h0);
  for (std::size_t a = 0; a < dk; ++a) {
    for (std::size_t j = 0; j < d; ++j) {
      g.query(a, j) = static_cast<float>(dq[a] * h0[j]);
      g.key(a, j) = static_cast<float>(q[a] * weighted_h[j]);
    }
  }
  return g;
}

std::size_t predict(const ProbeParams& params, const RepSequence& reps) {
  return argmax(forward(params, reps).probs.values());
}

}  // namespace icprobe
