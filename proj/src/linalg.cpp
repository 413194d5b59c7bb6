// SPDX-License-Identifier: Apache-2.0

#include "icprobe/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "icprobe/error.hpp"

namespace icprobe {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  require(data_.size() == rows * cols, ErrorKind::Dimension,
          "matrix data has " + std::to_string(data_.size()) + " values, expected " +
              std::to_string(rows) + "x" + std::to_string(cols));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

double dot(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), ErrorKind::Dimension,
          "dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

Vector matvec(const Matrix& m, std::span<const float> v) {
  require(m.cols() == v.size(), ErrorKind::Dimension,
          "matvec: matrix has " + std::to_string(m.cols()) + " columns, vector has " +
              std::to_string(v.size()) + " entries");
  Vector out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = static_cast<float>(dot(m.row(r), v));
  return out;
}

Vector matvec_transposed(const Matrix& m, std::span<const float> v) {
  require(m.rows() == v.size(), ErrorKind::Dimension,
          "matvec_transposed: matrix has " + std::to_string(m.rows()) + " rows, vector has " +
              std::to_string(v.size()) + " entries");
  std::vector<double> acc(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double scale = v[r];
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) acc[c] += scale * row[c];
  }
  Vector out(m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) out[c] = static_cast<float>(acc[c]);
  return out;
}

Vector softmax(std::span<const float> v) {
  require(!v.empty(), ErrorKind::InvalidArgument, "softmax of an empty vector");
  float peak = v[0];
  for (float x : v) peak = std::max(peak, x);
  std::vector<double> e(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    e[i] = std::exp(static_cast<double>(v[i]) - peak);
    total += e[i];
  }
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(e[i] / total);
  return out;
}

bool all_finite(std::span<const float> v) noexcept {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::size_t argmax(std::span<const float> v) {
  require(!v.empty(), ErrorKind::InvalidArgument, "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::uint64_t RngStream::next_u64() noexcept {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

float RngStream::uniform() noexcept {
  return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

double RngStream::uniform_double() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
  // Multiply-shift range reduction: high 64 bits of x · n.
  const std::uint64_t x = next_u64();
  const std::uint64_t x_lo = x & 0xFFFFFFFFu, x_hi = x >> 32;
  const std::uint64_t n_lo = n & 0xFFFFFFFFu, n_hi = n >> 32;
  const std::uint64_t lo_lo = x_lo * n_lo;
  const std::uint64_t hi_lo = x_hi * n_lo;
  const std::uint64_t lo_hi = x_lo * n_hi;
  const std::uint64_t cross = (lo_lo >> 32) + (hi_lo & 0xFFFFFFFFu) + lo_hi;
  return x_hi * n_hi + (hi_lo >> 32) + (cross >> 32);
}

void glorot_uniform(Matrix& m, std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (float& x : m.values()) x = static_cast<float>((2.0 * rng.uniform_double() - 1.0) * limit);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  RngStream rng(seed ^ (stream * 0xd1b54a32d192ed03ULL));
  return rng.next_u64();
}

}  // namespace icprobe
