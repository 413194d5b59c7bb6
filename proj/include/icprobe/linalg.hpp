// SPDX-License-Identifier: Apache-2.0

// Small dense linear algebra and seeded randomness.
//
// Storage is float32. Every reduction accumulates in float64 and sums in a
// fixed left-to-right order, so identical inputs give bit-identical outputs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace icprobe {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, float fill = 0.0f) : data_(len, fill) {}
  Vector(std::initializer_list<float> values) : data_(values) {}
  explicit Vector(std::vector<float> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float operator[](std::size_t i) const noexcept { return data_[i]; }
  float& operator[](std::size_t i) noexcept { return data_[i]; }

  std::span<const float> values() const noexcept { return data_; }
  std::span<float> values() noexcept { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<float> data_;
};

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  // Takes ownership of row-major `values`; size must equal rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }

  std::span<const float> row(std::size_t r) const noexcept {
    return std::span<const float>(data_).subspan(r * cols_, cols_);
  }
  std::span<float> row(std::size_t r) noexcept {
    return std::span<float>(data_).subspan(r * cols_, cols_);
  }

  std::span<const float> values() const noexcept { return data_; }
  std::span<float> values() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

double dot(std::span<const float> a, std::span<const float> b);

// m · v
Vector matvec(const Matrix& m, std::span<const float> v);
inline Vector matvec(const Matrix& m, const Vector& v) { return matvec(m, v.values()); }

// mᵀ · v
Vector matvec_transposed(const Matrix& m, std::span<const float> v);

// Numerically stable softmax (max subtraction). Rejects empty input.
Vector softmax(std::span<const float> v);
inline Vector softmax(const Vector& v) { return softmax(v.values()); }

bool all_finite(std::span<const float> v) noexcept;

// Lowest index of the maximum; rejects empty input.
std::size_t argmax(std::span<const float> v);

// splitmix64 stream. Same seed, same sequence, on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 24 bits of resolution.
  float uniform() noexcept;
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform_double() noexcept;
  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

// Fisher–Yates, walking from the back.
template <typename T>
void shuffle(std::span<T> items, RngStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

// Fills m with U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Matrix& m, std::size_t fan_in, std::size_t fan_out, RngStream& rng);

// Derives an independent seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace icprobe
