// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the test binaries: temp directories and synthetic
// representation sets with a known label signal.

#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "icprobe/io.hpp"
#include "icprobe/linalg.hpp"
#include "icprobe/probe.hpp"
#include "icprobe/trainer.hpp"

namespace icprobe::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("icprobe_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ignored;
    std::filesystem::remove_all(path_, ignored);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Box–Muller over the project's own stream, so fixtures are identical on
// every standard library.
inline double gaussian(RngStream& rng) {
  const double u1 = 1.0 - rng.uniform_double();
  const double u2 = rng.uniform_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline RepSequence random_sequence(std::size_t n_tokens, std::size_t dim, RngStream& rng, double scale = 1.0) {
  std::vector<float> values(n_tokens * dim);
  for (float& v : values) v = static_cast<float>(scale * (2.0 * rng.uniform_double() - 1.0));
  return RepSequence(n_tokens, dim, std::move(values));
}

inline ProbeParams random_params(const ProbeShape& shape, RngStream& rng, double scale = 0.5,
                                 ProbeOptions options = {}) {
  ProbeParams p = ProbeParams::zeros(shape, options);
  for (auto* m : {&p.key, &p.query, &p.weight}) {
    for (float& v : m->values()) v = static_cast<float>(scale * (2.0 * rng.uniform_double() - 1.0));
  }
  for (float& v : p.bias.values()) v = static_cast<float>(scale * (2.0 * rng.uniform_double() - 1.0));
  return p;
}

// Records whose label is encoded along a class direction of the instruction
// token (row 0); the remaining tokens are uniform noise in [-0.5, 0.5].
inline std::vector<RepRecord> separable_records(std::size_t n_items, std::size_t dim, std::size_t n_classes,
                                                std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<RepRecord> out;
  for (std::size_t i = 0; i < n_items; ++i) {
    const std::size_t label = i % n_classes;
    const std::size_t n_tokens = 3 + static_cast<std::size_t>(rng.below(4));
    std::vector<float> values(n_tokens * dim);
    for (float& v : values) v = static_cast<float>(rng.uniform_double() - 0.5);
    values[label] += 2.0f;
    out.push_back({RepSequence(n_tokens, dim, std::move(values)), static_cast<std::uint32_t>(label)});
  }
  return out;
}

inline std::string item_id(std::size_t i) {
  std::string s = std::to_string(i);
  return "ex" + std::string(5 - std::min<std::size_t>(5, s.size()), '0') + s;
}

inline LabeledSet to_set(const std::vector<RepRecord>& records, std::size_t n_classes, std::size_t first_id = 0) {
  LabeledSet set(n_classes, records.empty() ? 0 : records.front().reps.dim());
  for (std::size_t i = 0; i < records.size(); ++i) {
    set.add({std::make_shared<const RepSequence>(records[i].reps), *records[i].label, item_id(first_id + i)});
  }
  return set;
}

inline LabeledSet separable_set(std::size_t n_items, std::size_t dim, std::size_t n_classes, std::uint64_t seed) {
  return to_set(separable_records(n_items, dim, n_classes, seed), n_classes);
}

// Adds N(0, sigma²) noise to every value.
inline std::vector<RepRecord> perturbed(const std::vector<RepRecord>& records, double sigma, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<RepRecord> out;
  for (const auto& r : records) {
    std::vector<float> values(r.reps.values().begin(), r.reps.values().end());
    for (float& v : values) v = static_cast<float>(v + sigma * gaussian(rng));
    out.push_back({RepSequence(r.reps.n_tokens(), r.reps.dim(), std::move(values)), r.label});
  }
  return out;
}

inline std::vector<ExampleMeta> meta_for(const std::vector<RepRecord>& records, const std::string& task,
                                         const std::string& instruction, std::size_t first_id) {
  std::vector<ExampleMeta> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    ExampleMeta m;
    m.example_id = item_id(first_id + i);
    m.task = task;
    m.instruction_id = instruction;
    m.label = records[i].label;
    out.push_back(std::move(m));
  }
  return out;
}

struct SyntheticSweep {
  std::filesystem::path config;
  std::vector<std::string> instruction_ids;
};

// Writes `n_instructions` noise-perturbed copies (σ = sigma) of one shared
// separable train/test pool, with metadata, plus a sweep config that trains
// with `train_json` (a JSON object body, may be empty).
inline SyntheticSweep write_synthetic_sweep(const std::filesystem::path& dir, std::size_t n_instructions,
                                            std::size_t n_train, std::size_t n_test, std::size_t dim,
                                            double sigma, const std::string& seeds, const std::string& sizes,
                                            const std::string& train_json = "", const std::string& kind = "robustness") {
  const auto train_base = separable_records(n_train, dim, 2, 101);
  const auto test_base = separable_records(n_test, dim, 2, 202);
  SyntheticSweep out;
  std::string entries;
  for (std::size_t k = 0; k < n_instructions; ++k) {
    const std::string id = "i" + std::to_string(k);
    out.instruction_ids.push_back(id);
    const auto train_records = perturbed(train_base, sigma, 1000 + k);
    const auto test_records = perturbed(test_base, sigma, 2000 + k);
    write_reps(train_records, dir / (id + ".train.icpr"));
    write_reps(test_records, dir / (id + ".test.icpr"));
    const auto train_meta = meta_for(train_records, "synthetic", id, 0);
    const auto test_meta = meta_for(test_records, "synthetic", id, n_train);
    write_file_atomic(dir / (id + ".train.jsonl"), encode_meta(train_meta));
    write_file_atomic(dir / (id + ".test.jsonl"), encode_meta(test_meta));
    if (!entries.empty()) entries += ",\n";
    entries += "    {\"id\": \"" + id + "\", \"train_reps\": \"" + id + ".train.icpr\", \"test_reps\": \"" + id +
               ".test.icpr\", \"train_meta\": \"" + id + ".train.jsonl\", \"test_meta\": \"" + id +
               ".test.jsonl\"}";
  }
  out.config = dir / "sweep.json";
  std::ofstream(out.config) << "{\n  \"task\": \"synthetic\",\n  \"model\": \"toy\",\n  \"kind\": \"" << kind
                            << "\",\n  \"instructions\": [\n" << entries << "\n  ],\n  \"seeds\": " << seeds
                            << ",\n  \"sample_sizes\": " << sizes << ",\n  \"train\": {" << train_json << "}\n}\n";
  return out;
}

}  // namespace icprobe::testing
