// SPDX-License-Identifier: Apache-2.0

// On-disk formats. All integers and floats are little-endian.
//
// ICPR v1 (representations):
//   "ICPR" | version u32 = 1 | flags u32 = 0 | dim u32 | count u64
//   count × { n_tokens u32 | label u32 (0xFFFFFFFF = unlabeled) | n_tokens·dim f32 }
//
// ICPK v1 (probe checkpoint):
//   "ICPK" | version u32 = 1 | d u32 | d_k u32 | C u32 | flags u32
//   K (d_k·d f32) | Q (d_k·d f32) | W (d·C f32) | b (C f32) | config digest u64
//   flags: bit 0 = score scaling, bit 1 = raw (unnormalized) attention scores

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icprobe/probe.hpp"
#include "icprobe/trainer.hpp"

namespace icprobe {

inline constexpr std::uint32_t kRepsVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kUnlabeled = 0xFFFFFFFFu;
inline constexpr std::size_t kRepsHeaderSize = 24;

struct RepRecord {
  RepSequence reps;
  std::optional<std::uint32_t> label;

  friend bool operator==(const RepRecord&, const RepRecord&) = default;
};

std::string encode_reps(std::span<const RepRecord> records);
// `dim` is only consulted when `records` is empty.
std::string encode_reps(std::span<const RepRecord> records, std::uint32_t dim);
// Parse errors name the byte offset at which decoding failed.
std::vector<RepRecord> decode_reps(std::string_view bytes, std::uint32_t* dim_out = nullptr);

void write_reps(std::span<const RepRecord> records, const std::filesystem::path& path);
std::vector<RepRecord> read_reps(const std::filesystem::path& path, std::uint32_t* dim_out = nullptr);

struct ExampleMeta {
  std::string example_id;
  std::string task;
  std::string instruction_id;
  std::optional<std::uint32_t> label;
  std::map<std::string, std::string> fields;

  friend bool operator==(const ExampleMeta&, const ExampleMeta&) = default;
};

// One JSON object per line:
//   {"example_id": "...", "task": "...", "instruction_id": "i0", "label": 1,
//    "fields": {"sentence1": "..."}}
// Only example_id is required. Blank lines are skipped.
std::vector<ExampleMeta> parse_meta(std::string_view text, std::string_view source = "<memory>");
std::vector<ExampleMeta> read_meta(const std::filesystem::path& path);
std::string encode_meta(std::span<const ExampleMeta> records);

struct CheckpointMeta {
  std::uint64_t config_digest = 0;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

std::string encode_checkpoint(const ProbeParams& params, const CheckpointMeta& meta);
std::pair<ProbeParams, CheckpointMeta> decode_checkpoint(std::string_view bytes);
void save_checkpoint(const ProbeParams& params, const CheckpointMeta& meta, const std::filesystem::path& path);
std::pair<ProbeParams, CheckpointMeta> load_checkpoint(const std::filesystem::path& path);

// Predictions table: example_id,gold,pred,p_0..p_{C-1}. An empty gold means
// unlabeled; an empty pred (or "abstain") means the predictor abstained.
struct PredictionRow {
  std::string example_id;
  std::optional<std::size_t> gold;
  std::optional<std::size_t> pred;
  std::vector<float> probs;
};

std::string encode_predictions(std::span<const PredictionRow> rows, std::size_t n_classes);
std::vector<PredictionRow> parse_predictions(std::string_view text, std::string_view source = "<memory>");

// Representations joined with optional metadata. Example ids come from the
// metadata when present and are zero-padded record indices otherwise.
struct Dataset {
  std::uint32_t dim = 0;
  std::vector<std::shared_ptr<const RepSequence>> sequences;
  std::vector<std::optional<std::uint32_t>> labels;
  std::vector<std::string> ids;
  std::vector<ExampleMeta> meta;  // empty when no metadata was given

  std::size_t size() const noexcept { return sequences.size(); }
  bool fully_labeled() const noexcept;
  std::size_t labeled_count() const noexcept;
};

Dataset make_dataset(std::vector<RepRecord> records, std::uint32_t dim, std::vector<ExampleMeta> meta);
Dataset load_dataset(const std::filesystem::path& reps_path,
                     const std::optional<std::filesystem::path>& meta_path = std::nullopt);

// Requires every example to be labeled. n_classes = max(2, max label + 1)
// unless given.
LabeledSet to_labeled_set(const Dataset& data, std::optional<std::size_t> n_classes = std::nullopt);

// Per-epoch history table: epoch,train_loss,train_macro_f1,val_macro_f1,best
std::string encode_history(const TrainHistory& history);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace icprobe
