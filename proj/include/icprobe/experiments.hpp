// SPDX-License-Identifier: Apache-2.0

// Deterministic experiment sweeps over (instruction, seed, sample size) and
// the aggregation of their results.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icprobe/trainer.hpp"

namespace icprobe {

enum class SweepKind {
  Robustness,        // every instruction × seed × size
  SampleEfficiency,  // one instruction, nested samples over sizes × seeds
};

struct InstructionSource {
  std::string id;
  std::filesystem::path train_reps;
  std::filesystem::path test_reps;
  std::optional<std::filesystem::path> train_meta;
  std::optional<std::filesystem::path> test_meta;
};

struct SweepConfig {
  std::string task;
  std::string model;
  SweepKind kind = SweepKind::Robustness;
  std::vector<InstructionSource> instructions;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::size_t> sample_sizes{20, 40, 60, 80, 100, 120, 140, 160, 180, 200};
  TrainConfig train;
  std::size_t baseline_trials = 100;

  void validate() const;
};

// JSON sweep configuration. Relative paths resolve against `base_dir`.
SweepConfig parse_sweep_config(std::string_view json_text, const std::filesystem::path& base_dir);
SweepConfig load_sweep_config(const std::filesystem::path& path);

struct CellResult {
  std::string task;
  std::string model;
  std::string method = "probe";  // "probe" or "icl"
  std::string instruction_id;
  std::uint64_t seed = 0;
  std::size_t sample_size = 0;
  double macro_f1 = 0.0;
  double random_f1 = 0.0;   // random-prediction baseline on the same test set
  std::size_t best_epoch = 0;
  double wall_seconds = 0.0;  // not part of the cells table

  friend bool operator==(const CellResult&, const CellResult&) = default;
};

// Both sweeps train one probe per cell and return cells in canonical
// (instruction, seed, size) order regardless of `workers`.
std::vector<CellResult> run_robustness_sweep(const SweepConfig& config, std::size_t workers = 1);
std::vector<CellResult> run_sample_efficiency(const SweepConfig& config, std::size_t workers = 1);
std::vector<CellResult> run_sweep(const SweepConfig& config, std::size_t workers = 1);

// Nested, stratified sample of `size` items for `seed`; samples for one seed
// are prefixes of the same ordering.
std::vector<std::size_t> sample_indices(std::span<const std::string> ids, std::span<const std::size_t> labels,
                                        std::uint64_t seed, std::size_t size);

enum class GroupBy {
  Instruction,  // (task, model, method, sample_size, instruction) over seeds
  SampleSize,   // (task, model, method, sample_size) over seeds and instructions
  Spread,       // (task, model, method, sample_size): per-instruction means, then across instructions
};

const char* to_string(GroupBy by) noexcept;

struct AggregateResult {
  GroupBy group_by = GroupBy::Instruction;
  std::string task;
  std::string model;
  std::string method;
  std::size_t sample_size = 0;
  std::string key;  // instruction id for Instruction, "*" otherwise
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t n = 0;
  double random_f1 = 0.0;  // mean random baseline across the group's cells
};

// Groups appear in order of first occurrence in `results`.
std::vector<AggregateResult> aggregate(std::span<const CellResult> results, GroupBy group_by);

// Instruction with the median per-instruction mean F1 (lower median on even
// counts; ties by id).
std::string median_instruction(std::span<const CellResult> results);

// Scores ICL prediction tables. `path` is one table or a directory of them,
// named <instruction>.seed<seed>[.n<demos>].csv.
std::vector<CellResult> ingest_icl_predictions(const std::filesystem::path& path, std::string_view task,
                                               std::string_view model);

// Cells table: task,model,method,instruction,seed,sample_size,macro_f1,random_f1,best_epoch
std::string encode_cells(std::span<const CellResult> results);
std::vector<CellResult> parse_cells(std::string_view text, std::string_view source = "<memory>");

// Aggregates table: group_by,task,model,method,sample_size,key,mean,std,n,random_f1
std::string encode_aggregates(std::span<const AggregateResult> aggregates);

// Runs the configured sweep and writes cells.csv, aggregates.csv and
// timings.csv into `out_dir`. Nothing is written unless every cell succeeds.
std::vector<CellResult> run_sweep_to_dir(const std::filesystem::path& config_path,
                                         const std::filesystem::path& out_dir, std::size_t workers);

}  // namespace icprobe
