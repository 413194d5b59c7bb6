// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "icprobe/experiments.hpp"

namespace icprobe {

struct Chart {
  std::string filename;
  std::string svg;
};

// Static SVG charts for a cells table:
//  - fig_instructions_*: per-instruction mean ± std over seeds, one chart per
//    (task, model, sample size) with two or more instructions;
//  - fig_models_*: per-model mean ± std across instructions, at each model's
//    best sample size, one chart per task with two or more models;
//  - fig_sample_size_*: mean ± std band against sample size, one chart per
//    (task, model) with two or more sample sizes.
// Every chart draws the random-prediction baseline as a dashed rule. Output is
// a pure function of the input.
std::vector<Chart> render_charts(std::span<const CellResult> cells);

// Reads a cells table and writes aggregates.csv plus the charts into
// `out_dir`. Returns the written paths. Nothing is written on failure.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& cells_path,
                                                const std::filesystem::path& out_dir);

}  // namespace icprobe
