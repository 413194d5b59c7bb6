// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <map>
#include <regex>
#include <sstream>

#include "icprobe/error.hpp"
#include "icprobe/experiments.hpp"
#include "icprobe/io.hpp"
#include "icprobe/report.hpp"
#include "support.hpp"

using namespace icprobe;
using namespace icprobe::testing;

namespace {

// 5 instructions × 5 seeds at one size, one model.
std::vector<CellResult> robustness_cells() {
  std::vector<CellResult> cells;
  for (int i = 0; i < 5; ++i) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      CellResult c;
      c.task = "mrpc";
      c.model = "toy";
      c.instruction_id = "i" + std::to_string(i);
      c.seed = s;
      c.sample_size = 120;
      c.macro_f1 = 0.6 + 0.05 * i + 0.01 * static_cast<double>(s);
      c.random_f1 = 0.5 - 0.001 * static_cast<double>(s);
      c.best_epoch = 3;
      cells.push_back(c);
    }
  }
  return cells;
}

std::string fmt4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

TEST_CASE("a 25-cell robustness table renders one chart with five groups") {
  const auto cells = robustness_cells();
  const auto charts = render_charts(cells);
  REQUIRE(charts.size() == 1);
  CHECK(charts[0].filename == "fig_instructions_mrpc_toy_n120.svg");
  const std::string& svg = charts[0].svg;
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\"") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);

  std::size_t groups = 0;
  for (std::size_t at = 0; (at = svg.find("class=\"category\"", at)) != std::string::npos; ++at) ++groups;
  CHECK(groups == 5);
  for (int i = 0; i < 5; ++i) CHECK(svg.find(">i" + std::to_string(i) + "<") != std::string::npos);
  CHECK(svg.find("class=\"baseline\"") != std::string::npos);
}

TEST_CASE("chart output is a pure function of the cells") {
  const auto cells = robustness_cells();
  const auto a = render_charts(cells);
  const auto b = render_charts(cells);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].filename == b[i].filename);
    CHECK(a[i].svg == b[i].svg);
  }
}

TEST_CASE("sizes and models add their own charts") {
  auto cells = robustness_cells();
  for (auto c : robustness_cells()) {
    c.sample_size = 40;
    cells.push_back(c);
  }
  for (auto c : robustness_cells()) {
    c.model = "other";
    cells.push_back(c);
  }
  std::set<std::string> names;
  for (const auto& chart : render_charts(cells)) names.insert(chart.filename);
  CHECK(names.count("fig_instructions_mrpc_toy_n40.svg") == 1);
  CHECK(names.count("fig_instructions_mrpc_toy_n120.svg") == 1);
  CHECK(names.count("fig_instructions_mrpc_other_n120.svg") == 1);
  CHECK(names.count("fig_sample_size_mrpc_toy.svg") == 1);
  CHECK(names.count("fig_sample_size_mrpc_other.svg") == 0);
  CHECK(names.count("fig_models_mrpc.svg") == 1);
}

TEST_CASE("a single-instruction table still yields a chart") {
  auto cells = robustness_cells();
  cells.resize(5);
  const auto charts = render_charts(cells);
  REQUIRE(charts.size() == 1);
  CHECK(charts[0].filename == "fig_instructions.svg");
}

TEST_CASE("an empty table is an error") {
  try {
    render_charts({});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidArgument);
  }

  TempDir dir("report_empty");
  write_file_atomic(dir / "cells.csv", encode_cells({}));
  CHECK_THROWS_AS(write_report(dir / "cells.csv", dir / "out"), Error);
  CHECK(!std::filesystem::exists(dir / "out"));
}

TEST_CASE("write_report: chart values agree with aggregates.csv and reruns are byte-identical") {
  TempDir dir("report");
  const auto cells = robustness_cells();
  write_file_atomic(dir / "cells.csv", encode_cells(cells));

  const auto written = write_report(dir / "cells.csv", dir / "a");
  REQUIRE(written.size() == 2);
  write_report(dir / "cells.csv", dir / "b");
  for (const auto& path : written) {
    CHECK(read_file(path) == read_file(dir / "b" / path.filename()));
  }

  // Instruction rows from the CSV, keyed by instruction id.
  std::map<std::string, std::pair<double, double>> expected;
  std::stringstream csv(read_file(dir / "a" / "aggregates.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "group_by,task,model,method,sample_size,key,mean,std,n,random_f1");
  while (std::getline(csv, line)) {
    const auto f = split_commas(line);
    REQUIRE(f.size() == 10);
    if (f[0] == "instruction") expected[f[5]] = {std::stod(f[6]), std::stod(f[7])};
  }
  REQUIRE(expected.size() == 5);

  const std::string svg = read_file(dir / "a" / "fig_instructions_mrpc_toy_n120.svg");
  const std::regex value_re(R"re(data-key="([^"]+)"[^>]*data-mean="([0-9.]+)" data-std="([0-9.]+)")re");
  std::size_t seen = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), value_re); it != std::sregex_iterator(); ++it) {
    const std::string key = (*it)[1];
    REQUIRE(expected.count(key) == 1);
    CHECK((*it)[2] == fmt4(expected[key].first));
    CHECK((*it)[3] == fmt4(expected[key].second));
    ++seen;
  }
  CHECK(seen == 5);
}

TEST_CASE("write_report fails cleanly on a missing or malformed table") {
  TempDir dir("report_bad");
  CHECK_THROWS_AS(write_report(dir / "missing.csv", dir / "out"), Error);
  write_file_atomic(dir / "bad.csv", "not,a,cells,table\n1,2,3,4\n");
  CHECK_THROWS_AS(write_report(dir / "bad.csv", dir / "out"), Error);
  CHECK(!std::filesystem::exists(dir / "out"));
}
