// SPDX-License-Identifier: Apache-2.0

#include "icprobe/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "icprobe/error.hpp"
#include "icprobe/io.hpp"

namespace icprobe {
namespace {

constexpr double kWidth = 760.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 24.0;
constexpr double kTop = 56.0;
constexpr double kBottom = 72.0;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

std::string num(double value) { return fmt("%.2f", value); }
std::string score(double value) { return fmt("%.4f", value); }

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string slug(const std::string& text) {
  std::string out;
  for (char c : text) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

const char* series_color(const std::string& method) {
  if (method == "probe") return "#4c72b0";
  if (method == "icl") return "#dd8452";
  return "#8c8c8c";
}

double y_of(double v) { return kTop + (1.0 - std::clamp(v, 0.0, 1.0)) * kPlotH; }

class Svg {
 public:
  explicit Svg(const std::string& title) {
    out_ += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
            "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out_ += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"#ffffff\"/>\n";
    out_ += "<text class=\"title\" x=\"" + num(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
            xml_escape(title) + "</text>\n";
    axes();
  }

  void line(double x1, double y1, double x2, double y2, const std::string& style) {
    out_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) + "\" " +
            style + "/>\n";
  }

  void text(double x, double y, const std::string& body, const std::string& attrs = "") {
    out_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\"" + (attrs.empty() ? "" : " " + attrs) + ">" +
            xml_escape(body) + "</text>\n";
  }

  void raw(const std::string& element) { out_ += element + "\n"; }

  void baseline(double value) {
    const double y = y_of(value);
    line(kLeft, y, kLeft + kPlotW, y, "stroke=\"#c9a227\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"");
    text(kLeft + kPlotW - 4, y - 4, "random " + score(value),
         "class=\"baseline\" data-value=\"" + score(value) + "\" text-anchor=\"end\" fill=\"#8a6d00\"");
  }

  void legend(const std::vector<std::string>& methods) {
    double x = kLeft;
    for (const auto& m : methods) {
      raw("<rect x=\"" + num(x) + "\" y=\"34\" width=\"12\" height=\"12\" fill=\"" + series_color(m) + "\"/>");
      text(x + 16, 44, m, "class=\"legend\"");
      x += 90;
    }
  }

  std::string finish() {
    out_ += "</svg>\n";
    return std::move(out_);
  }

 private:
  void axes() {
    for (int i = 0; i <= 5; ++i) {
      const double v = i / 5.0;
      const double y = y_of(v);
      line(kLeft, y, kLeft + kPlotW, y, "stroke=\"#e5e5e5\" stroke-width=\"1\"");
      text(kLeft - 6, y + 4, fmt("%.1f", v), "text-anchor=\"end\" fill=\"#555555\"");
    }
    line(kLeft, kTop, kLeft, kTop + kPlotH, "stroke=\"#333333\" stroke-width=\"1\"");
    line(kLeft, kTop + kPlotH, kLeft + kPlotW, kTop + kPlotH, "stroke=\"#333333\" stroke-width=\"1\"");
    text(18, kTop + kPlotH / 2, "macro-F1",
         "text-anchor=\"middle\" transform=\"rotate(-90 18 " + num(kTop + kPlotH / 2) + ")\"");
  }

  std::string out_;
};

std::string value_attrs(const AggregateResult& a) {
  return "class=\"value\" data-group=\"" + std::string(to_string(a.group_by)) + "\" data-method=\"" +
         xml_escape(a.method) + "\" data-key=\"" + xml_escape(a.key) + "\" data-sample-size=\"" +
         std::to_string(a.sample_size) + "\" data-model=\"" + xml_escape(a.model) + "\" data-mean=\"" + score(a.mean) +
         "\" data-std=\"" + score(a.std) + "\" text-anchor=\"middle\"";
}

double mean_baseline(std::span<const AggregateResult> aggs) {
  double total = 0.0;
  for (const auto& a : aggs) total += a.random_f1;
  return aggs.empty() ? 0.0 : total / static_cast<double>(aggs.size());
}

std::vector<std::string> methods_of(std::span<const AggregateResult> aggs) {
  std::vector<std::string> out;
  for (const auto& a : aggs) {
    if (std::find(out.begin(), out.end(), a.method) == out.end()) out.push_back(a.method);
  }
  return out;
}

// Grouped bars: one group per category, one bar per method.
std::string bar_chart(const std::string& title, const std::string& x_label, std::span<const AggregateResult> aggs,
                      const std::vector<std::string>& categories,
                      std::string (*category_of)(const AggregateResult&)) {
  Svg svg(title);
  const auto methods = methods_of(aggs);
  svg.legend(methods);
  const double group_w = kPlotW / static_cast<double>(categories.size());
  const double bar_w = group_w * 0.7 / static_cast<double>(methods.size());
  for (std::size_t ci = 0; ci < categories.size(); ++ci) {
    const double group_x = kLeft + group_w * static_cast<double>(ci);
    svg.text(group_x + group_w / 2, kTop + kPlotH + 18, categories[ci], "class=\"category\" text-anchor=\"middle\"");
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const auto it = std::find_if(aggs.begin(), aggs.end(), [&](const AggregateResult& a) {
        return a.method == methods[mi] && category_of(a) == categories[ci];
      });
      if (it == aggs.end()) continue;
      const double x = group_x + group_w * 0.15 + bar_w * static_cast<double>(mi);
      const double cx = x + bar_w / 2;
      const double top = y_of(it->mean);
      svg.raw("<rect x=\"" + num(x) + "\" y=\"" + num(top) + "\" width=\"" + num(bar_w) + "\" height=\"" +
              num(kTop + kPlotH - top) + "\" fill=\"" + series_color(it->method) + "\" fill-opacity=\"0.85\"/>");
      const double hi = y_of(it->mean + it->std);
      const double lo = y_of(it->mean - it->std);
      const std::string stroke = "stroke=\"#222222\" stroke-width=\"1.2\"";
      svg.line(cx, hi, cx, lo, stroke);
      svg.line(cx - bar_w / 4, hi, cx + bar_w / 4, hi, stroke);
      svg.line(cx - bar_w / 4, lo, cx + bar_w / 4, lo, stroke);
      svg.text(cx, hi - 6, score(it->mean) + " ± " + score(it->std), value_attrs(*it) + " font-size=\"9\"");
    }
  }
  svg.text(kLeft + kPlotW / 2, kHeight - 16, x_label, "text-anchor=\"middle\"");
  svg.baseline(mean_baseline(aggs));
  return svg.finish();
}

std::string sample_size_chart(const std::string& title, std::span<const AggregateResult> aggs) {
  Svg svg(title);
  const auto methods = methods_of(aggs);
  svg.legend(methods);
  std::size_t lo = aggs.front().sample_size;
  std::size_t hi = lo;
  for (const auto& a : aggs) {
    lo = std::min(lo, a.sample_size);
    hi = std::max(hi, a.sample_size);
  }
  const double span = hi > lo ? static_cast<double>(hi - lo) : 1.0;
  const auto x_of = [&](std::size_t s) { return kLeft + 20 + (kPlotW - 40) * static_cast<double>(s - lo) / span; };

  std::set<std::size_t> ticks;
  for (const auto& a : aggs) ticks.insert(a.sample_size);
  for (std::size_t s : ticks) {
    svg.text(x_of(s), kTop + kPlotH + 18, std::to_string(s), "class=\"category\" text-anchor=\"middle\"");
  }

  for (const auto& method : methods) {
    std::vector<AggregateResult> series;
    for (const auto& a : aggs) {
      if (a.method == method) series.push_back(a);
    }
    std::stable_sort(series.begin(), series.end(),
                     [](const AggregateResult& a, const AggregateResult& b) { return a.sample_size < b.sample_size; });
    std::string band;
    for (const auto& a : series) band += num(x_of(a.sample_size)) + "," + num(y_of(a.mean + a.std)) + " ";
    for (auto it = series.rbegin(); it != series.rend(); ++it) {
      band += num(x_of(it->sample_size)) + "," + num(y_of(it->mean - it->std)) + " ";
    }
    if (!band.empty()) band.pop_back();
    svg.raw("<polygon points=\"" + band + "\" fill=\"" + std::string(series_color(method)) +
            "\" fill-opacity=\"0.2\" stroke=\"none\"/>");
    std::string path;
    for (const auto& a : series) path += num(x_of(a.sample_size)) + "," + num(y_of(a.mean)) + " ";
    if (!path.empty()) path.pop_back();
    svg.raw("<polyline points=\"" + path + "\" fill=\"none\" stroke=\"" + series_color(method) +
            "\" stroke-width=\"2\"/>");
    for (const auto& a : series) {
      const double x = x_of(a.sample_size);
      svg.raw("<circle cx=\"" + num(x) + "\" cy=\"" + num(y_of(a.mean)) + "\" r=\"3\" fill=\"" +
              series_color(method) + "\"/>");
      svg.text(x, y_of(a.mean + a.std) - 6, score(a.mean) + " ± " + score(a.std), value_attrs(a) + " font-size=\"9\"");
    }
  }
  svg.text(kLeft + kPlotW / 2, kHeight - 16, "training examples (probe) / demonstrations (icl)",
           "text-anchor=\"middle\"");
  svg.baseline(mean_baseline(aggs));
  return svg.finish();
}

template <typename Pred>
std::vector<CellResult> filter(std::span<const CellResult> cells, Pred pred) {
  std::vector<CellResult> out;
  for (const auto& c : cells) {
    if (pred(c)) out.push_back(c);
  }
  return out;
}

}  // namespace

std::vector<Chart> render_charts(std::span<const CellResult> cells) {
  require(!cells.empty(), ErrorKind::InvalidArgument, "cells table is empty");
  std::vector<Chart> charts;

  std::set<std::string> tasks;
  for (const auto& c : cells) tasks.insert(c.task);

  for (const auto& task : tasks) {
    const auto task_cells = filter(cells, [&](const CellResult& c) { return c.task == task; });

    std::set<std::string> models;
    for (const auto& c : task_cells) models.insert(c.model);

    for (const auto& model : models) {
      const auto mc = filter(task_cells, [&](const CellResult& c) { return c.model == model; });

      std::set<std::size_t> sizes;
      for (const auto& c : mc) sizes.insert(c.sample_size);
      for (std::size_t size : sizes) {
        const auto sc = filter(mc, [&](const CellResult& c) { return c.sample_size == size; });
        std::vector<std::string> instructions;
        for (const auto& c : sc) {
          if (std::find(instructions.begin(), instructions.end(), c.instruction_id) == instructions.end()) {
            instructions.push_back(c.instruction_id);
          }
        }
        if (instructions.size() < 2) continue;
        const auto aggs = aggregate(sc, GroupBy::Instruction);
        charts.push_back({"fig_instructions_" + slug(task) + "_" + slug(model) + "_n" + std::to_string(size) + ".svg",
                          bar_chart(task + " / " + model + " / n=" + std::to_string(size) +
                                        ": macro-F1 per instruction (mean ± std over seeds)",
                                    "instruction", aggs, instructions,
                                    [](const AggregateResult& a) { return a.key; })});
      }

      std::set<std::size_t> probe_sizes;
      for (const auto& c : mc) probe_sizes.insert(c.sample_size);
      if (probe_sizes.size() >= 2) {
        const auto aggs = aggregate(mc, GroupBy::SampleSize);
        charts.push_back({"fig_sample_size_" + slug(task) + "_" + slug(model) + ".svg",
                          sample_size_chart(task + " / " + model + ": macro-F1 vs sample size (mean ± std)", aggs)});
      }
    }

    if (models.size() >= 2) {
      // Each (model, method) at its best-performing sample size.
      const auto spread = aggregate(task_cells, GroupBy::Spread);
      std::map<std::pair<std::string, std::string>, AggregateResult> best;
      for (const auto& a : spread) {
        const auto key = std::pair{a.model, a.method};
        const auto it = best.find(key);
        if (it == best.end() || a.mean > it->second.mean) best[key] = a;
      }
      std::vector<AggregateResult> picked;
      for (const auto& a : spread) {
        const auto& b = best.at({a.model, a.method});
        if (a.sample_size == b.sample_size) picked.push_back(a);
      }
      std::vector<std::string> model_order;
      for (const auto& a : picked) {
        if (std::find(model_order.begin(), model_order.end(), a.model) == model_order.end()) {
          model_order.push_back(a.model);
        }
      }
      charts.push_back({"fig_models_" + slug(task) + ".svg",
                        bar_chart(task + ": macro-F1 per model (mean over seeds, std across instructions)", "model",
                                  picked, model_order, [](const AggregateResult& a) { return a.model; })});
    }
  }

  if (charts.empty()) {
    // Degenerate table (one instruction, one size, one model): still chart it.
    const auto aggs = aggregate(cells, GroupBy::Instruction);
    std::vector<std::string> keys;
    for (const auto& a : aggs) {
      const std::string k = a.task + "/" + a.model + "/" + a.key;
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    charts.push_back({"fig_instructions.svg",
                      bar_chart("macro-F1 per instruction (mean ± std over seeds)", "task / model / instruction", aggs,
                                keys, [](const AggregateResult& a) { return a.task + "/" + a.model + "/" + a.key; })});
  }
  return charts;
}

std::vector<std::filesystem::path> write_report(const std::filesystem::path& cells_path,
                                                const std::filesystem::path& out_dir) {
  const auto cells = parse_cells(read_file(cells_path), cells_path.string());
  require(!cells.empty(), ErrorKind::InvalidArgument, cells_path.string() + ": cells table is empty");

  std::vector<AggregateResult> aggregates;
  for (GroupBy by : {GroupBy::Instruction, GroupBy::SampleSize, GroupBy::Spread}) {
    auto part = aggregate(cells, by);
    aggregates.insert(aggregates.end(), part.begin(), part.end());
  }
  const std::string aggregates_csv = encode_aggregates(aggregates);
  const auto charts = render_charts(cells);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorKind::Io, "cannot create '" + out_dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  write_file_atomic(out_dir / "aggregates.csv", aggregates_csv);
  written.push_back(out_dir / "aggregates.csv");
  for (const auto& chart : charts) {
    write_file_atomic(out_dir / chart.filename, chart.svg);
    written.push_back(out_dir / chart.filename);
  }
  return written;
}

}  // namespace icprobe
