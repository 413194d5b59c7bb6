// SPDX-License-Identifier: Apache-2.0

#include "icprobe/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include "csv.hpp"
#include "icprobe/error.hpp"
#include "icprobe/io.hpp"
#include "icprobe/log.hpp"
#include "icprobe/metrics.hpp"
#include "json.hpp"

namespace icprobe {
namespace {

using nlohmann::json;

constexpr std::uint64_t kSampleStream = 3;
constexpr std::uint64_t kBaselineStream = 2;

const char* kind_name(SweepKind kind) {
  return kind == SweepKind::Robustness ? "robustness" : "sample_efficiency";
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
    require(ok, ErrorKind::InvalidArgument, where + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
T get_field(const json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidArgument, where + ": bad or missing \"" + key + "\" (" + e.what() + ")");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

struct PreparedInstruction {
  InstructionSource source;
  LabeledSet train{0, 0};
  LabeledSet test{0, 0};
  std::vector<std::string> train_ids;
  std::vector<std::size_t> train_labels;
};

std::vector<PreparedInstruction> prepare(const SweepConfig& config) {
  std::vector<Dataset> trains;
  std::vector<Dataset> tests;
  std::optional<std::uint32_t> dim;
  std::size_t max_label = 1;
  for (const auto& src : config.instructions) {
    trains.push_back(load_dataset(src.train_reps, src.train_meta));
    tests.push_back(load_dataset(src.test_reps, src.test_meta));
    for (const Dataset* d : {&trains.back(), &tests.back()}) {
      if (!dim) dim = d->dim;
      require(d->dim == *dim || d->size() == 0, ErrorKind::Dimension,
              "instruction " + src.id + ": container dim " + std::to_string(d->dim) + " differs from " +
                  std::to_string(*dim));
      for (std::size_t i = 0; i < d->size(); ++i) {
        require(d->labels[i].has_value(), ErrorKind::InvalidArgument,
                "instruction " + src.id + ": example '" + d->ids[i] + "' is unlabeled; sweeps need labels");
        max_label = std::max<std::size_t>(max_label, *d->labels[i]);
      }
    }
    if (!trains.back().meta.empty() && !tests.back().meta.empty()) {
      const std::set<std::string> train_ids(trains.back().ids.begin(), trains.back().ids.end());
      for (const auto& id : tests.back().ids) {
        require(train_ids.count(id) == 0, ErrorKind::InvalidArgument,
                "instruction " + src.id + ": test example '" + id + "' also appears in the training pool");
      }
    }
  }

  std::vector<PreparedInstruction> out;
  for (std::size_t i = 0; i < config.instructions.size(); ++i) {
    PreparedInstruction p;
    p.source = config.instructions[i];
    p.train = to_labeled_set(trains[i], max_label + 1);
    p.test = to_labeled_set(tests[i], max_label + 1);
    require(!p.test.empty(), ErrorKind::InvalidArgument, "instruction " + p.source.id + ": empty test container");
    for (const auto& item : p.train.items()) {
      p.train_ids.push_back(item.example_id);
      p.train_labels.push_back(item.label);
    }
    out.push_back(std::move(p));
  }
  return out;
}

struct CellSpec {
  std::size_t instruction;
  std::uint64_t seed;
  std::size_t size;
};

std::string cell_name(const SweepConfig& config, const CellSpec& cell) {
  return "cell (instruction " + config.instructions[cell.instruction].id + ", seed " + std::to_string(cell.seed) +
         ", size " + std::to_string(cell.size) + ")";
}

CellResult run_cell(const SweepConfig& config, const PreparedInstruction& prep, const CellSpec& cell) {
  const auto start = std::chrono::steady_clock::now();
  const auto chosen = sample_indices(prep.train_ids, prep.train_labels, cell.seed, cell.size);
  const LabeledSet sample = prep.train.subset(chosen);

  TrainConfig tc = config.train;
  tc.seed = cell.seed;
  const TrainResult trained = train(sample, tc);

  CellResult r;
  r.task = config.task;
  r.model = config.model;
  r.method = "probe";
  r.instruction_id = prep.source.id;
  r.seed = cell.seed;
  r.sample_size = cell.size;
  r.macro_f1 = evaluate_macro_f1(trained.params, prep.test);
  r.random_f1 = random_baseline_f1(prep.test.label_counts(), derive_seed(cell.seed, kBaselineStream),
                                   config.baseline_trials);
  r.best_epoch = trained.history.best_epoch;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<CellResult> run_grid(const SweepConfig& config, std::size_t workers) {
  config.validate();
  const auto prepared = prepare(config);

  std::vector<CellSpec> cells;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    for (std::uint64_t seed : config.seeds) {
      for (std::size_t size : config.sample_sizes) cells.push_back({i, seed, size});
    }
  }
  for (const auto& cell : cells) {
    const std::size_t pool = prepared[cell.instruction].train.size();
    require(cell.size <= pool, ErrorKind::InvalidArgument,
            cell_name(config, cell) + ": sample size exceeds the training pool of " + std::to_string(pool));
  }

  std::vector<CellResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      try {
        results[k] = run_cell(config, prepared[cells[k].instruction], cells[k]);
        log::info(cell_name(config, cells[k]) + ": macro-F1 " + std::to_string(results[k].macro_f1));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, cells.size()));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const Error& e) {
      throw Error(e.kind(), cell_name(config, cells[k]) + ": " + e.what());
    }
  }
  return results;
}

double population_std(const std::vector<double>& values, double mean) {
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size()));
}

double mean_of(const std::vector<double>& values) {
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

template <typename T>
T parse_number(const std::string& text, const std::string& at, const char* column) {
  T value{};
  if constexpr (std::is_floating_point_v<T>) {
    char* end = nullptr;
    value = static_cast<T>(std::strtod(text.c_str(), &end));
    require(!text.empty() && end == text.c_str() + text.size(), ErrorKind::Parse,
            at + ": bad " + column + " '" + text + "'");
  } else {
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    require(!text.empty() && ec == std::errc() && ptr == text.data() + text.size(), ErrorKind::Parse,
            at + ": bad " + column + " '" + text + "'");
  }
  return value;
}

constexpr const char* kCellsHeader = "task,model,method,instruction,seed,sample_size,macro_f1,random_f1,best_epoch";

}  // namespace

void SweepConfig::validate() const {
  require(!instructions.empty(), ErrorKind::InvalidArgument, "sweep has no instructions");
  std::set<std::string> ids;
  for (const auto& src : instructions) {
    require(!src.id.empty(), ErrorKind::InvalidArgument, "instruction with an empty id");
    require(ids.insert(src.id).second, ErrorKind::InvalidArgument, "duplicate instruction id '" + src.id + "'");
  }
  require(!seeds.empty(), ErrorKind::InvalidArgument, "sweep has no seeds");
  require(!sample_sizes.empty(), ErrorKind::InvalidArgument, "sweep has no sample sizes");
  for (std::size_t s : sample_sizes) {
    require(s >= 2, ErrorKind::InvalidArgument, "sample size " + std::to_string(s) + " is below the minimum of 2");
  }
  if (kind == SweepKind::SampleEfficiency) {
    require(instructions.size() == 1, ErrorKind::InvalidArgument,
            "a sample-efficiency sweep takes exactly one instruction, got " + std::to_string(instructions.size()));
  }
  require(baseline_trials >= 1, ErrorKind::InvalidArgument, "baseline_trials must be at least 1");
  train.validate();
}

SweepConfig parse_sweep_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Parse, std::string("sweep config: malformed JSON (") + e.what() + ")");
  }
  require(root.is_object(), ErrorKind::Parse, "sweep config: expected a JSON object");
  reject_unknown_keys(root, {"task", "model", "kind", "instructions", "seeds", "sample_sizes", "train", "baseline_trials"},
                      "sweep config");

  SweepConfig c;
  c.task = get_field<std::string>(root, "task", "sweep config");
  c.model = get_field<std::string>(root, "model", "sweep config");
  if (root.contains("kind")) {
    const auto kind = get_field<std::string>(root, "kind", "sweep config");
    if (kind == "robustness") {
      c.kind = SweepKind::Robustness;
    } else if (kind == "sample_efficiency") {
      c.kind = SweepKind::SampleEfficiency;
    } else {
      fail(ErrorKind::InvalidArgument, "sweep config: unknown kind \"" + kind + "\"");
    }
  }
  require(root.contains("instructions") && root["instructions"].is_array(), ErrorKind::InvalidArgument,
          "sweep config: \"instructions\" must be an array");
  for (const auto& entry : root["instructions"]) {
    const std::string where = "sweep config instruction";
    require(entry.is_object(), ErrorKind::InvalidArgument, where + ": expected an object");
    reject_unknown_keys(entry, {"id", "train_reps", "test_reps", "train_meta", "test_meta"}, where);
    InstructionSource src;
    src.id = get_field<std::string>(entry, "id", where);
    src.train_reps = resolve(base_dir, get_field<std::string>(entry, "train_reps", where + " " + src.id));
    src.test_reps = resolve(base_dir, get_field<std::string>(entry, "test_reps", where + " " + src.id));
    if (entry.contains("train_meta")) src.train_meta = resolve(base_dir, get_field<std::string>(entry, "train_meta", where));
    if (entry.contains("test_meta")) src.test_meta = resolve(base_dir, get_field<std::string>(entry, "test_meta", where));
    c.instructions.push_back(std::move(src));
  }
  if (root.contains("seeds")) c.seeds = get_field<std::vector<std::uint64_t>>(root, "seeds", "sweep config");
  if (root.contains("sample_sizes")) {
    c.sample_sizes = get_field<std::vector<std::size_t>>(root, "sample_sizes", "sweep config");
  }
  if (root.contains("baseline_trials")) {
    c.baseline_trials = get_field<std::size_t>(root, "baseline_trials", "sweep config");
  }
  if (root.contains("train")) {
    const json& t = root["train"];
    const std::string where = "sweep config train";
    require(t.is_object(), ErrorKind::InvalidArgument, where + ": expected an object");
    reject_unknown_keys(t, {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs", "patience",
                            "val_frac", "key_dim", "score_scaling"},
                        where);
    auto& tc = c.train;
    if (t.contains("learning_rate")) tc.learning_rate = get_field<double>(t, "learning_rate", where);
    if (t.contains("beta1")) tc.beta1 = get_field<double>(t, "beta1", where);
    if (t.contains("beta2")) tc.beta2 = get_field<double>(t, "beta2", where);
    if (t.contains("epsilon")) tc.epsilon = get_field<double>(t, "epsilon", where);
    if (t.contains("batch_size")) tc.batch_size = get_field<std::size_t>(t, "batch_size", where);
    if (t.contains("max_epochs")) tc.max_epochs = get_field<std::size_t>(t, "max_epochs", where);
    if (t.contains("patience")) tc.patience = get_field<std::size_t>(t, "patience", where);
    if (t.contains("val_frac")) tc.val_frac = get_field<double>(t, "val_frac", where);
    if (t.contains("key_dim")) tc.key_dim = get_field<std::size_t>(t, "key_dim", where);
    if (t.contains("score_scaling")) tc.score_scaling = get_field<bool>(t, "score_scaling", where);
  }
  c.validate();
  return c;
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
  try {
    return parse_sweep_config(read_file(path), path.parent_path());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Io) throw;
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::size_t> sample_indices(std::span<const std::string> ids, std::span<const std::size_t> labels,
                                        std::uint64_t seed, std::size_t size) {
  require(size <= ids.size(), ErrorKind::InvalidArgument,
          "sample size " + std::to_string(size) + " exceeds the pool of " + std::to_string(ids.size()));
  auto order = stratified_order(ids, labels, derive_seed(seed, kSampleStream));
  order.resize(size);
  return order;
}

std::vector<CellResult> run_robustness_sweep(const SweepConfig& config, std::size_t workers) {
  require(config.kind == SweepKind::Robustness, ErrorKind::InvalidArgument, "config is not a robustness sweep");
  return run_grid(config, workers);
}

std::vector<CellResult> run_sample_efficiency(const SweepConfig& config, std::size_t workers) {
  require(config.kind == SweepKind::SampleEfficiency, ErrorKind::InvalidArgument,
          "config is not a sample-efficiency sweep");
  return run_grid(config, workers);
}

std::vector<CellResult> run_sweep(const SweepConfig& config, std::size_t workers) {
  log::info(std::string("running ") + kind_name(config.kind) + " sweep for " + config.task + "/" + config.model);
  return config.kind == SweepKind::Robustness ? run_robustness_sweep(config, workers)
                                              : run_sample_efficiency(config, workers);
}

const char* to_string(GroupBy by) noexcept {
  switch (by) {
    case GroupBy::Instruction: return "instruction";
    case GroupBy::SampleSize: return "sample_size";
    case GroupBy::Spread: return "spread";
  }
  return "unknown";
}

std::vector<AggregateResult> aggregate(std::span<const CellResult> results, GroupBy group_by) {
  require(!results.empty(), ErrorKind::InvalidArgument, "nothing to aggregate");

  using Key = std::tuple<std::string, std::string, std::string, std::size_t, std::string>;
  struct Group {
    std::vector<double> values;
    std::vector<double> baselines;
  };
  auto collect = [](std::span<const CellResult> cells, bool by_instruction) {
    std::vector<Key> order;
    std::map<Key, Group> groups;
    for (const auto& c : cells) {
      Key key{c.task, c.model, c.method, c.sample_size, by_instruction ? c.instruction_id : std::string("*")};
      auto [it, inserted] = groups.try_emplace(key);
      if (inserted) order.push_back(key);
      it->second.values.push_back(c.macro_f1);
      it->second.baselines.push_back(c.random_f1);
    }
    return std::pair{order, groups};
  };

  std::vector<AggregateResult> out;
  auto emit = [&](const std::vector<Key>& order, std::map<Key, Group>& groups, GroupBy by) {
    for (const auto& key : order) {
      const auto& g = groups[key];
      AggregateResult a;
      a.group_by = by;
      std::tie(a.task, a.model, a.method, a.sample_size, a.key) = key;
      a.mean = mean_of(g.values);
      a.std = population_std(g.values, a.mean);
      a.n = g.values.size();
      a.random_f1 = mean_of(g.baselines);
      out.push_back(std::move(a));
    }
  };

  if (group_by == GroupBy::Spread) {
    auto [order, groups] = collect(results, true);
    std::vector<CellResult> means;
    for (const auto& key : order) {
      CellResult c;
      std::tie(c.task, c.model, c.method, c.sample_size, c.instruction_id) = key;
      c.macro_f1 = mean_of(groups[key].values);
      c.random_f1 = mean_of(groups[key].baselines);
      means.push_back(std::move(c));
    }
    auto [outer_order, outer] = collect(means, false);
    emit(outer_order, outer, GroupBy::Spread);
  } else {
    auto [order, groups] = collect(results, group_by == GroupBy::Instruction);
    emit(order, groups, group_by);
  }
  return out;
}

std::string median_instruction(std::span<const CellResult> results) {
  require(!results.empty(), ErrorKind::InvalidArgument, "no results to pick an instruction from");
  std::map<std::string, std::vector<double>> per;
  for (const auto& c : results) per[c.instruction_id].push_back(c.macro_f1);
  std::vector<std::pair<double, std::string>> means;
  for (const auto& [id, values] : per) means.emplace_back(mean_of(values), id);
  std::sort(means.begin(), means.end());
  return means[(means.size() - 1) / 2].second;
}

std::vector<CellResult> ingest_icl_predictions(const std::filesystem::path& path, std::string_view task,
                                               std::string_view model) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }

  static const std::regex name_re(R"(^(.+)\.seed([0-9]+)(?:\.n([0-9]+))?\.csv$)");
  std::vector<CellResult> out;
  for (const auto& file : files) {
    const std::string name = file.filename().string();
    std::smatch m;
    require(std::regex_match(name, m, name_re), ErrorKind::InvalidArgument,
            file.string() + ": ICL table names must look like <instruction>.seed<seed>[.n<demos>].csv");
    const auto rows = parse_predictions(read_file(file), file.string());

    std::size_t n_classes = 2;
    for (const auto& row : rows) {
      require(row.gold.has_value(), ErrorKind::InvalidArgument,
              file.string() + ": example '" + row.example_id + "' has no gold label");
      n_classes = std::max(n_classes, *row.gold + 1);
      if (row.pred) n_classes = std::max(n_classes, *row.pred + 1);
      if (!row.probs.empty()) n_classes = std::max(n_classes, row.probs.size());
    }
    ConfusionMatrix cm(n_classes);
    for (const auto& row : rows) {
      if (row.pred) {
        cm.add(*row.gold, *row.pred);
      } else {
        cm.add_abstention(*row.gold);
      }
    }
    std::vector<std::uint64_t> gold_counts(n_classes, 0);
    for (const auto& row : rows) ++gold_counts[*row.gold];

    CellResult r;
    r.task = task;
    r.model = model;
    r.method = "icl";
    r.instruction_id = m[1].str();
    r.seed = std::stoull(m[2].str());
    r.sample_size = m[3].matched ? std::stoull(m[3].str()) : 0;
    r.macro_f1 = macro_f1(cm);
    r.random_f1 = rows.empty() ? 0.0 : random_baseline_f1(gold_counts, derive_seed(r.seed, kBaselineStream), 100);
    out.push_back(std::move(r));
  }
  return out;
}

std::string encode_cells(std::span<const CellResult> results) {
  std::string out = std::string(kCellsHeader) + '\n';
  for (const auto& c : results) {
    out += csv::escape(c.task) + ',' + csv::escape(c.model) + ',' + csv::escape(c.method) + ',' +
           csv::escape(c.instruction_id) + ',' + std::to_string(c.seed) + ',' + std::to_string(c.sample_size) + ',' +
           csv::format_double(c.macro_f1) + ',' + csv::format_double(c.random_f1) + ',' +
           std::to_string(c.best_epoch) + '\n';
  }
  return out;
}

std::vector<CellResult> parse_cells(std::string_view text, std::string_view source) {
  const auto all = csv::lines(text);
  const std::string where(source);
  require(!all.empty() && all[0] == kCellsHeader, ErrorKind::Parse,
          where + " line 1: expected header '" + std::string(kCellsHeader) + "'");
  std::vector<CellResult> out;
  std::vector<std::string> f;
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].empty()) continue;
    const std::string at = where + " line " + std::to_string(i + 1);
    require(csv::split(all[i], f) && f.size() == 9, ErrorKind::Parse, at + ": expected 9 fields");
    CellResult c;
    c.task = f[0];
    c.model = f[1];
    c.method = f[2];
    c.instruction_id = f[3];
    c.seed = parse_number<std::uint64_t>(f[4], at, "seed");
    c.sample_size = parse_number<std::size_t>(f[5], at, "sample_size");
    c.macro_f1 = parse_number<double>(f[6], at, "macro_f1");
    c.random_f1 = parse_number<double>(f[7], at, "random_f1");
    c.best_epoch = parse_number<std::size_t>(f[8], at, "best_epoch");
    require(c.macro_f1 >= 0.0 && c.macro_f1 <= 1.0, ErrorKind::Parse, at + ": macro_f1 outside [0, 1]");
    out.push_back(std::move(c));
  }
  return out;
}

std::string encode_aggregates(std::span<const AggregateResult> aggregates) {
  std::string out = "group_by,task,model,method,sample_size,key,mean,std,n,random_f1\n";
  for (const auto& a : aggregates) {
    out += std::string(to_string(a.group_by)) + ',' + csv::escape(a.task) + ',' + csv::escape(a.model) + ',' +
           csv::escape(a.method) + ',' + std::to_string(a.sample_size) + ',' + csv::escape(a.key) + ',' +
           csv::format_double(a.mean) + ',' + csv::format_double(a.std) + ',' + std::to_string(a.n) + ',' +
           csv::format_double(a.random_f1) + '\n';
  }
  return out;
}

std::vector<CellResult> run_sweep_to_dir(const std::filesystem::path& config_path,
                                         const std::filesystem::path& out_dir, std::size_t workers) {
  const SweepConfig config = load_sweep_config(config_path);
  // A missing input is a config mistake, not a runtime failure.
  for (const auto& src : config.instructions) {
    for (const auto* path : {&src.train_reps, &src.test_reps}) {
      require(std::filesystem::is_regular_file(*path), ErrorKind::InvalidArgument,
              config_path.string() + ": instruction " + src.id + ": no such file '" + path->string() + "'");
    }
    for (const auto* meta : {&src.train_meta, &src.test_meta}) {
      require(!*meta || std::filesystem::is_regular_file(**meta), ErrorKind::InvalidArgument,
              config_path.string() + ": instruction " + src.id + ": no such file '" +
                  (*meta ? (*meta)->string() : std::string()) + "'");
    }
  }
  const auto results = run_sweep(config, workers);

  std::vector<AggregateResult> aggregates;
  for (GroupBy by : {GroupBy::Instruction, GroupBy::SampleSize, GroupBy::Spread}) {
    auto part = aggregate(results, by);
    aggregates.insert(aggregates.end(), part.begin(), part.end());
  }
  std::string timings = "instruction,seed,sample_size,wall_seconds\n";
  for (const auto& c : results) {
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.3f", c.wall_seconds);
    timings += csv::escape(c.instruction_id) + ',' + std::to_string(c.seed) + ',' + std::to_string(c.sample_size) +
               ',' + secs + '\n';
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorKind::Io, "cannot create '" + out_dir.string() + "': " + ec.message());
  write_file_atomic(out_dir / "cells.csv", encode_cells(results));
  write_file_atomic(out_dir / "aggregates.csv", encode_aggregates(aggregates));
  write_file_atomic(out_dir / "timings.csv", timings);
  return results;
}

}  // namespace icprobe
