// SPDX-License-Identifier: Apache-2.0

// icprobe command line: train, eval, predict, sweep, report.
//
// Exit codes: 0 success, 1 validation error (bad flags or input), 2 runtime
// failure.

#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "icprobe/icprobe.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

int report_failure(icp_status status) {
  std::fprintf(stderr, "icprobe: %s: %s\n", icp_status_string(status), icp_last_error());
  switch (status) {
    case ICP_ERR_INVALID_ARGUMENT:
    case ICP_ERR_DIMENSION:
    case ICP_ERR_PARSE:
    case ICP_ERR_VERSION:
      return kExitValidation;
    default:
      return kExitRuntime;
  }
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
};

using Dataset = Handle<icp_dataset, icp_dataset_free>;
using Probe = Handle<icp_probe, icp_probe_free>;
using History = Handle<icp_history, icp_history_free>;
using Eval = Handle<icp_eval, icp_eval_free>;

struct TrainArgs {
  std::string reps;
  std::string meta;
  std::string out;
  icp_train_options options{};
  bool score_scaling = false;
};

int run_train(TrainArgs& args) {
  Dataset data;
  if (auto s = icp_dataset_load(args.reps.c_str(), args.meta.empty() ? nullptr : args.meta.c_str(), data.out())) {
    return report_failure(s);
  }
  args.options.score_scaling = args.score_scaling ? 1 : 0;
  Probe probe;
  History history;
  if (auto s = icp_train(data.ptr, &args.options, probe.out(), history.out())) return report_failure(s);
  for (size_t i = 0; i < icp_history_warning_count(history.ptr); ++i) {
    std::fprintf(stderr, "icprobe: warning: %s\n", icp_history_warning(history.ptr, i));
  }

  const std::string history_path = args.out + ".history.csv";
  if (auto s = icp_probe_save(probe.ptr, args.out.c_str())) return report_failure(s);
  if (auto s = icp_history_write_csv(history.ptr, history_path.c_str())) {
    std::error_code ignored;
    std::filesystem::remove(args.out, ignored);
    return report_failure(s);
  }
  std::printf("checkpoint: %s\nhistory: %s\nepochs: %zu%s\nbest epoch: %zu\nvalidation macro-F1: %.4f\n",
              args.out.c_str(), history_path.c_str(), icp_history_epochs(history.ptr),
              icp_history_stopped_early(history.ptr) ? " (early stop)" : "", icp_history_best_epoch(history.ptr),
              icp_history_best_val_f1(history.ptr));
  return kExitOk;
}

int run_eval(const std::string& ckpt, const std::string& reps, const std::string& meta) {
  Probe probe;
  if (auto s = icp_probe_load(ckpt.c_str(), probe.out())) return report_failure(s);
  Dataset data;
  if (auto s = icp_dataset_load(reps.c_str(), meta.empty() ? nullptr : meta.c_str(), data.out())) {
    return report_failure(s);
  }
  Eval eval;
  if (auto s = icp_evaluate(probe.ptr, data.ptr, eval.out())) return report_failure(s);

  const uint32_t c = icp_eval_n_classes(eval.ptr);
  std::printf("examples\t%llu\n", static_cast<unsigned long long>(icp_eval_total(eval.ptr)));
  std::printf("macro_f1\t%.4f\n", icp_eval_macro_f1(eval.ptr));
  std::printf("class\tf1\n");
  for (uint32_t k = 0; k < c; ++k) std::printf("%u\t%.4f\n", k, icp_eval_class_f1(eval.ptr, k));
  std::printf("confusion (rows = gold, columns = predicted)\ngold\\pred");
  for (uint32_t p = 0; p < c; ++p) std::printf("\t%u", p);
  std::printf("\n");
  for (uint32_t g = 0; g < c; ++g) {
    std::printf("%u", g);
    for (uint32_t p = 0; p < c; ++p) {
      std::printf("\t%llu", static_cast<unsigned long long>(icp_eval_count(eval.ptr, g, p)));
    }
    std::printf("\n");
  }
  return kExitOk;
}

int run_predict(const std::string& ckpt, const std::string& reps, const std::string& out) {
  Probe probe;
  if (auto s = icp_probe_load(ckpt.c_str(), probe.out())) return report_failure(s);
  Dataset data;
  if (auto s = icp_dataset_load(reps.c_str(), nullptr, data.out())) return report_failure(s);
  if (auto s = icp_predict_to_file(probe.ptr, data.ptr, out.c_str())) return report_failure(s);
  std::printf("predictions: %s (%zu examples)\n", out.c_str(), icp_dataset_count(data.ptr));
  return kExitOk;
}

int run_sweep(const std::string& config, const std::string& out_dir, uint32_t workers) {
  size_t cells = 0;
  if (auto s = icp_sweep_run(config.c_str(), out_dir.c_str(), workers, &cells)) return report_failure(s);
  std::printf("cells: %zu\nwritten to: %s\n", cells, out_dir.c_str());
  return kExitOk;
}

int run_report(const std::string& cells, const std::string& out_dir) {
  size_t files = 0;
  if (auto s = icp_report(cells.c_str(), out_dir.c_str(), &files)) return report_failure(s);
  std::printf("files: %zu\nwritten to: %s\n", files, out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attentional probes over instruction-contextualized LLM representations"};
  app.set_version_flag("--version", std::string(icp_version()));
  app.require_subcommand(1);

  TrainArgs train;
  icp_train_options_init(&train.options);
  auto* train_cmd = app.add_subcommand("train", "Train a probe on an ICPR container and write a checkpoint");
  train_cmd->add_option("--reps", train.reps, "ICPR representation container")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--meta", train.meta, "Newline-delimited example metadata (one JSON object per line)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "Checkpoint path; the history table goes to <out>.history.csv")
      ->required();
  train_cmd->add_option("--seed", train.options.seed, "Seed for initialization, splitting and shuffling")
      ->capture_default_str();
  train_cmd->add_option("--train-size", train.options.train_size,
                        "Train on a stratified sample of this many examples (0 = all)")
      ->capture_default_str();
  train_cmd->add_option("--val-frac", train.options.val_frac, "Fraction of examples held out for validation")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--patience", train.options.patience,
                        "Epochs without strict validation improvement before stopping")
      ->capture_default_str();
  train_cmd->add_option("--lr", train.options.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch-size", train.options.batch_size, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--max-epochs", train.options.max_epochs, "Upper bound on training epochs")
      ->capture_default_str();
  train_cmd->add_option("--key-dim", train.options.key_dim, "Width of the key/query projections")
      ->capture_default_str();
  train_cmd->add_flag("--score-scaling", train.score_scaling, "Divide attention scores by sqrt(key dim)");

  std::string eval_ckpt, eval_reps, eval_meta;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a labeled container (macro-F1, confusion)");
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--reps", eval_reps, "Labeled ICPR representation container")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--meta", eval_meta, "Newline-delimited example metadata")->check(CLI::ExistingFile);

  std::string pred_ckpt, pred_reps, pred_out;
  auto* predict_cmd = app.add_subcommand("predict", "Write a predictions table for an ICPR container");
  predict_cmd->add_option("--ckpt", pred_ckpt, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--reps", pred_reps, "ICPR representation container")
      ->required()
      ->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", pred_out, "Predictions table (example_id,gold,pred,p_0..)")->required();

  std::string sweep_config, sweep_out;
  uint32_t sweep_workers = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a robustness or sample-efficiency sweep from a JSON config");
  sweep_cmd->add_option("--config", sweep_config, "Sweep configuration (JSON)")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out-dir", sweep_out, "Directory for cells.csv, aggregates.csv and timings.csv")
      ->required();
  sweep_cmd->add_option("--workers", sweep_workers, "Cells trained in parallel")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  std::string report_cells, report_out;
  auto* report_cmd = app.add_subcommand("report", "Aggregate a cells table and render SVG charts");
  report_cmd->add_option("--cells", report_cells, "Cells table written by sweep")
      ->required()
      ->check(CLI::ExistingFile);
  report_cmd->add_option("--out-dir", report_out, "Directory for aggregates.csv and the charts")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  if (*train_cmd) return run_train(train);
  if (*eval_cmd) return run_eval(eval_ckpt, eval_reps, eval_meta);
  if (*predict_cmd) return run_predict(pred_ckpt, pred_reps, pred_out);
  if (*sweep_cmd) return run_sweep(sweep_config, sweep_out, sweep_workers);
  if (*report_cmd) return run_report(report_cells, report_out);
  return kExitValidation;
}
