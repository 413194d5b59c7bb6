// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>

#include "icprobe/icprobe.h"
#include "icprobe/io.hpp"
#include "support.hpp"

using namespace icprobe;
using namespace icprobe::testing;

namespace {

struct Fixture {
  TempDir dir{"capi"};
  std::string train = (dir / "train.icpr").string();
  std::string train_meta = (dir / "train.jsonl").string();
  std::string test = (dir / "test.icpr").string();

  Fixture() {
    const auto records = separable_records(40, 8, 2, 3);
    write_reps(records, train);
    write_file_atomic(train_meta, encode_meta(meta_for(records, "t", "i0", 0)));
    write_reps(separable_records(20, 8, 2, 4), test);
  }
};

icp_train_options quick_options() {
  icp_train_options o;
  icp_train_options_init(&o);
  o.key_dim = 8;
  o.learning_rate = 1e-2;
  o.max_epochs = 20;
  return o;
}

}  // namespace

TEST_CASE("version and status strings") {
  CHECK(std::strlen(icp_version()) > 0);
  CHECK(std::string(icp_status_string(ICP_OK)) != std::string(icp_status_string(ICP_ERR_PARSE)));
}

TEST_CASE("train options start at the documented defaults") {
  icp_train_options o;
  std::memset(&o, 0xAB, sizeof o);
  icp_train_options_init(&o);
  CHECK(o.learning_rate == 1e-3);
  CHECK(o.beta1 == 0.9);
  CHECK(o.beta2 == 0.999);
  CHECK(o.epsilon == 1e-8);
  CHECK(o.val_frac == 0.3);
  CHECK(o.batch_size == 8);
  CHECK(o.max_epochs == 100);
  CHECK(o.patience == 5);
  CHECK(o.key_dim == 64);
  CHECK(o.seed == 0);
  CHECK(o.score_scaling == 0);
  CHECK(o.train_size == 0);
}

TEST_CASE("load, train, save, reload, evaluate, predict") {
  Fixture fx;
  icp_dataset* data = nullptr;
  REQUIRE(icp_dataset_load(fx.train.c_str(), fx.train_meta.c_str(), &data) == ICP_OK);
  CHECK(icp_dataset_count(data) == 40);
  CHECK(icp_dataset_dim(data) == 8);
  CHECK(icp_dataset_labeled_count(data) == 40);

  const icp_train_options options = quick_options();
  icp_probe* probe = nullptr;
  icp_history* history = nullptr;
  REQUIRE(icp_train(data, &options, &probe, &history) == ICP_OK);

  const std::size_t n_epochs = icp_history_epochs(history);
  REQUIRE(n_epochs >= 1);
  CHECK(n_epochs <= 20);
  for (std::size_t i = 0; i < n_epochs; ++i) {
    std::size_t epoch = 0;
    double loss = -1, train_f1 = -1, val_f1 = -1;
    REQUIRE(icp_history_epoch(history, i, &epoch, &loss, &train_f1, &val_f1) == ICP_OK);
    CHECK(epoch == i + 1);
    CHECK(loss >= 0.0);
    CHECK(train_f1 >= 0.0);
    CHECK(train_f1 <= 1.0);
    CHECK(val_f1 >= 0.0);
    CHECK(val_f1 <= 1.0);
  }
  CHECK(icp_history_epoch(history, n_epochs, nullptr, nullptr, nullptr, nullptr) == ICP_ERR_INVALID_ARGUMENT);
  const std::size_t best = icp_history_best_epoch(history);
  CHECK(best >= 1);
  CHECK(best <= n_epochs);
  CHECK(icp_history_stopped_early(history) == (n_epochs < 20 ? 1 : 0));
  CHECK(icp_history_warning(history, icp_history_warning_count(history)) == nullptr);

  std::uint32_t dim = 0, key_dim = 0, n_classes = 0;
  REQUIRE(icp_probe_shape(probe, &dim, &key_dim, &n_classes) == ICP_OK);
  CHECK(dim == 8);
  CHECK(key_dim == 8);
  CHECK(n_classes == 2);

  const std::string ckpt = (fx.dir / "probe.icpk").string();
  const std::string hist = (fx.dir / "history.csv").string();
  REQUIRE(icp_probe_save(probe, ckpt.c_str()) == ICP_OK);
  REQUIRE(icp_history_write_csv(history, hist.c_str()) == ICP_OK);
  CHECK(read_file(hist).rfind("epoch,train_loss,train_macro_f1,val_macro_f1,best\n", 0) == 0);

  icp_probe* reloaded = nullptr;
  REQUIRE(icp_probe_load(ckpt.c_str(), &reloaded) == ICP_OK);

  icp_dataset* test = nullptr;
  REQUIRE(icp_dataset_load(fx.test.c_str(), nullptr, &test) == ICP_OK);
  icp_eval* a = nullptr;
  icp_eval* b = nullptr;
  REQUIRE(icp_evaluate(probe, test, &a) == ICP_OK);
  REQUIRE(icp_evaluate(reloaded, test, &b) == ICP_OK);
  CHECK(icp_eval_macro_f1(a) == icp_eval_macro_f1(b));
  CHECK(icp_eval_n_classes(a) == 2);
  CHECK(icp_eval_total(a) == 20);
  std::uint64_t sum = 0;
  for (std::uint32_t g = 0; g < 2; ++g) {
    for (std::uint32_t p = 0; p < 2; ++p) sum += icp_eval_count(a, g, p);
  }
  CHECK(sum == 20);
  CHECK(icp_eval_macro_f1(a) ==
        doctest::Approx((icp_eval_class_f1(a, 0) + icp_eval_class_f1(a, 1)) / 2).epsilon(1e-12));

  const std::string preds = (fx.dir / "preds.csv").string();
  REQUIRE(icp_predict_to_file(reloaded, test, preds.c_str()) == ICP_OK);
  const auto rows = parse_predictions(read_file(preds));
  CHECK(rows.size() == 20);

  icp_eval_free(a);
  icp_eval_free(b);
  icp_dataset_free(test);
  icp_probe_free(reloaded);
  icp_probe_free(probe);
  icp_history_free(history);
  icp_dataset_free(data);
}

TEST_CASE("training through the C API is deterministic") {
  Fixture fx;
  icp_dataset* data = nullptr;
  REQUIRE(icp_dataset_load(fx.train.c_str(), fx.train_meta.c_str(), &data) == ICP_OK);
  icp_train_options options = quick_options();
  options.seed = 7;
  std::string bytes[2];
  for (int run = 0; run < 2; ++run) {
    icp_probe* probe = nullptr;
    REQUIRE(icp_train(data, &options, &probe, nullptr) == ICP_OK);
    const std::string path = (fx.dir / ("p" + std::to_string(run) + ".icpk")).string();
    REQUIRE(icp_probe_save(probe, path.c_str()) == ICP_OK);
    bytes[run] = read_file(path);
    icp_probe_free(probe);
  }
  CHECK(bytes[0] == bytes[1]);
  icp_dataset_free(data);
}

TEST_CASE("errors come back as status codes with a message") {
  Fixture fx;
  icp_dataset* data = nullptr;
  CHECK(icp_dataset_load((fx.dir / "missing.icpr").string().c_str(), nullptr, &data) == ICP_ERR_IO);
  CHECK(data == nullptr);
  CHECK(std::strlen(icp_last_error()) > 0);

  write_file_atomic(fx.dir / "junk.icpr", "JUNKJUNKJUNKJUNKJUNKJUNK");
  CHECK(icp_dataset_load((fx.dir / "junk.icpr").string().c_str(), nullptr, &data) == ICP_ERR_PARSE);

  CHECK(icp_dataset_load(nullptr, nullptr, &data) == ICP_ERR_INVALID_ARGUMENT);

  // Unlabeled data cannot be trained on or evaluated.
  write_reps(std::vector<RepRecord>{{RepSequence(2, 8, std::vector<float>(16, 0.5f)), std::nullopt}},
             fx.dir / "unlabeled.icpr");
  REQUIRE(icp_dataset_load((fx.dir / "unlabeled.icpr").string().c_str(), nullptr, &data) == ICP_OK);
  CHECK(icp_dataset_labeled_count(data) == 0);
  icp_probe* probe = nullptr;
  const icp_train_options options = quick_options();
  CHECK(icp_train(data, &options, &probe, nullptr) == ICP_ERR_INVALID_ARGUMENT);
  CHECK(probe == nullptr);

  // Dimension mismatch between a probe and a dataset.
  icp_dataset* train = nullptr;
  REQUIRE(icp_dataset_load(fx.train.c_str(), nullptr, &train) == ICP_OK);
  REQUIRE(icp_train(train, &options, &probe, nullptr) == ICP_OK);
  write_reps(std::vector<RepRecord>{{RepSequence(2, 4, std::vector<float>(8, 0.5f)), 0u}}, fx.dir / "d4.icpr");
  icp_dataset* narrow = nullptr;
  REQUIRE(icp_dataset_load((fx.dir / "d4.icpr").string().c_str(), nullptr, &narrow) == ICP_OK);
  icp_eval* eval = nullptr;
  CHECK(icp_evaluate(probe, narrow, &eval) == ICP_ERR_DIMENSION);
  CHECK(icp_evaluate(probe, data, &eval) == ICP_ERR_INVALID_ARGUMENT);
  CHECK(eval == nullptr);

  icp_train_options bad = quick_options();
  bad.val_frac = 1.5;
  icp_probe* other = nullptr;
  CHECK(icp_train(train, &bad, &other, nullptr) == ICP_ERR_INVALID_ARGUMENT);

  icp_dataset_free(narrow);
  icp_probe_free(probe);
  icp_dataset_free(train);
  icp_dataset_free(data);

  // Freeing null is a no-op.
  icp_dataset_free(nullptr);
  icp_probe_free(nullptr);
  icp_history_free(nullptr);
  icp_eval_free(nullptr);
}

TEST_CASE("sweep and report through the C API are byte-deterministic") {
  TempDir dir("capi_sweep");
  const auto sweep = write_synthetic_sweep(dir.path(), 2, 40, 20, 8, 0.05, "[0, 1]", "[10, 20]",
                                           "\"key_dim\": 8, \"max_epochs\": 10");
  std::size_t cells = 0;
  REQUIRE(icp_sweep_run(sweep.config.string().c_str(), (dir / "a").string().c_str(), 1, &cells) == ICP_OK);
  CHECK(cells == 8);
  REQUIRE(icp_sweep_run(sweep.config.string().c_str(), (dir / "b").string().c_str(), 3, &cells) == ICP_OK);
  CHECK(read_file(dir / "a" / "cells.csv") == read_file(dir / "b" / "cells.csv"));
  CHECK(read_file(dir / "a" / "aggregates.csv") == read_file(dir / "b" / "aggregates.csv"));

  std::size_t files_a = 0, files_b = 0;
  REQUIRE(icp_report((dir / "a" / "cells.csv").string().c_str(), (dir / "ra").string().c_str(), &files_a) == ICP_OK);
  REQUIRE(icp_report((dir / "b" / "cells.csv").string().c_str(), (dir / "rb").string().c_str(), &files_b) == ICP_OK);
  CHECK(files_a == files_b);
  CHECK(files_a >= 2);
  for (const auto& entry : std::filesystem::directory_iterator(dir / "ra")) {
    CHECK(read_file(entry.path()) == read_file(dir / "rb" / entry.path().filename()));
  }

  CHECK(icp_sweep_run((dir / "nope.json").string().c_str(), (dir / "c").string().c_str(), 1, &cells) != ICP_OK);
  CHECK(!std::filesystem::exists(dir / "c" / "cells.csv"));
}

TEST_CASE("random baseline through the C API") {
  const std::uint64_t counts[2] = {5000, 5000};
  double f1 = 0.0;
  REQUIRE(icp_random_baseline_f1(counts, 2, 1, 100, 0, &f1) == ICP_OK);
  CHECK(std::abs(f1 - 0.5) <= 0.02);
  CHECK(icp_random_baseline_f1(counts, 2, 1, 100, 7, &f1) == ICP_ERR_INVALID_ARGUMENT);
  CHECK(icp_random_baseline_f1(nullptr, 2, 1, 100, 0, &f1) == ICP_ERR_INVALID_ARGUMENT);
}
