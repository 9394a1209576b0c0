#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "csiloc/error.hpp"
#include "csiloc/pipeline.hpp"

namespace csiloc {
namespace {

constexpr const char* kTinyConfig = R"({
  "train_set": {"count": 40},
  "test_set": {"count": 12},
  "grid": {"side_count": 4},
  "train": {"epochs": 2, "batch_size": 16},
  "finetune": {"epochs": 2, "batch_size": 16},
  "hidden_layers": [16, 8]
})";

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("csiloc_pipe_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    cfg_ = parse_run_config(kTinyConfig);
    cfg_.output_dir = (dir_ / "run").string();
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  RunConfig cfg_;
};

TEST(InputSelectorTest, ParseAndPrint) {
  EXPECT_EQ(InputSelector::parse("stacked"), (InputSelector{true, 0, -1}));
  EXPECT_EQ(InputSelector::parse("1:0"), (InputSelector{false, 1, 0}));
  EXPECT_EQ(InputSelector::parse("1"), (InputSelector{false, 1, -1}));
  for (const char* s : {"stacked", "0:1", "1"}) EXPECT_EQ(InputSelector::parse(s).to_string(), s);
  for (const char* s : {"", "x", "1:", ":1", "-1:0", "1:2:3"}) EXPECT_THROW(InputSelector::parse(s), Error) << s;
}

TEST(ParallelForTest, CoversRangeAndRethrows) {
  std::vector<int> hits(37, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(5,
                            [](std::size_t i) {
                              if (i == 3) fail(ErrorCode::NumericFailure, "boom");
                            }),
               Error);
}

TEST_F(PipelineTest, SelectionWidths) {
  Dataset ds = simulate_split(cfg_, Split::Train);
  EXPECT_EQ(ds.samples.size(), 80u);
  featurize(ds, true);
  label(ds);
  const int per_tx = per_tx_feature_length(cfg_.sim.cp_length, cfg_.sim.rx_antennas);
  EXPECT_EQ(per_tx, 512);

  const SelectedData link = select_inputs(ds, InputSelector{false, 1, 0});
  EXPECT_EQ(link.features.rows(), per_tx);
  EXPECT_EQ(link.features.cols(), 40);
  EXPECT_EQ(link.labels->rows(), 16);
  EXPECT_EQ(select_inputs(ds, InputSelector{false, 0, -1}).features.rows(), 2 * per_tx);

  const SelectedData stacked = select_inputs(ds, InputSelector{true, 0, -1});
  // B * M_T * 512 rows: every AP's row concatenated in AP order.
  EXPECT_EQ(stacked.features.rows(), 2 * 2 * per_tx);
  EXPECT_EQ(stacked.features.cols(), 40);
  EXPECT_EQ(stacked.features.block(2 * per_tx, 5, 2 * per_tx, 1),
            select_inputs(ds, InputSelector{false, 1, -1}).features.col(5));
  EXPECT_EQ(stacked.snapshots, link.snapshots);
  EXPECT_THROW(select_inputs(ds, InputSelector{false, 2, 0}), Error);
}

TEST_F(PipelineTest, FileStagesEndToEnd) {
  const fs::path d = dir_;
  stage_simulate(cfg_, Split::Train, d / "train_raw.csil");
  stage_simulate(cfg_, Split::Test, d / "test_raw.csil");
  stage_featurize(d / "train_raw.csil", d / "train_feat.csil", true);
  stage_featurize(d / "test_raw.csil", d / "test_feat.csil", true);
  stage_label(d / "train_feat.csil", d / "train.csil", std::nullopt);
  stage_train(d / "train.csil", d / "m0.csil", InputSelector::parse("0:0"));
  stage_train(d / "train.csil", d / "m1.csil", InputSelector::parse("1:1"));
  const std::vector<fs::path> models{d / "m0.csil", d / "m1.csil"};
  stage_finetune(models, d / "train.csil", d / "w.csil");

  std::vector<std::pair<FusionMethod, fs::path>> exchanges;
  for (FusionMethod m : {FusionMethod::Average, FusionMethod::ProbConflation,
                         FusionMethod::GaussianConflation, FusionMethod::Nn}) {
    const fs::path x = d / ("x_" + to_string(m) + ".csil");
    stage_exchange(models, d / "test_feat.csil", m, x);
    exchanges.emplace_back(m, x);
  }
  // Fusion reads only the exchange file (and the weights for nn).
  fs::copy_file(d / "m0.csil", d / "keep_m0.csil");
  fs::remove(d / "m0.csil");
  fs::remove(d / "m1.csil");
  for (const auto& [m, x] : exchanges) {
    const fs::path est = d / ("est_" + to_string(m) + ".csil");
    const std::optional<fs::path> w = m == FusionMethod::Nn ? std::optional(d / "w.csil") : std::nullopt;
    stage_fuse(x, m, w, est);
    const EvalReport r = stage_eval(est, d / "test_feat.csil");
    EXPECT_EQ(r.n_samples, 12);
    EXPECT_TRUE(std::isfinite(r.mde));
    EXPECT_EQ(r.method, to_string(m));
  }
  EXPECT_THROW(stage_fuse(exchanges.back().second, FusionMethod::Nn, std::nullopt, d / "e.csil"), Error);

  // Labels are needed for training; features alone are not enough.
  try {
    stage_train(d / "train_feat.csil", d / "bad.csil", InputSelector::parse("0:0"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(exit_code_for(e.code()), 3);
  }
  const ModelFile kept = load_model(d / "keep_m0.csil");
  EXPECT_EQ(kept.model.input_width(), 512);
  EXPECT_EQ(kept.model.output_width(), 16);
}

TEST_F(PipelineTest, ReproIsReproducibleAcrossWorkerCounts) {
  setenv("CSILOC_WORKERS", "1", 1);
  const ReproResult first = run_repro(cfg_);
  ASSERT_EQ(first.reports.size(), 4u + 1u + cfg_.fusion.size());
  EXPECT_EQ(first.reports[0].method, link_label(0, 0));
  EXPECT_EQ(first.reports[3].method, "ap2-tx2");
  EXPECT_EQ(first.reports[4].method, kStackedLabel);
  EXPECT_EQ(first.reports.back().method, "nn");

  const fs::path run = cfg_.output_dir;
  std::map<std::string, std::vector<std::uint8_t>> before;
  for (const auto& entry : fs::directory_iterator(run)) before[entry.path().filename()] = slurp(entry.path());
  ASSERT_TRUE(before.count("report.csv"));
  ASSERT_TRUE(before.count("report.json"));

  setenv("CSILOC_WORKERS", "3", 1);
  const ReproResult second = run_repro(cfg_);
  unsetenv("CSILOC_WORKERS");
  for (const auto& [name, bytes] : before) EXPECT_EQ(slurp(run / name), bytes) << name;

  const auto reread = read_report(run / "report.csv", ReportFormat::Csv);
  ASSERT_EQ(reread.size(), first.reports.size());
  for (std::size_t i = 0; i < reread.size(); ++i) EXPECT_EQ(reread[i].mde, second.reports[i].mde);

  // Exchange payloads: K * B' or 2 * D * B' float64 values per sample after the header.
  const int k = cfg_.grid.side_count * cfg_.grid.side_count;
  for (const auto& [method, path] : first.exchange_files) {
    const bool gaussian = method == "gaussian-conflation";
    const auto sections = read_container(path, gaussian ? FileKind::MeanVariance : FileKind::Maps);
    for (const Section& s : sections) {
      if (s.tag == "MAPS") EXPECT_EQ(s.payload.size(), kExchangeHeaderBytes + 12u * k * 4 * 8);
      if (s.tag == "MVAR") EXPECT_EQ(s.payload.size(), kExchangeHeaderBytes + 12u * 2 * 2 * 4 * 8);
    }
  }
}

TEST(WorkerCountTest, ReadsEnvironment) {
  setenv("CSILOC_WORKERS", "2", 1);
  EXPECT_EQ(worker_count(), 2);
  setenv("CSILOC_WORKERS", "zero", 1);
  EXPECT_THROW(worker_count(), Error);
  unsetenv("CSILOC_WORKERS");
  EXPECT_GE(worker_count(), 1);
}

}  // namespace
}  // namespace csiloc
