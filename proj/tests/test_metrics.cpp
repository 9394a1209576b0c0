#include <gtest/gtest.h>

#include <filesystem>

#include "csiloc/error.hpp"
#include "csiloc/metrics.hpp"
#include "support/generators.hpp"

namespace csiloc {
namespace {

using testing::Gen;

// Estimates on the x axis at distances 1..n from the origin truths.
EvalReport ramp(int n) {
  Eigen::MatrixXd est = Eigen::MatrixXd::Zero(2, n);
  for (int i = 0; i < n; ++i) est(0, i) = n - i;
  return evaluate(est, Eigen::MatrixXd::Zero(2, n), "ramp");
}

TEST(MetricsTest, PerfectEstimatesAreZero) {
  Gen gen(71);
  Eigen::MatrixXd pts(2, 10);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = testing::uniform(gen, 0, 4);
  const EvalReport r = evaluate(pts, pts);
  EXPECT_EQ(r.mde, 0.0);
  EXPECT_EQ(r.median_de, 0.0);
  EXPECT_EQ(r.p95_de, 0.0);
  EXPECT_EQ(r.n_samples, 10);
}

TEST(MetricsTest, OneToHundred) {
  const EvalReport r = ramp(100);
  EXPECT_DOUBLE_EQ(r.mde, 50.5);
  EXPECT_EQ(r.median_de, 50.0);
  EXPECT_EQ(r.p95_de, 95.0);
  EXPECT_EQ(r.errors.front(), 100.0);
}

TEST(MetricsTest, SingleSample) {
  const EvalReport r = evaluate(Eigen::Vector2d(0, 2), Eigen::Vector2d(0, 0));
  EXPECT_EQ(r.mde, 2.0);
  EXPECT_EQ(r.median_de, 2.0);
  EXPECT_EQ(r.p95_de, 2.0);
}

TEST(MetricsTest, NearestRankIndices) {
  // Rank ceil(pct * n / 100), 1-indexed.
  EXPECT_EQ(nearest_rank({3, 1, 2}, 50), 2.0);
  EXPECT_EQ(nearest_rank({4, 1, 3, 2}, 50), 2.0);
  EXPECT_EQ(nearest_rank({4, 1, 3, 2}, 95), 4.0);
  EXPECT_EQ(nearest_rank({5, 1, 3, 2, 4, 6, 7, 8, 9, 10}, 95), 10.0);
  EXPECT_EQ(nearest_rank({7}, 1), 7.0);
  EXPECT_THROW(nearest_rank({}, 50), Error);
}

TEST(MetricsTest, ShapeMismatchRejected) {
  EXPECT_THROW(evaluate(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 4)), Error);
  EXPECT_THROW(evaluate(Eigen::MatrixXd::Zero(2, 0), Eigen::MatrixXd::Zero(2, 0)), Error);
}

TEST(MetricsPropertyTest, ZeroErrorSampleNeverRaisesMde) {
  Gen gen(72);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = testing::uniform_int(gen, 1, 40);
    Eigen::MatrixXd est(2, n + 1);
    Eigen::MatrixXd truth(2, n + 1);
    for (Eigen::Index i = 0; i < est.size(); ++i) {
      est.data()[i] = testing::uniform(gen, 0, 4);
      truth.data()[i] = testing::uniform(gen, 0, 4);
    }
    est.col(n) = truth.col(n);
    const double before = evaluate(est.leftCols(n), truth.leftCols(n)).mde;
    EXPECT_LE(evaluate(est, truth).mde, before);
  }
}

TEST(ReportFormatTest, CsvLayout) {
  const std::vector<EvalReport> reports{EvalReport{"average", 0.25, 0.2, 0.5, 400, {}},
                                        EvalReport{"nn", 0.125, 0.1, 0.3, 400, {}}};
  const std::string text = format_reports(reports, ReportFormat::Csv);
  EXPECT_EQ(text,
            "# csiloc-report v1\n"
            "method,mde,median,p95,n_samples\n"
            "average,0.25,0.20000000000000001,0.5,400\n"
            "nn,0.125,0.10000000000000001,0.29999999999999999,400\n");
  EvalReport bad{"a,b", 1, 1, 1, 1, {}};
  EXPECT_THROW(format_reports({bad}, ReportFormat::Csv), Error);
}

TEST(ReportFormatTest, RoundTripsBothFormats) {
  Gen gen(73);
  std::vector<EvalReport> reports;
  for (const char* name : {"ap1-tx1", "stacked", "gaussian-conflation"}) {
    EvalReport r = ramp(testing::uniform_int(gen, 1, 50));
    r.method = name;
    r.mde = testing::uniform(gen, 0, 1);
    r.errors.clear();
    reports.push_back(r);
  }
  const auto dir = std::filesystem::temp_directory_path() / "csiloc_metrics_test";
  std::filesystem::create_directories(dir);
  for (auto [format, file] : {std::pair{ReportFormat::Csv, "r.csv"}, std::pair{ReportFormat::Json, "r.json"}}) {
    emit_report(dir / file, reports, format);
    const auto back = read_report(dir / file, format);
    ASSERT_EQ(back.size(), reports.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      EXPECT_EQ(back[i].method, reports[i].method);
      EXPECT_EQ(back[i].mde, reports[i].mde);
      EXPECT_EQ(back[i].median_de, reports[i].median_de);
      EXPECT_EQ(back[i].p95_de, reports[i].p95_de);
      EXPECT_EQ(back[i].n_samples, reports[i].n_samples);
    }
    EXPECT_EQ(format_reports(back, format), format_reports(reports, format));
  }
  std::filesystem::remove_all(dir);
  EXPECT_EQ(parse_report_format("json"), ReportFormat::Json);
  EXPECT_THROW(parse_report_format("xml"), Error);
  EXPECT_THROW(parse_reports("garbage", ReportFormat::Csv), Error);
  EXPECT_THROW(parse_reports("{\"schema\": 1}", ReportFormat::Json), Error);
}

TEST(ReportFormatTest, TableListsEveryMethod) {
  const std::string table = format_table({EvalReport{"average", 0.25, 0.2, 0.5, 4, {}},
                                          EvalReport{"prob-conflation", 0.5, 0.4, 0.9, 4, {}}});
  EXPECT_NE(table.find("average"), std::string::npos);
  EXPECT_NE(table.find("prob-conflation"), std::string::npos);
}

}  // namespace
}  // namespace csiloc
