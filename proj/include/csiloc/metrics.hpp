#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace csiloc {

struct EvalReport {
  std::string method;
  double mde = 0.0;
  double median_de = 0.0;
  double p95_de = 0.0;
  long long n_samples = 0;
  /// Per-sample distance errors, in input order. Not written to report files.
  std::vector<double> errors;
};

/// Nearest-rank order statistic: the ceil(pct/100 * n)-th smallest value (1-indexed).
double nearest_rank(std::vector<double> values, int pct);

/**
 * Distance errors between matching columns of D x N estimates and truths.
 * Median and p95 use nearest_rank with pct 50 and 95.
 */
EvalReport evaluate(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truths,
                    std::string method = {});

enum class ReportFormat { Csv, Json };

ReportFormat parse_report_format(const std::string& name);

/// Header comment (CSV) or "schema" value (JSON) identifying the report layout.
inline constexpr const char* kReportSchema = "csiloc-report v1";

/// Columns method, mde, median, p95, n_samples; rows in the given order.
std::string format_reports(const std::vector<EvalReport>& reports, ReportFormat format);
std::vector<EvalReport> parse_reports(const std::string& text, ReportFormat format);

void emit_report(const std::filesystem::path& path, const std::vector<EvalReport>& reports,
                 ReportFormat format);
std::vector<EvalReport> read_report(const std::filesystem::path& path, ReportFormat format);

/// Fixed-width text table for terminals.
std::string format_table(const std::vector<EvalReport>& reports);

}  // namespace csiloc
