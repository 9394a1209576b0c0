#include "csiloc/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "csiloc/error.hpp"

namespace csiloc {

double nearest_rank(std::vector<double> values, int pct) {
  require(!values.empty(), ErrorCode::InvalidArgument, "percentile of an empty set");
  require(pct >= 1 && pct <= 100, ErrorCode::InvalidArgument, "percentile must lie in [1, 100]");
  const std::size_t n = values.size();
  const std::size_t rank = (static_cast<std::size_t>(pct) * n + 99) / 100;
  std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
  return values[rank - 1];
}

EvalReport evaluate(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& truths,
                    std::string method) {
  require(estimates.rows() == truths.rows() && estimates.cols() == truths.cols(),
          ErrorCode::DimensionMismatch, "estimates and truths differ in shape");
  require(truths.cols() >= 1, ErrorCode::InvalidArgument, "evaluation needs at least one sample");
  EvalReport r;
  r.method = std::move(method);
  r.n_samples = truths.cols();
  r.errors.resize(truths.cols());
  for (Eigen::Index u = 0; u < truths.cols(); ++u) {
    r.errors[u] = (estimates.col(u) - truths.col(u)).norm();
  }
  r.mde = std::accumulate(r.errors.begin(), r.errors.end(), 0.0) / r.errors.size();
  r.median_de = nearest_rank(r.errors, 50);
  r.p95_de = nearest_rank(r.errors, 95);
  return r;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  fail(ErrorCode::Config, "unknown report format '" + name + "'");
}

namespace {

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), ErrorCode::Io, "bad number '" + s + "' in report");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string format_reports(const std::vector<EvalReport>& reports, ReportFormat format) {
  if (format == ReportFormat::Json) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
      rows.push_back({{"method", r.method},
                      {"mde", r.mde},
                      {"median", r.median_de},
                      {"p95", r.p95_de},
                      {"n_samples", r.n_samples}});
    }
    nlohmann::ordered_json doc{{"schema", kReportSchema}, {"reports", rows}};
    return doc.dump(2) + "\n";
  }
  std::string out = std::string("# ") + kReportSchema + "\nmethod,mde,median,p95,n_samples\n";
  for (const auto& r : reports) {
    require(r.method.find_first_of(",\n") == std::string::npos, ErrorCode::InvalidArgument,
            "method label must not contain commas or newlines");
    out += r.method + "," + exact(r.mde) + "," + exact(r.median_de) + "," + exact(r.p95_de) + "," +
           std::to_string(r.n_samples) + "\n";
  }
  return out;
}

std::vector<EvalReport> parse_reports(const std::string& text, ReportFormat format) {
  std::vector<EvalReport> reports;
  if (format == ReportFormat::Json) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
      require(doc.at("schema").get<std::string>() == kReportSchema, ErrorCode::VersionUnsupported,
              "unsupported report schema");
      for (const auto& row : doc.at("reports")) {
        EvalReport r;
        r.method = row.at("method").get<std::string>();
        r.mde = row.at("mde").get<double>();
        r.median_de = row.at("median").get<double>();
        r.p95_de = row.at("p95").get<double>();
        r.n_samples = row.at("n_samples").get<long long>();
        reports.push_back(std::move(r));
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Io, std::string("malformed JSON report: ") + e.what());
    }
    return reports;
  }

  std::stringstream ss(text);
  std::string line;
  require(std::getline(ss, line) && line == std::string("# ") + kReportSchema,
          ErrorCode::VersionUnsupported, "missing or unsupported report header");
  require(std::getline(ss, line) && line == "method,mde,median,p95,n_samples", ErrorCode::Io,
          "unexpected CSV columns");
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    require(cells.size() == 5, ErrorCode::Io, "CSV row must have 5 cells");
    EvalReport r;
    r.method = cells[0];
    r.mde = parse_double(cells[1]);
    r.median_de = parse_double(cells[2]);
    r.p95_de = parse_double(cells[3]);
    r.n_samples = static_cast<long long>(parse_double(cells[4]));
    reports.push_back(std::move(r));
  }
  return reports;
}

void emit_report(const std::filesystem::path& path, const std::vector<EvalReport>& reports,
                 ReportFormat format) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << format_reports(reports, format);
  require(static_cast<bool>(out), ErrorCode::Io, "failed writing " + path.string());
}

std::vector<EvalReport> read_report(const std::filesystem::path& path, ReportFormat format) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_reports(buf.str(), format);
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.method.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %10s %10s %10s\n", static_cast<int>(width), "method",
                "MDE [m]", "median [m]", "p95 [m]");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-*s %10.4f %10.4f %10.4f\n", static_cast<int>(width),
                  r.method.c_str(), r.mde, r.median_de, r.p95_de);
    out += line;
  }
  return out;
}

}  // namespace csiloc
