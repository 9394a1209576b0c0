#include "csiloc/fusion.hpp"

#include <cmath>
#include <limits>

#include "csiloc/error.hpp"

namespace csiloc {

FusionWeights FusionWeights::averaging(const Grid& g, int links) {
  require(links >= 1, ErrorCode::InvalidArgument, "fusion needs at least one link");
  FusionWeights w;
  w.links = links;
  w.matrix.resize(g.dims(), static_cast<Eigen::Index>(g.count()) * links);
  for (int b = 0; b < links; ++b) {
    w.matrix.middleCols(static_cast<Eigen::Index>(b) * g.count(), g.count()) =
        g.points() / static_cast<double>(links);
  }
  return w;
}

FusionMethod parse_fusion_method(const std::string& name) {
  if (name == "none") return FusionMethod::None;
  if (name == "average") return FusionMethod::Average;
  if (name == "prob-conflation") return FusionMethod::ProbConflation;
  if (name == "gaussian-conflation") return FusionMethod::GaussianConflation;
  if (name == "nn") return FusionMethod::Nn;
  fail(ErrorCode::Config, "unknown fusion method '" + name + "'");
}

std::string to_string(FusionMethod method) {
  switch (method) {
    case FusionMethod::None: return "none";
    case FusionMethod::Average: return "average";
    case FusionMethod::ProbConflation: return "prob-conflation";
    case FusionMethod::GaussianConflation: return "gaussian-conflation";
    case FusionMethod::Nn: return "nn";
  }
  return "unknown";
}

namespace {

void require_common_size(std::span<const ProbabilityMap> maps) {
  require(!maps.empty(), ErrorCode::InvalidArgument, "fusion needs at least one map");
  for (const auto& p : maps) {
    require(p.size() == maps.front().size(), ErrorCode::DimensionMismatch,
            "maps are defined on different grids");
  }
}

}  // namespace

ProbabilityMap conflate_probability(std::span<const ProbabilityMap> maps) {
  require_common_size(maps);
  const int k = maps.front().size();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd log_mu = Eigen::VectorXd::Zero(k);
  for (const auto& p : maps) {
    for (int i = 0; i < k; ++i) log_mu[i] += p[i] > 0.0 ? std::log(p[i]) : kNegInf;
  }
  const double top = log_mu.maxCoeff();
  if (top == kNegInf) {
    fail(ErrorCode::DegenerateConflation, "maps have disjoint supports");
  }
  Eigen::VectorXd mu = (log_mu.array() - top).exp();
  mu /= mu.sum();
  return ProbabilityMap(std::move(mu));
}

PositionEstimate conflate_gaussian(std::span<const PositionEstimate> estimates) {
  require(!estimates.empty(), ErrorCode::InvalidArgument, "fusion needs at least one estimate");
  const Eigen::Index d = estimates.front().mean.size();
  Eigen::VectorXd precision = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(d);
  for (const auto& e : estimates) {
    require(e.mean.size() == d && e.diag_cov.size() == d, ErrorCode::DimensionMismatch,
            "estimates have different dimensions");
    for (Eigen::Index i = 0; i < d; ++i) {
      const double var = e.diag_cov[i];
      if (!(var >= 0.0) || !std::isfinite(var)) {
        fail(ErrorCode::ZeroVariance, "variance must be finite and non-negative");
      }
      const double inv = 1.0 / std::max(var, kVarianceFloor);
      precision[i] += inv;
      weighted[i] += inv * e.mean[i];
    }
  }
  PositionEstimate out;
  out.mean = weighted.cwiseQuotient(precision);
  out.diag_cov = precision.cwiseInverse();
  return out;
}

Eigen::VectorXd fuse_average(std::span<const ProbabilityMap> maps, const Grid& g) {
  require_common_size(maps);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(g.dims());
  for (const auto& p : maps) sum += expected_location(p, g);
  return sum / static_cast<double>(maps.size());
}

Eigen::VectorXd fuse_nn(const FusionWeights& weights, std::span<const ProbabilityMap> maps) {
  require_common_size(maps);
  const Eigen::Index k = maps.front().size();
  require(static_cast<Eigen::Index>(maps.size()) * k == weights.matrix.cols(),
          ErrorCode::DimensionMismatch, "stacked maps do not match the fusion weights");
  // Per-link products are summed afterwards, in the same order as fuse_average,
  // so averaging weights reproduce it bit for bit when B' is a power of two.
  Eigen::VectorXd out = Eigen::VectorXd::Zero(weights.matrix.rows());
  for (std::size_t b = 0; b < maps.size(); ++b) {
    const Eigen::VectorXd part =
        weights.matrix.middleCols(static_cast<Eigen::Index>(b) * k, k) * maps[b].mass();
    out += part;
  }
  return out;
}

PositionEstimate estimate_from_map(const ProbabilityMap& p, const Grid& g) {
  return {expected_location(p, g), covariance(p, g).diagonal()};
}

double entropy(const ProbabilityMap& p) {
  double h = 0.0;
  for (int k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) h -= p[k] * std::log(p[k]);
  }
  return h;
}

}  // namespace csiloc
