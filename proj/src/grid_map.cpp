#include "csiloc/grid_map.hpp"

#include <cmath>
#include <string>

#include "csiloc/error.hpp"
#include "csiloc/simplex.hpp"

namespace csiloc {

Grid::Grid(Eigen::MatrixXd points) : points_(std::move(points)) {
  require(points_.rows() == 2 || points_.rows() == 3, ErrorCode::InvalidArgument,
          "grid dimension must be 2 or 3, got " + std::to_string(points_.rows()));
  require(points_.cols() >= 1, ErrorCode::InvalidArgument, "grid needs at least one point");
  require(points_.allFinite(), ErrorCode::InvalidArgument, "grid points must be finite");
}

Grid Grid::rectangular(const RectSpec& spec) {
  require(spec.side_count >= 2, ErrorCode::InvalidArgument, "side_count must be >= 2");
  require(spec.x_max > spec.x_min && spec.y_max > spec.y_min, ErrorCode::InvalidArgument,
          "rectangular grid needs a non-empty extent");
  const int n = spec.side_count;
  Eigen::MatrixXd pts(2, n * n);
  for (int iy = 0; iy < n; ++iy) {
    const double y = iy == n - 1 ? spec.y_max : spec.y_min + iy * spec.step_y();
    for (int ix = 0; ix < n; ++ix) {
      const double x = ix == n - 1 ? spec.x_max : spec.x_min + ix * spec.step_x();
      pts(0, iy * n + ix) = x;
      pts(1, iy * n + ix) = y;
    }
  }
  Grid grid(std::move(pts));
  grid.rect_ = spec;
  return grid;
}

ProbabilityMap::ProbabilityMap(Eigen::VectorXd mass) : mass_(std::move(mass)) {
  require(mass_.size() >= 1, ErrorCode::InvalidArgument, "probability map is empty");
  for (Eigen::Index k = 0; k < mass_.size(); ++k) {
    const double m = mass_[k];
    require(std::isfinite(m) && m >= 0.0 && m <= 1.0, ErrorCode::InvalidArgument,
            "probability map entry " + std::to_string(k) + " outside [0,1]: " +
                std::to_string(m));
  }
  const double total = mass_.sum();
  require(std::abs(total - 1.0) <= kSumTolerance, ErrorCode::InvalidArgument,
          "probability map sums to " + std::to_string(total));
}

ProbabilityMap ProbabilityMap::uniform(int count) {
  return ProbabilityMap(Eigen::VectorXd::Constant(count, 1.0 / count));
}

ProbabilityMap ProbabilityMap::one_hot(int count, int index) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(count);
  m[index] = 1.0;
  return ProbabilityMap(std::move(m));
}

namespace {

void check_indexes(const ProbabilityMap& p, const Grid& g) {
  require(p.size() == g.count(), ErrorCode::DimensionMismatch,
          "probability map has " + std::to_string(p.size()) + " entries, grid has " +
              std::to_string(g.count()) + " points");
}

}  // namespace

Eigen::VectorXd expected_location(const ProbabilityMap& p, const Grid& g) {
  check_indexes(p, g);
  return g.points() * p.mass();
}

Eigen::MatrixXd covariance(const ProbabilityMap& p, const Grid& g) {
  const Eigen::VectorXd mean = expected_location(p, g);
  const Eigen::MatrixXd centered = g.points().colwise() - mean;
  Eigen::MatrixXd cov = centered * p.mass().asDiagonal() * centered.transpose();
  return 0.5 * (cov + cov.transpose());
}

Eigen::VectorXd squared_distances(const Grid& g, const Eigen::VectorXd& x) {
  require(x.size() == g.dims(), ErrorCode::DimensionMismatch, "point/grid dimension mismatch");
  return (g.points().colwise() - x).colwise().squaredNorm().transpose();
}

bool in_hull(const Eigen::VectorXd& x, const Grid& g) {
  require(x.size() == g.dims(), ErrorCode::DimensionMismatch, "point/grid dimension mismatch");
  if (!x.allFinite()) return false;
  if (const auto& rect = g.rect()) {
    return x[0] >= rect->x_min - kHullSlack && x[0] <= rect->x_max + kHullSlack &&
           x[1] >= rect->y_min - kHullSlack && x[1] <= rect->y_max + kHullSlack;
  }
  const int d = g.dims();
  Eigen::MatrixXd a(d + 1, g.count());
  a.topRows(d) = g.points();
  a.row(d).setOnes();
  Eigen::VectorXd b(d + 1);
  b << x, 1.0;
  return lp::min_l1_residual(a, b) <= kHullSlack;
}

}  // namespace csiloc
