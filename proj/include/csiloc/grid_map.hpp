#pragma once

#include <optional>

#include <Eigen/Dense>

namespace csiloc {

/// Axis-aligned lattice description of an equispaced 2-D grid.
struct RectSpec {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  int side_count = 2;

  double step_x() const { return (x_max - x_min) / (side_count - 1); }
  double step_y() const { return (y_max - y_min) / (side_count - 1); }
  bool operator==(const RectSpec&) const = default;
};

/**
 * Set of K grid points in D dimensions, stored column-major as a D x K
 * matrix so that the expected location of a map is a single product G p.
 *
 * Rectangular grids enumerate points with x varying fastest:
 * k = iy * side_count + ix.
 */
class Grid {
 public:
  explicit Grid(Eigen::MatrixXd points);

  static Grid rectangular(const RectSpec& spec);

  int dims() const { return static_cast<int>(points_.rows()); }
  int count() const { return static_cast<int>(points_.cols()); }
  const Eigen::MatrixXd& points() const { return points_; }
  auto point(int k) const { return points_.col(k); }

  /// Present only for grids built by rectangular().
  const std::optional<RectSpec>& rect() const { return rect_; }

  bool operator==(const Grid& other) const {
    return rect_ == other.rect_ && points_ == other.points_;
  }

 private:
  Eigen::MatrixXd points_;
  std::optional<RectSpec> rect_;
};

/// PMF over the points of a grid. Validated on construction, never renormalized.
class ProbabilityMap {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit ProbabilityMap(Eigen::VectorXd mass);

  static ProbabilityMap uniform(int count);
  static ProbabilityMap one_hot(int count, int index);

  int size() const { return static_cast<int>(mass_.size()); }
  const Eigen::VectorXd& mass() const { return mass_; }
  double operator[](int k) const { return mass_[k]; }

 private:
  Eigen::VectorXd mass_;
};

struct PositionEstimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd diag_cov;
};

Eigen::VectorXd expected_location(const ProbabilityMap& p, const Grid& g);

/// Spatial covariance of the map around its own mean.
Eigen::MatrixXd covariance(const ProbabilityMap& p, const Grid& g);

/// v_k = ||g_k - x||^2 for every grid point.
Eigen::VectorXd squared_distances(const Grid& g, const Eigen::VectorXd& x);

/// Hull slack, in the units of the grid coordinates.
inline constexpr double kHullSlack = 1e-9;

/// True iff x is a convex combination of grid points (within kHullSlack).
bool in_hull(const Eigen::VectorXd& x, const Grid& g);

}  // namespace csiloc
