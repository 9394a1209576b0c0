#pragma once

#include <Eigen/Dense>

#include "csiloc/grid_map.hpp"

namespace csiloc {

struct LabelConfig {
  /// Allowed distance between the label's mean and the target (meters).
  double epsilon = 0.0;
  int max_iters = 10000;
  double tol = 1e-8;
};

struct LabelResult {
  ProbabilityMap map;
  /// p^T v with v_k = ||g_k - x||^2.
  double objective;
  int iterations;
};

/**
 * Minimum-variance probability map whose mean lies within epsilon of x.
 *
 *   minimize  p^T v   s.t.  ||G p - x|| <= epsilon,  p in the probability simplex
 *
 * Solved by Douglas-Rachford splitting between the simplex (with the linear
 * objective folded into its prox) and the mean-constraint set. For epsilon = 0
 * the iterate is finished with an exact affine correction on its support so
 * the mean matches x to rounding. Every 25 iterations an epsilon = 0 run also
 * tries the LP vertices spanned by the iterate's support and the nearest grid
 * points, stopping when one is certified optimal by its dual; plain splitting
 * crawls when the optimum puts tiny mass on a point.
 *
 * Throws Infeasible when x lies outside the grid hull and NonConverged when
 * neither stopping test passes within max_iters.
 */
LabelResult min_variance_pmf(const Eigen::VectorXd& x, const Grid& g,
                             const LabelConfig& cfg = {});

/// Closed-form bilinear labels on the enclosing cell of a rectangular grid.
ProbabilityMap min_variance_pmf_rect(const Eigen::VectorXd& x, const Grid& g);

/// Objective p^T v of a map for target x.
double label_objective(const ProbabilityMap& p, const Grid& g, const Eigen::VectorXd& x);

/// Sort-based Euclidean projection onto the probability simplex.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& y);

}  // namespace csiloc
