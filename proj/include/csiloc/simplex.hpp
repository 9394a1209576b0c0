#pragma once

#include <Eigen/Dense>

namespace csiloc::lp {

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

struct Result {
  Status status = Status::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
};

/**
 * Dense two-phase simplex for  min c^T x  s.t.  A x = b, x >= 0.
 *
 * Bland's rule for pivoting, so it terminates on degenerate problems at the
 * cost of speed. Intended for the small systems that show up here (a handful
 * of rows, up to a few thousand columns).
 */
Result solve_standard_form(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                           const Eigen::VectorXd& c, double feasibility_tol = 1e-9);

/// Smallest L1 residual ||A x - b||_1 over x >= 0 (phase-one objective).
double min_l1_residual(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

}  // namespace csiloc::lp
