#include "csiloc/simplex.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace csiloc::lp {
namespace {

constexpr double kPivotTol = 1e-11;

// Tableau in canonical form: rows hold B^-1 [A | b], the last column is the rhs.
struct Tableau {
  Eigen::MatrixXd t;
  std::vector<int> basis;

  int rows() const { return static_cast<int>(t.rows()); }
  int cols() const { return static_cast<int>(t.cols()) - 1; }
  double rhs(int i) const { return t(i, t.cols() - 1); }

  void pivot(int row, int col) {
    t.row(row) /= t(row, col);
    for (int i = 0; i < rows(); ++i) {
      if (i != row && t(i, col) != 0.0) t.row(i) -= t(i, col) * t.row(row);
    }
    basis[row] = col;
  }
};

// Primal simplex from a feasible basis, Bland's rule. Columns >= active_cols
// never enter.
Status iterate(Tableau& tab, const Eigen::VectorXd& cost, int active_cols) {
  const int m = tab.rows();
  const long max_iters = 50L * (tab.cols() + m) + 1000;
  for (long iter = 0; iter < max_iters; ++iter) {
    int entering = -1;
    for (int j = 0; j < active_cols; ++j) {
      double reduced = cost[j];
      for (int i = 0; i < m; ++i) reduced -= cost[tab.basis[i]] * tab.t(i, j);
      if (reduced < -1e-12) {
        entering = j;
        break;
      }
    }
    if (entering < 0) return Status::Optimal;

    int leaving = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      const double a = tab.t(i, entering);
      if (a <= kPivotTol) continue;
      const double ratio = tab.rhs(i) / a;
      if (ratio < best_ratio - 1e-15 ||
          (std::abs(ratio - best_ratio) <= 1e-15 && leaving >= 0 &&
           tab.basis[i] < tab.basis[leaving])) {
        best_ratio = ratio;
        leaving = i;
      }
    }
    if (leaving < 0) return Status::Unbounded;
    tab.pivot(leaving, entering);
  }
  return Status::IterationLimit;
}

double objective_of(const Tableau& tab, const Eigen::VectorXd& cost) {
  double value = 0.0;
  for (int i = 0; i < tab.rows(); ++i) value += cost[tab.basis[i]] * tab.rhs(i);
  return value;
}

}  // namespace

Result solve_standard_form(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                           const Eigen::VectorXd& c, double feasibility_tol) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());

  Tableau tab;
  tab.t = Eigen::MatrixXd::Zero(m, n + m + 1);
  tab.basis.resize(m);
  for (int i = 0; i < m; ++i) {
    const double sign = b[i] < 0 ? -1.0 : 1.0;
    tab.t.row(i).head(n) = sign * a.row(i);
    tab.t(i, n + i) = 1.0;
    tab.t(i, n + m) = sign * b[i];
    tab.basis[i] = n + i;
  }

  Eigen::VectorXd phase_one_cost = Eigen::VectorXd::Zero(n + m);
  phase_one_cost.tail(m).setOnes();
  Result result;
  if (Status s = iterate(tab, phase_one_cost, n + m); s != Status::Optimal) {
    result.status = s;
    return result;
  }
  if (objective_of(tab, phase_one_cost) > feasibility_tol) {
    result.status = Status::Infeasible;
    return result;
  }

  // Drive zero-valued artificials out of the basis where possible; rows where
  // that fails are redundant and keep their artificial at zero.
  for (int i = 0; i < m; ++i) {
    if (tab.basis[i] < n) continue;
    for (int j = 0; j < n; ++j) {
      if (std::abs(tab.t(i, j)) > 1e-9) {
        tab.pivot(i, j);
        break;
      }
    }
  }

  Eigen::VectorXd cost = Eigen::VectorXd::Zero(n + m);
  cost.head(n) = c;
  result.status = iterate(tab, cost, n);
  if (result.status != Status::Optimal) return result;

  result.x = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) {
    if (tab.basis[i] < n) result.x[tab.basis[i]] = std::max(0.0, tab.rhs(i));
  }
  result.objective = c.dot(result.x);
  return result;
}

double min_l1_residual(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());

  // Columns: [A | +I | -I]; the +I slack block is an initial feasible basis.
  Tableau tab;
  tab.t = Eigen::MatrixXd::Zero(m, n + 2 * m + 1);
  tab.basis.resize(m);
  for (int i = 0; i < m; ++i) {
    const double sign = b[i] < 0 ? -1.0 : 1.0;
    tab.t.row(i).head(n) = sign * a.row(i);
    tab.t(i, n + i) = 1.0;
    tab.t(i, n + m + i) = -1.0;
    tab.t(i, n + 2 * m) = sign * b[i];
    tab.basis[i] = n + i;
  }
  Eigen::VectorXd cost = Eigen::VectorXd::Zero(n + 2 * m);
  cost.tail(2 * m).setOnes();
  if (iterate(tab, cost, n + 2 * m) != Status::Optimal) {
    return std::numeric_limits<double>::infinity();
  }
  return std::max(0.0, objective_of(tab, cost));
}

}  // namespace csiloc::lp
