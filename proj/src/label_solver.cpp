#include "csiloc/label_solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "csiloc/error.hpp"

namespace csiloc {

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size();
  std::vector<double> sorted(y.data(), y.data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cumulative += sorted[i];
    const double candidate = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (sorted[i] - candidate > 0.0) theta = candidate;
  }
  return (y.array() - theta).max(0.0).matrix();
}

double label_objective(const ProbabilityMap& p, const Grid& g, const Eigen::VectorXd& x) {
  return squared_distances(g, x).dot(p.mass());
}

namespace {

// Projection onto {p : 1^T p = 1, ||G p - x|| <= eps} in normalized coordinates.
// With H the row-centered grid, the correction d lives in range(H^T), which is
// orthogonal to the ones vector, so the sum constraint survives it.
class MeanConstraintProjector {
 public:
  MeanConstraintProjector(const Eigen::MatrixXd& points, const Eigen::VectorXd& target,
                          double eps)
      : points_(points), target_(target), eps_(eps) {
    const Eigen::VectorXd centroid = points_.rowwise().mean();
    centered_ = points_.colwise() - centroid;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered_ * centered_.transpose());
    basis_ = eig.eigenvectors();
    eigenvalues_ = eig.eigenvalues();
    const double floor = 1e-12 * std::max(1.0, eigenvalues_.maxCoeff());
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) {
      if (eigenvalues_[i] < floor) eigenvalues_[i] = 0.0;
    }
  }

  Eigen::VectorXd project(const Eigen::VectorXd& y) const {
    const double k = static_cast<double>(y.size());
    Eigen::VectorXd on_plane = y.array() - (y.sum() - 1.0) / k;
    const Eigen::VectorXd residual = points_ * on_plane - target_;
    const Eigen::VectorXd rotated = basis_.transpose() * residual;

    Eigen::VectorXd shrink(rotated.size());
    if (eps_ == 0.0) {
      for (Eigen::Index i = 0; i < shrink.size(); ++i) {
        shrink[i] = eigenvalues_[i] > 0.0 ? 1.0 / eigenvalues_[i] : 0.0;
      }
    } else {
      if (residual.norm() <= eps_) return on_plane;
      const double lambda = solve_multiplier(rotated);
      for (Eigen::Index i = 0; i < shrink.size(); ++i) {
        shrink[i] = lambda / (1.0 + lambda * eigenvalues_[i]);
      }
    }
    const Eigen::VectorXd coeff = basis_ * shrink.cwiseProduct(rotated);
    on_plane.noalias() -= centered_.transpose() * coeff;
    return on_plane;
  }

 private:
  // Root of sum_i r_i^2 / (1 + lambda mu_i)^2 = eps^2; decreasing in lambda.
  double solve_multiplier(const Eigen::VectorXd& rotated) const {
    auto excess = [&](double lambda) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < rotated.size(); ++i) {
        const double f = rotated[i] / (1.0 + lambda * eigenvalues_[i]);
        s += f * f;
      }
      return s - eps_ * eps_;
    };
    double lo = 0.0;
    double hi = 1.0;
    while (excess(hi) > 0.0 && hi < 1e300) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (excess(mid) > 0.0 ? lo : hi) = mid;
    }
    return hi;
  }

  const Eigen::MatrixXd& points_;
  const Eigen::VectorXd& target_;
  double eps_;
  Eigen::MatrixXd centered_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd eigenvalues_;
};

// Minimum-norm change on the support of p that makes the mean and sum exact.
// Returns false (leaving p untouched) if the change would leave the simplex.
bool correct_on_support(Eigen::VectorXd& p, const Eigen::MatrixXd& points,
                        const Eigen::VectorXd& target) {
  std::vector<Eigen::Index> support;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) support.push_back(k);
  }
  const Eigen::Index d = points.rows();
  Eigen::MatrixXd m(d + 1, static_cast<Eigen::Index>(support.size()));
  Eigen::VectorXd current(support.size());
  for (std::size_t j = 0; j < support.size(); ++j) {
    m.col(j) << points.col(support[j]), 1.0;
    current[j] = p[support[j]];
  }
  Eigen::VectorXd rhs(d + 1);
  rhs << target, 1.0;
  const Eigen::VectorXd delta = m.completeOrthogonalDecomposition().solve(rhs - m * current);
  const Eigen::VectorXd corrected = current + delta;
  if ((corrected.array() < 0.0).any() || (corrected.array() > 1.0).any()) return false;
  for (std::size_t j = 0; j < support.size(); ++j) p[support[j]] = corrected[j];
  return true;
}

// Polishing for eps = 0. Candidate points are the support of the DR iterate
// plus the grid points nearest the target; every basis of D + 1 candidates
// whose barycentric weights are nonnegative is a feasible vertex. A vertex is
// accepted only when its dual (lambda, mu), fixed by cost_k = lambda^T g_k + mu
// on the basis, leaves every reduced cost over the whole grid nonnegative,
// which certifies global optimality.
bool polish(const Eigen::VectorXd& iterate, const Eigen::MatrixXd& points,
            const Eigen::VectorXd& target, const Eigen::VectorXd& cost, double tol,
            Eigen::VectorXd& out) {
  const int d = static_cast<int>(points.rows());
  const Eigen::Index k = points.cols();
  constexpr int kMaxCandidates = 10;

  std::vector<Eigen::Index> order(k);
  for (Eigen::Index i = 0; i < k; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return iterate[a] != iterate[b] ? iterate[a] > iterate[b] : a < b;
  });
  std::vector<Eigen::Index> candidates;
  const double peak = iterate.maxCoeff();
  for (Eigen::Index i : order) {
    if (iterate[i] <= 1e-6 * peak || static_cast<int>(candidates.size()) >= kMaxCandidates / 2) break;
    candidates.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return cost[a] != cost[b] ? cost[a] < cost[b] : a < b;
  });
  for (Eigen::Index i : order) {
    if (static_cast<int>(candidates.size()) >= kMaxCandidates) break;
    if (std::find(candidates.begin(), candidates.end(), i) == candidates.end()) candidates.push_back(i);
  }
  const int n = static_cast<int>(candidates.size());
  if (n < d + 1) return false;

  struct Vertex {
    double objective;
    std::vector<Eigen::Index> basis;
    Eigen::VectorXd weights;
  };
  std::vector<Vertex> vertices;
  Eigen::VectorXd rhs(d + 1);
  rhs << target, 1.0;
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + d + 1, true);
  do {
    std::vector<Eigen::Index> basis;
    for (int i = 0; i < n; ++i) {
      if (pick[i]) basis.push_back(candidates[i]);
    }
    Eigen::MatrixXd m(d + 1, d + 1);
    for (int j = 0; j <= d; ++j) m.col(j) << points.col(basis[j]), 1.0;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd w = lu.solve(rhs);
    if (w.minCoeff() < -tol) continue;
    double objective = 0.0;
    for (int j = 0; j <= d; ++j) objective += w[j] * cost[basis[j]];
    vertices.push_back({objective, std::move(basis), w.cwiseMax(0.0)});
  } while (std::prev_permutation(pick.begin(), pick.end()));

  std::sort(vertices.begin(), vertices.end(),
            [](const Vertex& a, const Vertex& b) { return a.objective < b.objective; });
  for (const Vertex& v : vertices) {
    Eigen::MatrixXd m(d + 1, d + 1);
    Eigen::VectorXd c(d + 1);
    for (int j = 0; j <= d; ++j) {
      m.col(j) << points.col(v.basis[j]), 1.0;
      c[j] = cost[v.basis[j]];
    }
    const Eigen::VectorXd dual = m.transpose().fullPivLu().solve(c);
    const Eigen::VectorXd reduced =
        cost - points.transpose() * dual.head(d) - Eigen::VectorXd::Constant(k, dual[d]);
    if (reduced.minCoeff() < -tol) continue;
    out = Eigen::VectorXd::Zero(k);
    for (int j = 0; j <= d; ++j) out[v.basis[j]] = v.weights[j];
    out /= out.sum();
    return true;
  }
  return false;
}

}  // namespace

LabelResult min_variance_pmf(const Eigen::VectorXd& x, const Grid& g, const LabelConfig& cfg) {
  require(cfg.epsilon >= 0.0 && std::isfinite(cfg.epsilon), ErrorCode::InvalidArgument,
          "label epsilon must be a finite nonnegative number");
  require(cfg.max_iters > 0 && cfg.tol > 0.0, ErrorCode::InvalidArgument,
          "label max_iters and tol must be positive");
  require(x.size() == g.dims(), ErrorCode::DimensionMismatch, "target/grid dimension mismatch");
  if (!in_hull(x, g)) fail(ErrorCode::Infeasible, "target lies outside the grid hull");

  // Work in coordinates centred on the grid and scaled to unit spread so the
  // step size and tolerances do not depend on the room size.
  const Eigen::VectorXd centre = g.points().rowwise().mean();
  const double scale = std::max((g.points().colwise() - centre).cwiseAbs().maxCoeff(), 1e-300);
  const Eigen::MatrixXd points = (g.points().colwise() - centre) / scale;
  const Eigen::VectorXd target = (x - centre) / scale;
  const double eps = cfg.epsilon / scale;
  const Eigen::VectorXd cost = (points.colwise() - target).colwise().squaredNorm().transpose();

  const MeanConstraintProjector projector(points, target, eps);
  const int k = g.count();
  constexpr double kStep = 0.2;
  constexpr int kPolishEvery = 25;

  Eigen::VectorXd z = Eigen::VectorXd::Constant(k, 1.0 / k);
  Eigen::VectorXd p(k);
  Eigen::VectorXd q(k);
  int iterations = 0;
  bool converged = false;
  while (iterations < cfg.max_iters) {
    ++iterations;
    p = projector.project(z);
    q = project_to_simplex(2.0 * p - z - kStep * cost);
    z += q - p;
    if ((q - p).lpNorm<Eigen::Infinity>() <= cfg.tol) {
      converged = true;
      break;
    }
    if (eps == 0.0 && iterations % kPolishEvery == 0 &&
        polish(q, points, target, cost, cfg.tol, q)) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    fail(ErrorCode::NonConverged, "label solver did not converge in " +
                                      std::to_string(cfg.max_iters) + " iterations");
  }

  if (eps == 0.0) correct_on_support(q, points, target);

  ProbabilityMap map(std::move(q));
  const double objective = label_objective(map, g, x);
  return LabelResult{std::move(map), objective, iterations};
}

ProbabilityMap min_variance_pmf_rect(const Eigen::VectorXd& x, const Grid& g) {
  require(g.rect().has_value(), ErrorCode::InvalidArgument,
          "fast-path labels need a rectangular grid");
  require(x.size() == 2, ErrorCode::DimensionMismatch, "rectangular grids are 2-D");
  if (!in_hull(x, g)) fail(ErrorCode::Infeasible, "target lies outside the grid bounding box");

  const RectSpec& r = *g.rect();
  const int n = r.side_count;
  auto locate = [n](double value, double lo, double step) {
    const double u = (value - lo) / step;
    int cell = std::clamp(static_cast<int>(std::floor(u)), 0, n - 2);
    double frac = std::clamp(u - cell, 0.0, 1.0);
    if (frac < 1e-12) frac = 0.0;
    if (frac > 1.0 - 1e-12) frac = 1.0;
    return std::pair{cell, frac};
  };
  const auto [ix, tx] = locate(x[0], r.x_min, r.step_x());
  const auto [iy, ty] = locate(x[1], r.y_min, r.step_y());

  Eigen::VectorXd mass = Eigen::VectorXd::Zero(g.count());
  mass[iy * n + ix] += (1.0 - tx) * (1.0 - ty);
  mass[iy * n + ix + 1] += tx * (1.0 - ty);
  mass[(iy + 1) * n + ix] += (1.0 - tx) * ty;
  mass[(iy + 1) * n + ix + 1] += tx * ty;
  return ProbabilityMap(std::move(mass));
}

}  // namespace csiloc
