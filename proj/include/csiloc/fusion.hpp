#pragma once

#include <span>
#include <string>

#include <Eigen/Dense>

#include "csiloc/grid_map.hpp"

namespace csiloc {

/// Fusion output layer: a bias-free D x (B' K) matrix applied to stacked maps.
struct FusionWeights {
  Eigen::MatrixXd matrix;
  int links = 0;

  /// (1/B') [G, ..., G], which reproduces plain averaging.
  static FusionWeights averaging(const Grid& g, int links);
};

enum class FusionMethod { None, Average, ProbConflation, GaussianConflation, Nn };

FusionMethod parse_fusion_method(const std::string& name);
std::string to_string(FusionMethod method);

/// Variances below this are floored before inverse-variance weighting (m^2).
inline constexpr double kVarianceFloor = 1e-12;

/**
 * Normalized point-wise product of the maps, computed in log space so long
 * products of small probabilities do not underflow. Throws
 * DegenerateConflation when no grid point has positive mass in every map.
 */
ProbabilityMap conflate_probability(std::span<const ProbabilityMap> maps);

/// Per-dimension inverse-variance weighting; fused variance is 1 / sum(1/var).
PositionEstimate conflate_gaussian(std::span<const PositionEstimate> estimates);

/// (1/B') sum_b G p[b].
Eigen::VectorXd fuse_average(std::span<const ProbabilityMap> maps, const Grid& g);

/// weights * [p[1]; ...; p[B']].
Eigen::VectorXd fuse_nn(const FusionWeights& weights, std::span<const ProbabilityMap> maps);

/// Mean of the map and the diagonal of its covariance.
PositionEstimate estimate_from_map(const ProbabilityMap& p, const Grid& g);

/// Shannon entropy in nats.
double entropy(const ProbabilityMap& p);

}  // namespace csiloc
