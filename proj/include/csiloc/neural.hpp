#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "csiloc/fusion.hpp"
#include "csiloc/grid_map.hpp"

namespace csiloc {

enum class Mode { Train, Infer };
enum class OptimizerKind { Sgd, Adam };
enum class LossKind { Bce, MseCoords };

struct TrainConfig {
  int epochs = 40;
  int batch_size = 64;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 1;
  /// Weight of the old running statistic in each batch-norm update.
  double bn_momentum = 0.99;
  LossKind loss = LossKind::Bce;

  void validate() const;
};

/// Fully connected layer, optionally followed by batch normalization.
struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  bool batch_norm = false;
  Eigen::VectorXd bn_scale;
  Eigen::VectorXd bn_shift;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;

  bool operator==(const DenseLayer&) const = default;
};

/**
 * Feedforward network mapping a feature vector to a probability map.
 * Hidden layers are dense -> (batch norm on the first two) -> ReLU; the last
 * layer is dense -> softmax. Inputs and outputs are column-per-sample.
 */
class MlpPositioner {
 public:
  static constexpr double kBnEpsilon = 1e-5;
  static constexpr int kBatchNormLayers = 2;

  MlpPositioner() = default;

  /// Glorot-uniform weights, zero biases, unit BN scale and zero shift.
  static MlpPositioner init(const std::vector<int>& layer_sizes, std::uint64_t seed);

  std::vector<int> layer_sizes() const;
  int input_width() const { return static_cast<int>(layers_.front().weight.cols()); }
  int output_width() const { return static_cast<int>(layers_.back().weight.rows()); }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  /// Softmax outputs, K x N. Train mode normalizes with the batch's own statistics.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

  /// Frozen D x K grid layer used by the coordinate-regression variant.
  const std::optional<Eigen::MatrixXd>& coord_head() const { return coord_head_; }
  void set_coord_head(const Grid& g) { coord_head_ = g.points(); }
  void set_coord_head(std::optional<Eigen::MatrixXd> head) { coord_head_ = std::move(head); }

  /// coord_head * forward(inputs).
  Eigen::MatrixXd predict_coords(const Eigen::MatrixXd& inputs) const;

  /// Trainable parameters in a fixed order: per layer weight (column-major),
  /// bias, then BN scale and shift when present.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& params);
  Eigen::Index parameter_count() const;

  bool operator==(const MlpPositioner&) const = default;

 private:
  std::vector<DenseLayer> layers_;
  Mode mode_ = Mode::Infer;
  std::optional<Eigen::MatrixXd> coord_head_;
};

struct LossGradient {
  double loss = 0.0;
  /// Same layout as MlpPositioner::flatten().
  Eigen::VectorXd gradient;
};

/// Clamp applied to probabilities inside the BCE logarithms.
inline constexpr double kBceClamp = 1e-12;

/// Element-wise BCE summed over outputs, averaged over samples.
double bce_loss(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& target);

/**
 * Loss and gradient for one batch in the model's current mode. For Bce the
 * targets are K x N label maps; for MseCoords they are D x N positions and the
 * model needs a coordinate head.
 */
LossGradient loss_and_gradient(const MlpPositioner& model, const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& targets, LossKind loss);

/// Loss on the whole set in the model's current mode.
double evaluate_loss(const MlpPositioner& model, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXd& targets, LossKind loss);

/**
 * Minibatch training with the configured loss; returns the loss curve whose
 * first entry is the full-set loss before training and whose e-th entry is the
 * mean batch loss of epoch e. Leaves the model in infer mode.
 * Throws NumericFailure on a non-finite loss.
 */
std::vector<double> train(MlpPositioner& model, const Eigen::MatrixXd& features,
                          const Eigen::MatrixXd& labels, const TrainConfig& cfg);

/// MSE between coord_head * softmax and the positions; the head stays frozen.
std::vector<double> train_coords_baseline(MlpPositioner& model, const Eigen::MatrixXd& features,
                                          const Eigen::MatrixXd& positions, const TrainConfig& cfg);

/// Mean distance error of weights * stacked_maps against positions, with its
/// gradient (column-major, matching the matrix). Zero residuals contribute 0.
LossGradient mde_loss_and_gradient(const Eigen::MatrixXd& weights,
                                   const Eigen::MatrixXd& stacked_maps,
                                   const Eigen::MatrixXd& positions);

/**
 * Fits the fusion layer on stacked maps (B'K x U) starting from averaging
 * weights. The returned weights are the iterate with the lowest full-set
 * MDE seen, so the result never does worse than averaging on this set.
 */
FusionWeights fusion_finetune_maps(const Eigen::MatrixXd& stacked_maps,
                                   const Eigen::MatrixXd& positions, const Grid& grid, int links,
                                   const TrainConfig& cfg);

/// Runs the frozen per-link models in infer mode and fine-tunes the fusion layer.
FusionWeights fusion_finetune(std::span<const MlpPositioner> models,
                              std::span<const Eigen::MatrixXd> features_per_link,
                              const Eigen::MatrixXd& positions, const Grid& grid,
                              const TrainConfig& cfg);

}  // namespace csiloc
