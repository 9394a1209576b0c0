#include "csiloc/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "csiloc/error.hpp"

namespace csiloc {

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorCode::Config, msg); };
  check(epochs >= 0, "epochs must be >= 0");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  check(bn_momentum > 0.0 && bn_momentum < 1.0, "bn_momentum must lie in (0, 1)");
}

MlpPositioner MlpPositioner::init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  require(layer_sizes.size() >= 2, ErrorCode::InvalidArgument, "network needs >= 2 layer sizes");
  for (int s : layer_sizes) require(s >= 1, ErrorCode::InvalidArgument, "layer sizes must be >= 1");

  std::mt19937_64 rng(seed);
  MlpPositioner model;
  const std::size_t count = layer_sizes.size() - 1;
  for (std::size_t l = 0; l < count; ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> glorot(-limit, limit);

    DenseLayer layer;
    layer.weight.resize(fan_out, fan_in);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = glorot(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    layer.batch_norm = l + 1 < count && static_cast<int>(l) < kBatchNormLayers;
    if (layer.batch_norm) {
      layer.bn_scale = Eigen::VectorXd::Ones(fan_out);
      layer.bn_shift = Eigen::VectorXd::Zero(fan_out);
      layer.running_mean = Eigen::VectorXd::Zero(fan_out);
      layer.running_var = Eigen::VectorXd::Ones(fan_out);
    }
    model.layers_.push_back(std::move(layer));
  }
  return model;
}

std::vector<int> MlpPositioner::layer_sizes() const {
  std::vector<int> sizes;
  if (layers_.empty()) return sizes;
  sizes.push_back(input_width());
  for (const auto& layer : layers_) sizes.push_back(static_cast<int>(layer.weight.rows()));
  return sizes;
}

Eigen::Index MlpPositioner::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers_) {
    n += layer.weight.size() + layer.bias.size();
    if (layer.batch_norm) n += layer.bn_scale.size() + layer.bn_shift.size();
  }
  return n;
}

Eigen::VectorXd MlpPositioner::flatten() const {
  Eigen::VectorXd out(parameter_count());
  Eigen::Index pos = 0;
  auto put = [&](const auto& block) {
    out.segment(pos, block.size()) = block.reshaped();
    pos += block.size();
  };
  for (const auto& layer : layers_) {
    put(layer.weight);
    put(layer.bias);
    if (layer.batch_norm) {
      put(layer.bn_scale);
      put(layer.bn_shift);
    }
  }
  return out;
}

void MlpPositioner::unflatten(const Eigen::VectorXd& params) {
  require(params.size() == parameter_count(), ErrorCode::DimensionMismatch,
          "parameter vector has the wrong length");
  Eigen::Index pos = 0;
  auto take = [&](auto& block) {
    block.reshaped() = params.segment(pos, block.size());
    pos += block.size();
  };
  for (auto& layer : layers_) {
    take(layer.weight);
    take(layer.bias);
    if (layer.batch_norm) {
      take(layer.bn_scale);
      take(layer.bn_shift);
    }
  }
}

namespace {

struct LayerCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd normalized;
  Eigen::VectorXd batch_mean;
  Eigen::VectorXd batch_var;
  Eigen::VectorXd inv_std;
  Eigen::MatrixXd output;
};

struct LayerGrad {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Eigen::VectorXd bn_scale;
  Eigen::VectorXd bn_shift;
};

void softmax_columns(Eigen::MatrixXd& z) {
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    auto col = z.col(j);
    col.array() = (col.array() - col.maxCoeff()).exp();
    col /= col.sum();
  }
}

Eigen::MatrixXd run_forward(const MlpPositioner& model, const Eigen::MatrixXd& inputs,
                            std::vector<LayerCache>* caches) {
  require(!model.layers().empty(), ErrorCode::InvalidArgument, "network has no layers");
  require(inputs.rows() == model.input_width(), ErrorCode::DimensionMismatch,
          "input width " + std::to_string(inputs.rows()) + " does not match network input " +
              std::to_string(model.input_width()));
  const bool training = model.mode() == Mode::Train;
  const auto& layers = model.layers();
  if (caches) caches->resize(layers.size());

  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    Eigen::MatrixXd z = layer.weight * a;
    z.colwise() += layer.bias;
    LayerCache* cache = caches ? &(*caches)[l] : nullptr;
    if (cache) cache->input = std::move(a);

    if (layer.batch_norm) {
      Eigen::VectorXd mean;
      Eigen::VectorXd var;
      if (training) {
        mean = z.rowwise().mean();
        var = (z.colwise() - mean).array().square().rowwise().mean();
      } else {
        mean = layer.running_mean;
        var = layer.running_var;
      }
      const Eigen::VectorXd inv_std = (var.array() + MlpPositioner::kBnEpsilon).rsqrt();
      Eigen::MatrixXd normalized = (z.colwise() - mean).array().colwise() * inv_std.array();
      z = (normalized.array().colwise() * layer.bn_scale.array()).colwise() +
          layer.bn_shift.array();
      if (cache) {
        cache->normalized = std::move(normalized);
        cache->batch_mean = std::move(mean);
        cache->batch_var = std::move(var);
        cache->inv_std = inv_std;
      }
    }

    if (l + 1 < layers.size()) {
      z = z.cwiseMax(0.0);
    } else {
      softmax_columns(z);
    }
    if (cache) cache->output = z;
    a = std::move(z);
  }
  return a;
}

// dL/dz at the softmax input, from h_k = p_k * dL/dp_k: dz = h - p * sum(h).
Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& p, const Eigen::MatrixXd& h) {
  return h - (p.array().rowwise() * h.colwise().sum().array()).matrix();
}

double clamped_log(double v) { return std::log(std::clamp(v, kBceClamp, 1.0 - kBceClamp)); }

// Loss and gradient with respect to the last layer's pre-softmax input.
double loss_head(const MlpPositioner& model, const Eigen::MatrixXd& p,
                 const Eigen::MatrixXd& targets, LossKind loss, Eigen::MatrixXd* dz) {
  const double n = static_cast<double>(p.cols());
  if (loss == LossKind::Bce) {
    require(targets.rows() == p.rows() && targets.cols() == p.cols(),
            ErrorCode::DimensionMismatch, "label matrix shape does not match network output");
    const double value = bce_loss(p, targets);
    if (dz) {
      // p_k * dBCE/dp_k = -t_k + p_k (1 - t_k) / (1 - p_k); no division by small p.
      Eigen::MatrixXd h(p.rows(), p.cols());
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
          const double pk = p(i, j);
          const double tk = targets(i, j);
          h(i, j) = (-tk + pk * (1.0 - tk) / std::max(1.0 - pk, kBceClamp)) / n;
        }
      }
      *dz = softmax_backward(p, h);
    }
    return value;
  }

  require(model.coord_head().has_value(), ErrorCode::InvalidArgument,
          "coordinate loss needs a coordinate head");
  const Eigen::MatrixXd& g = *model.coord_head();
  require(g.cols() == p.rows() && targets.rows() == g.rows() && targets.cols() == p.cols(),
          ErrorCode::DimensionMismatch, "position matrix shape does not match coordinate head");
  const Eigen::MatrixXd residual = g * p - targets;
  const double value = residual.colwise().squaredNorm().sum() / n;
  if (dz) {
    const Eigen::MatrixXd grad_p = (2.0 / n) * (g.transpose() * residual);
    *dz = softmax_backward(p, p.cwiseProduct(grad_p));
  }
  return value;
}

std::vector<LayerGrad> backward(const MlpPositioner& model, const std::vector<LayerCache>& caches,
                                Eigen::MatrixXd dz_last) {
  const auto& layers = model.layers();
  const bool training = model.mode() == Mode::Train;
  std::vector<LayerGrad> grads(layers.size());
  Eigen::MatrixXd upstream = std::move(dz_last);

  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const LayerCache& cache = caches[l];
    Eigen::MatrixXd dy = std::move(upstream);
    if (l + 1 < layers.size()) {
      dy = (cache.output.array() > 0.0).select(dy, 0.0);
    }

    Eigen::MatrixXd dz;
    if (layer.batch_norm) {
      grads[l].bn_scale = dy.cwiseProduct(cache.normalized).rowwise().sum();
      grads[l].bn_shift = dy.rowwise().sum();
      const Eigen::MatrixXd dxhat = dy.array().colwise() * layer.bn_scale.array();
      if (training) {
        const double n = static_cast<double>(dy.cols());
        const Eigen::VectorXd sum_dxhat = dxhat.rowwise().sum();
        const Eigen::VectorXd sum_dxhat_xhat = dxhat.cwiseProduct(cache.normalized).rowwise().sum();
        Eigen::MatrixXd t = n * dxhat;
        t.colwise() -= sum_dxhat;
        t -= (cache.normalized.array().colwise() * sum_dxhat_xhat.array()).matrix();
        dz = (t.array().colwise() * (cache.inv_std.array() / n)).matrix();
      } else {
        dz = dxhat.array().colwise() * cache.inv_std.array();
      }
    } else {
      dz = std::move(dy);
    }

    grads[l].weight.noalias() = dz * cache.input.transpose();
    grads[l].bias = dz.rowwise().sum();
    if (l > 0) upstream.noalias() = layer.weight.transpose() * dz;
  }
  return grads;
}

Eigen::VectorXd flatten_grads(const MlpPositioner& model, const std::vector<LayerGrad>& grads) {
  Eigen::VectorXd out(model.parameter_count());
  Eigen::Index pos = 0;
  auto put = [&](const auto& block) {
    out.segment(pos, block.size()) = block.reshaped();
    pos += block.size();
  };
  for (std::size_t l = 0; l < grads.size(); ++l) {
    put(grads[l].weight);
    put(grads[l].bias);
    if (model.layers()[l].batch_norm) {
      put(grads[l].bn_scale);
      put(grads[l].bn_shift);
    }
  }
  return out;
}

// Per-parameter optimizer state, laid out like LayerGrad.
class Optimizer {
 public:
  Optimizer(const MlpPositioner& model, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& layer : model.layers()) {
      LayerGrad zero;
      zero.weight = Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols());
      zero.bias = Eigen::VectorXd::Zero(layer.bias.size());
      zero.bn_scale = Eigen::VectorXd::Zero(layer.bn_scale.size());
      zero.bn_shift = Eigen::VectorXd::Zero(layer.bn_shift.size());
      first_.push_back(zero);
      second_.push_back(zero);
    }
  }

  void step(MlpPositioner& model, const std::vector<LayerGrad>& grads) {
    ++t_;
    auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weight, grads[l].weight, first_[l].weight, second_[l].weight);
      update(layers[l].bias, grads[l].bias, first_[l].bias, second_[l].bias);
      if (layers[l].batch_norm) {
        update(layers[l].bn_scale, grads[l].bn_scale, first_[l].bn_scale, second_[l].bn_scale);
        update(layers[l].bn_shift, grads[l].bn_shift, first_[l].bn_shift, second_[l].bn_shift);
      }
    }
  }

 private:
  template <typename Param>
  void update(Param& param, const Param& grad, Param& m, Param& v) const {
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      param -= lr * grad;
      return;
    }
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    m = kBeta1 * m + (1.0 - kBeta1) * grad;
    v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
  }

  TrainConfig cfg_;
  std::vector<LayerGrad> first_;
  std::vector<LayerGrad> second_;
  long t_ = 0;
};

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, std::span<const int> idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(j) = m.col(idx[j]);
  return out;
}

std::vector<double> run_training(MlpPositioner& model, const Eigen::MatrixXd& features,
                                 const Eigen::MatrixXd& targets, const TrainConfig& cfg,
                                 LossKind loss) {
  cfg.validate();
  require(features.cols() == targets.cols(), ErrorCode::DimensionMismatch,
          "feature and target sample counts differ");
  require(features.cols() >= 1, ErrorCode::InvalidArgument, "training set is empty");

  model.set_mode(Mode::Train);
  std::vector<double> curve{evaluate_loss(model, features, targets, loss)};
  require(std::isfinite(curve.front()), ErrorCode::NumericFailure, "initial loss is not finite");

  Optimizer optimizer(model, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(features.cols());
  std::iota(order.begin(), order.end(), 0);
  const int n = static_cast<int>(order.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int size = std::min(cfg.batch_size, n - start);
      const std::span<const int> idx(order.data() + start, size);
      const Eigen::MatrixXd x = gather_columns(features, idx);
      const Eigen::MatrixXd y = gather_columns(targets, idx);

      std::vector<LayerCache> caches;
      const Eigen::MatrixXd p = run_forward(model, x, &caches);
      Eigen::MatrixXd dz;
      const double value = loss_head(model, p, y, loss, &dz);
      if (!std::isfinite(value)) {
        fail(ErrorCode::NumericFailure, "non-finite training loss at epoch " +
                                            std::to_string(epoch) + ", batch " +
                                            std::to_string(batches));
      }
      optimizer.step(model, backward(model, caches, std::move(dz)));

      for (std::size_t l = 0; l < model.layers().size(); ++l) {
        DenseLayer& layer = model.layers()[l];
        if (!layer.batch_norm) continue;
        const double mom = cfg.bn_momentum;
        layer.running_mean = mom * layer.running_mean + (1.0 - mom) * caches[l].batch_mean;
        layer.running_var = mom * layer.running_var + (1.0 - mom) * caches[l].batch_var;
      }
      total += value;
      ++batches;
    }
    curve.push_back(total / batches);
  }
  for (const auto& layer : model.layers()) {
    require(layer.weight.allFinite() && layer.bias.allFinite(), ErrorCode::NumericFailure,
            "non-finite parameters after training");
  }
  model.set_mode(Mode::Infer);
  return curve;
}

}  // namespace

Eigen::MatrixXd MlpPositioner::forward(const Eigen::MatrixXd& inputs) const {
  return run_forward(*this, inputs, nullptr);
}

Eigen::MatrixXd MlpPositioner::predict_coords(const Eigen::MatrixXd& inputs) const {
  require(coord_head_.has_value(), ErrorCode::InvalidArgument, "model has no coordinate head");
  return *coord_head_ * forward(inputs);
}

double bce_loss(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& target) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < predicted.cols(); ++j) {
    for (Eigen::Index i = 0; i < predicted.rows(); ++i) {
      const double p = predicted(i, j);
      const double t = target(i, j);
      total -= t * clamped_log(p) + (1.0 - t) * clamped_log(1.0 - p);
    }
  }
  return total / static_cast<double>(predicted.cols());
}

LossGradient loss_and_gradient(const MlpPositioner& model, const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& targets, LossKind loss) {
  std::vector<LayerCache> caches;
  const Eigen::MatrixXd p = run_forward(model, inputs, &caches);
  Eigen::MatrixXd dz;
  LossGradient out;
  out.loss = loss_head(model, p, targets, loss, &dz);
  out.gradient = flatten_grads(model, backward(model, caches, std::move(dz)));
  return out;
}

double evaluate_loss(const MlpPositioner& model, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXd& targets, LossKind loss) {
  return loss_head(model, model.forward(inputs), targets, loss, nullptr);
}

std::vector<double> train(MlpPositioner& model, const Eigen::MatrixXd& features,
                          const Eigen::MatrixXd& labels, const TrainConfig& cfg) {
  return run_training(model, features, labels, cfg, LossKind::Bce);
}

std::vector<double> train_coords_baseline(MlpPositioner& model, const Eigen::MatrixXd& features,
                                          const Eigen::MatrixXd& positions,
                                          const TrainConfig& cfg) {
  return run_training(model, features, positions, cfg, LossKind::MseCoords);
}

LossGradient mde_loss_and_gradient(const Eigen::MatrixXd& weights,
                                   const Eigen::MatrixXd& stacked_maps,
                                   const Eigen::MatrixXd& positions) {
  require(weights.cols() == stacked_maps.rows() && weights.rows() == positions.rows() &&
              stacked_maps.cols() == positions.cols(),
          ErrorCode::DimensionMismatch, "fusion layer shapes do not match");
  const double n = static_cast<double>(positions.cols());
  Eigen::MatrixXd residual = positions - weights * stacked_maps;
  const Eigen::VectorXd norms = residual.colwise().norm().transpose();
  for (Eigen::Index u = 0; u < residual.cols(); ++u) {
    residual.col(u) = norms[u] > 0.0 ? Eigen::VectorXd(residual.col(u) / norms[u])
                                     : Eigen::VectorXd::Zero(residual.rows());
  }
  LossGradient out;
  out.loss = norms.sum() / n;
  out.gradient = (-(residual * stacked_maps.transpose()) / n).reshaped();
  return out;
}

FusionWeights fusion_finetune_maps(const Eigen::MatrixXd& stacked_maps,
                                   const Eigen::MatrixXd& positions, const Grid& grid, int links,
                                   const TrainConfig& cfg) {
  cfg.validate();
  require(links >= 2, ErrorCode::InvalidArgument, "fusion fine-tuning needs >= 2 links");
  FusionWeights current = FusionWeights::averaging(grid, links);
  require(stacked_maps.rows() == current.matrix.cols(), ErrorCode::DimensionMismatch,
          "stacked maps do not match links * K");

  FusionWeights best = current;
  double best_loss = mde_loss_and_gradient(current.matrix, stacked_maps, positions).loss;

  Eigen::MatrixXd first = Eigen::MatrixXd::Zero(current.matrix.rows(), current.matrix.cols());
  Eigen::MatrixXd second = first;
  long t = 0;
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(positions.cols());
  std::iota(order.begin(), order.end(), 0);
  const int n = static_cast<int>(order.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int size = std::min(cfg.batch_size, n - start);
      const std::span<const int> idx(order.data() + start, size);
      const LossGradient lg = mde_loss_and_gradient(
          current.matrix, gather_columns(stacked_maps, idx), gather_columns(positions, idx));
      require(std::isfinite(lg.loss), ErrorCode::NumericFailure, "non-finite fusion loss");
      const Eigen::MatrixXd grad = lg.gradient.reshaped(current.matrix.rows(), current.matrix.cols());
      if (cfg.optimizer == OptimizerKind::Sgd) {
        current.matrix -= cfg.learning_rate * grad;
      } else {
        ++t;
        first = 0.9 * first + 0.1 * grad;
        second = 0.999 * second + 0.001 * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(0.9, t);
        const double c2 = 1.0 - std::pow(0.999, t);
        current.matrix.array() -=
            cfg.learning_rate * (first.array() / c1) / ((second.array() / c2).sqrt() + 1e-8);
      }
    }
    const double loss = mde_loss_and_gradient(current.matrix, stacked_maps, positions).loss;
    if (loss < best_loss) {
      best_loss = loss;
      best = current;
    }
  }
  return best;
}

FusionWeights fusion_finetune(std::span<const MlpPositioner> models,
                              std::span<const Eigen::MatrixXd> features_per_link,
                              const Eigen::MatrixXd& positions, const Grid& grid,
                              const TrainConfig& cfg) {
  require(models.size() >= 2 && models.size() == features_per_link.size(),
          ErrorCode::InvalidArgument, "need one feature matrix per model and >= 2 models");
  const Eigen::Index k = grid.count();
  Eigen::MatrixXd stacked(k * static_cast<Eigen::Index>(models.size()), positions.cols());
  for (std::size_t b = 0; b < models.size(); ++b) {
    MlpPositioner frozen = models[b];
    frozen.set_mode(Mode::Infer);
    const Eigen::MatrixXd maps = frozen.forward(features_per_link[b]);
    require(maps.rows() == k && maps.cols() == positions.cols(), ErrorCode::DimensionMismatch,
            "model output does not match grid size or sample count");
    stacked.middleRows(static_cast<Eigen::Index>(b) * k, k) = maps;
  }
  return fusion_finetune_maps(stacked, positions, grid, static_cast<int>(models.size()), cfg);
}

}  // namespace csiloc
