#include <gtest/gtest.h>

#include "csiloc/error.hpp"
#include "csiloc/label_solver.hpp"
#include "csiloc/neural.hpp"
#include "support/generators.hpp"
#include "support/gradcheck.hpp"

namespace csiloc {
namespace {

using testing::Gen;

Eigen::MatrixXd random_matrix(Gen& gen, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = testing::uniform(gen, lo, hi);
  return m;
}

Eigen::MatrixXd random_labels(Gen& gen, int k, int n) {
  Eigen::MatrixXd m(k, n);
  for (int j = 0; j < n; ++j) m.col(j) = testing::random_pmf(gen, k, j % 2 == 0).mass();
  return m;
}

// Loss as a function of the flattened parameters, evaluated on a copy.
double loss_at(const MlpPositioner& model, const Eigen::VectorXd& params, const Eigen::MatrixXd& x,
               const Eigen::MatrixXd& t, LossKind kind) {
  MlpPositioner probe = model;
  probe.unflatten(params);
  return evaluate_loss(probe, x, t, kind);
}

double gradient_error(const MlpPositioner& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t,
                      LossKind kind) {
  const LossGradient lg = loss_and_gradient(model, x, t, kind);
  EXPECT_NEAR(lg.loss, evaluate_loss(model, x, t, kind), 1e-12);
  const Eigen::VectorXd numeric = testing::numeric_gradient(
      [&](const Eigen::VectorXd& p) { return loss_at(model, p, x, t, kind); }, model.flatten());
  return testing::max_relative_error(lg.gradient, numeric);
}

TEST(GlorotInitTest, BoundAndSeed) {
  const MlpPositioner a = MlpPositioner::init({4, 3}, 7);
  const double bound = std::sqrt(6.0 / 7.0);
  EXPECT_LE(a.layers()[0].weight.cwiseAbs().maxCoeff(), bound);
  EXPECT_TRUE(a.layers()[0].bias.isZero(0.0));
  EXPECT_EQ(a, MlpPositioner::init({4, 3}, 7));
  EXPECT_FALSE(a == MlpPositioner::init({4, 3}, 8));
}

TEST(GlorotInitTest, EmpiricalVariance) {
  const MlpPositioner m = MlpPositioner::init({400, 250}, 3);
  const Eigen::MatrixXd& w = m.layers()[0].weight;
  ASSERT_EQ(w.size(), 100000);
  const double mean = w.mean();
  const double var = (w.array() - mean).square().mean();
  EXPECT_NEAR(var / (2.0 / 650.0), 1.0, 0.05);
}

TEST(MlpTest, LayoutMatchesSizes) {
  const MlpPositioner m = MlpPositioner::init({16, 8, 8, 6, 4}, 1);
  EXPECT_EQ(m.layer_sizes(), (std::vector<int>{16, 8, 8, 6, 4}));
  ASSERT_EQ(m.layers().size(), 4u);
  EXPECT_TRUE(m.layers()[0].batch_norm);
  EXPECT_TRUE(m.layers()[1].batch_norm);
  EXPECT_FALSE(m.layers()[2].batch_norm);
  EXPECT_FALSE(m.layers()[3].batch_norm);
  EXPECT_EQ(m.parameter_count(), (16 * 8 + 8 + 16) + (8 * 8 + 8 + 16) + (8 * 6 + 6) + (6 * 4 + 4));
  EXPECT_THROW(MlpPositioner::init({5}, 1), Error);
}

TEST(MlpTest, SoftmaxColumnsAreMaps) {
  Gen gen(41);
  MlpPositioner m = MlpPositioner::init({16, 8, 8, 5}, 2);
  const Eigen::MatrixXd x = random_matrix(gen, 16, 9, -5.0, 5.0);
  for (Mode mode : {Mode::Train, Mode::Infer}) {
    m.set_mode(mode);
    const Eigen::MatrixXd out = m.forward(x);
    for (int j = 0; j < out.cols(); ++j) {
      EXPECT_NEAR(out.col(j).sum(), 1.0, 1e-9);
      EXPECT_GE(out.col(j).minCoeff(), 0.0);
      EXPECT_NO_THROW(ProbabilityMap(out.col(j)));
    }
  }
}

TEST(MlpTest, ZeroFinalLayerIsUniform) {
  Gen gen(42);
  MlpPositioner m = MlpPositioner::init({6, 8, 5}, 2);
  m.layers().back().weight.setZero();
  const Eigen::MatrixXd out = m.forward(random_matrix(gen, 6, 3));
  EXPECT_LE((out.array() - 0.2).abs().maxCoeff(), 1e-15);
}

TEST(MlpTest, InferOutputIsBatchIndependent) {
  Gen gen(43);
  MlpPositioner m = MlpPositioner::init({8, 8, 8, 4}, 5);
  const Eigen::MatrixXd x = random_matrix(gen, 8, 40);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  train(m, x, random_labels(gen, 4, 40), cfg);
  ASSERT_EQ(m.mode(), Mode::Infer);
  EXPECT_FALSE(m.layers()[0].running_mean.isZero(0.0));
  const Eigen::MatrixXd batch = m.forward(x);
  for (int j : {0, 17, 39}) {
    EXPECT_LE((m.forward(x.col(j)) - batch.col(j)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(GradientCheckTest, BceTrainAndInferModes) {
  Gen gen(44);
  MlpPositioner m = MlpPositioner::init({16, 8, 8, 4}, 6);
  for (auto& layer : m.layers()) {
    if (!layer.batch_norm) continue;
    // Nontrivial BN parameters so every term of the backward pass matters.
    layer.bn_scale = random_matrix(gen, layer.bn_scale.size(), 1, 0.5, 1.5);
    layer.bn_shift = random_matrix(gen, layer.bn_shift.size(), 1, -0.5, 0.5);
    layer.running_mean = random_matrix(gen, layer.running_mean.size(), 1, -0.2, 0.2);
    layer.running_var = random_matrix(gen, layer.running_var.size(), 1, 0.5, 2.0);
  }
  const Eigen::MatrixXd x = random_matrix(gen, 16, 5);
  const Eigen::MatrixXd t = random_labels(gen, 4, 5);
  for (Mode mode : {Mode::Train, Mode::Infer}) {
    m.set_mode(mode);
    EXPECT_LT(gradient_error(m, x, t, LossKind::Bce), 1e-4);
  }
}

TEST(GradientCheckTest, CoordinateMse) {
  Gen gen(45);
  MlpPositioner m = MlpPositioner::init({16, 8, 8, 4}, 7);
  m.set_coord_head(testing::jittered_grid(gen, 2, 0.2));
  const Eigen::MatrixXd x = random_matrix(gen, 16, 5);
  const Eigen::MatrixXd pos = random_matrix(gen, 2, 5, 0.0, 1.0);
  for (Mode mode : {Mode::Train, Mode::Infer}) {
    m.set_mode(mode);
    EXPECT_LT(gradient_error(m, x, pos, LossKind::MseCoords), 1e-4);
  }
}

TEST(GradientCheckTest, SimulatedFeaturesToBce) {
  // Minimal end-to-end shape: 2 taps, 2 RX antennas, 1 TX antenna, 2 x 2 grid.
  SimConfig sim_cfg = SimConfig::desk_scale();
  sim_cfg.tx_antennas = 1;
  sim_cfg.rx_antennas = 2;
  const ChannelSimulator sim(sim_cfg);
  const FeatureConfig fcfg{sim_cfg.used_subcarriers, 2, DelayMethod::Pinv};
  const Grid grid = Grid::rectangular({0.0, 4.0, 0.0, 4.0, 2});
  const auto traj = make_trajectory(TrajectoryKind::RandomWalk, sim_cfg.room, 5, 3);
  Eigen::MatrixXd x(per_tx_feature_length(2, 2), 5);
  Eigen::MatrixXd t(4, 5);
  for (int j = 0; j < 5; ++j) {
    Rng rng = packet_rng(1, j, 0);
    x.col(j) = feature_vector(sim.synth_csi(traj[j], 0, rng).h, fcfg);
    t.col(j) = min_variance_pmf_rect(traj[j], grid).mass();
  }
  MlpPositioner m = MlpPositioner::init({static_cast<int>(x.rows()), 8, 8, 4}, 8);
  m.set_mode(Mode::Train);
  EXPECT_LT(gradient_error(m, x, t, LossKind::Bce), 1e-4);
}

TEST(TrainTest, SingleSampleReachesEntropyFloor) {
  const Eigen::Vector4d target(0.4, 0.3, 0.2, 0.1);
  double floor = 0.0;
  for (double p : target) floor -= p * std::log(p) + (1 - p) * std::log(1 - p);
  MlpPositioner m = MlpPositioner::init({3, 8, 8, 4}, 9);
  TrainConfig cfg;
  cfg.epochs = 3000;
  cfg.batch_size = 1;
  cfg.learning_rate = 1e-2;
  const auto curve = train(m, Eigen::Vector3d(0.3, -0.2, 0.9), target, cfg);
  ASSERT_EQ(curve.size(), 3001u);
  EXPECT_GT(curve.front() - floor, 1e-2);
  EXPECT_NEAR(curve.back(), floor, 1e-6);
  EXPECT_NEAR(bce_loss(target, target), floor, 1e-12);
}

TEST(TrainTest, DeterministicUnderSeed) {
  Gen gen(46);
  const Eigen::MatrixXd x = random_matrix(gen, 10, 50);
  const Eigen::MatrixXd t = random_labels(gen, 6, 50);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 7;
  MlpPositioner a = MlpPositioner::init({10, 8, 8, 6}, 1);
  MlpPositioner b = a;
  EXPECT_EQ(train(a, x, t, cfg), train(b, x, t, cfg));
  EXPECT_EQ(a, b);
  MlpPositioner c = MlpPositioner::init({10, 8, 8, 6}, 1);
  cfg.seed = 2;
  train(c, x, t, cfg);
  EXPECT_FALSE(a == c);
}

TEST(TrainTest, SgdAlsoLearns) {
  Gen gen(47);
  const Eigen::MatrixXd x = random_matrix(gen, 6, 40);
  const Eigen::MatrixXd t = random_labels(gen, 4, 40);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 0.1;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  MlpPositioner m = MlpPositioner::init({6, 8, 8, 4}, 2);
  const auto curve = train(m, x, t, cfg);
  EXPECT_LT(curve.back(), curve.front());
  for (double v : m.flatten()) ASSERT_TRUE(std::isfinite(v));
}

TEST(TrainTest, NonFiniteInputIsNumericFailure) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 4);
  x(1, 2) = std::numeric_limits<double>::quiet_NaN();
  MlpPositioner m = MlpPositioner::init({3, 4, 2}, 1);
  try {
    train(m, x, Eigen::MatrixXd::Constant(2, 4, 0.5), TrainConfig{});
    FAIL() << "expected NumericFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NumericFailure);
  }
}

TEST(TrainTest, RejectsBadConfig) {
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.bn_momentum = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(CoordBaselineTest, HeadStaysFrozenAndLossFalls) {
  // Two separable clusters mapped to opposite corners.
  Gen gen(48);
  const Grid g = Grid::rectangular({0.0, 1.0, 0.0, 1.0, 3});
  Eigen::MatrixXd x(4, 60);
  Eigen::MatrixXd pos(2, 60);
  for (int j = 0; j < 60; ++j) {
    const bool left = j % 2 == 0;
    x.col(j) = random_matrix(gen, 4, 1, -0.1, 0.1);
    x(0, j) += left ? -1.0 : 1.0;
    pos.col(j) = left ? Eigen::Vector2d(0.1, 0.2) : Eigen::Vector2d(0.9, 0.7);
  }
  MlpPositioner m = MlpPositioner::init({4, 8, 8, 9}, 3);
  m.set_coord_head(g);
  const Eigen::MatrixXd head = *m.coord_head();
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 10;
  const auto curve = train_coords_baseline(m, x, pos, cfg);
  EXPECT_EQ(*m.coord_head(), head);
  EXPECT_LT(curve.back(), 0.2 * curve.front());
  MlpPositioner headless = MlpPositioner::init({4, 8, 8, 9}, 3);
  EXPECT_THROW(train_coords_baseline(headless, x, pos, cfg), Error);
}

TEST(FlattenTest, RoundTrip) {
  Gen gen(49);
  MlpPositioner m = MlpPositioner::init({5, 6, 6, 3}, 4);
  const Eigen::VectorXd p = random_matrix(gen, static_cast<int>(m.parameter_count()), 1);
  m.unflatten(p);
  EXPECT_EQ(m.flatten(), p);
  EXPECT_THROW(m.unflatten(Eigen::VectorXd::Zero(3)), Error);
}

TEST(MdeGradientTest, MatchesFiniteDifferences) {
  Gen gen(50);
  const Eigen::MatrixXd maps = random_matrix(gen, 8, 6, 0.0, 1.0);
  const Eigen::MatrixXd pos = random_matrix(gen, 2, 6, 0.0, 3.0);
  const Eigen::MatrixXd w = random_matrix(gen, 2, 8);
  const LossGradient lg = mde_loss_and_gradient(w, maps, pos);
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
  const Eigen::VectorXd numeric = testing::numeric_gradient(
      [&](const Eigen::VectorXd& v) {
        const Eigen::MatrixXd probe = Eigen::Map<const Eigen::MatrixXd>(v.data(), 2, 8);
        return mde_loss_and_gradient(probe, maps, pos).loss;
      },
      flat);
  EXPECT_LT(testing::max_relative_error(lg.gradient, numeric), 1e-4);

  // A sample with zero residual adds nothing to the gradient.
  Eigen::MatrixXd exact = pos;
  exact.col(0) = w * maps.col(0);
  const LossGradient with_zero = mde_loss_and_gradient(w, maps, exact);
  EXPECT_TRUE(with_zero.gradient.allFinite());
}

struct FusionFixture {
  Grid grid = Grid::rectangular({0.0, 2.0, 0.0, 2.0, 3});
  Eigen::MatrixXd stacked;
  Eigen::MatrixXd positions;

  explicit FusionFixture(Gen& gen, int links = 2, int n = 80) {
    const int k = grid.count();
    stacked.resize(links * k, n);
    positions.resize(2, n);
    for (int j = 0; j < n; ++j) {
      positions.col(j) << testing::uniform(gen, 0.0, 2.0), testing::uniform(gen, 0.0, 2.0);
      // Link 0 is unbiased but blurry; link 1 is sharp but biased to the right.
      const Eigen::VectorXd sharp = min_variance_pmf_rect(positions.col(j), grid).mass();
      Eigen::Vector2d shifted = positions.col(j);
      shifted.x() = std::min(2.0, shifted.x() + 0.4);
      stacked.block(0, j, k, 1) = 0.5 * sharp + 0.5 * ProbabilityMap::uniform(k).mass();
      stacked.block(k, j, k, 1) = min_variance_pmf_rect(shifted, grid).mass();
      for (int b = 2; b < links; ++b) stacked.block(b * k, j, k, 1) = sharp;
    }
  }
};

TEST(FusionFinetuneTest, ZeroEpochsIsAveraging) {
  Gen gen(51);
  const FusionFixture f(gen);
  TrainConfig cfg;
  cfg.epochs = 0;
  const FusionWeights w = fusion_finetune_maps(f.stacked, f.positions, f.grid, 2, cfg);
  EXPECT_EQ(w.matrix, FusionWeights::averaging(f.grid, 2).matrix);
  EXPECT_EQ(w.links, 2);
}

TEST(FusionFinetuneTest, NeverWorseThanAveraging) {
  Gen gen(52);
  const FusionFixture f(gen);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  const FusionWeights init = FusionWeights::averaging(f.grid, 2);
  const FusionWeights tuned = fusion_finetune_maps(f.stacked, f.positions, f.grid, 2, cfg);
  const double before = mde_loss_and_gradient(init.matrix, f.stacked, f.positions).loss;
  const double after = mde_loss_and_gradient(tuned.matrix, f.stacked, f.positions).loss;
  EXPECT_LE(after, before);
  // The bias of link 1 is learnable, so there is real headroom here.
  EXPECT_LT(after, 0.8 * before);
}

TEST(FusionFinetuneTest, RunsFrozenModels) {
  Gen gen(53);
  const Grid g = Grid::rectangular({0.0, 1.0, 0.0, 1.0, 2});
  std::vector<MlpPositioner> models{MlpPositioner::init({3, 4, 4}, 1), MlpPositioner::init({5, 4, 4}, 2)};
  std::vector<Eigen::MatrixXd> feats{random_matrix(gen, 3, 12), random_matrix(gen, 5, 12)};
  const Eigen::MatrixXd pos = random_matrix(gen, 2, 12, 0.0, 1.0);
  TrainConfig cfg;
  cfg.epochs = 3;
  const std::vector<MlpPositioner> before = models;
  const FusionWeights w = fusion_finetune(models, feats, pos, g, cfg);
  EXPECT_EQ(w.matrix.rows(), 2);
  EXPECT_EQ(w.matrix.cols(), 8);
  EXPECT_EQ(models, before);
  feats[1] = random_matrix(gen, 5, 11);
  EXPECT_THROW(fusion_finetune(models, feats, pos, g, cfg), Error);
}

}  // namespace
}  // namespace csiloc
