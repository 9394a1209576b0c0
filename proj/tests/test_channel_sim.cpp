#include <gtest/gtest.h>

#include <numbers>

#include "csiloc/channel_sim.hpp"
#include "csiloc/csi_features.hpp"
#include "csiloc/error.hpp"

namespace csiloc {
namespace {

SimConfig quiet_config() {
  SimConfig cfg = SimConfig::desk_scale();
  cfg.snr_db.reset();
  cfg.impairments = {0, 0.0, 0.0};
  return cfg;
}

std::vector<double> tap_energy(const CsiTensor& h, const SimConfig& cfg) {
  const DelayTensor t = cached_delay_transform(cfg.subcarriers, cfg.used_subcarriers, cfg.cp_length)
                            .apply(h, DelayMethod::Pinv);
  std::vector<double> energy(t.taps(), 0.0);
  for (int k = 0; k < t.taps(); ++k) {
    for (int n = 0; n < t.rx(); ++n) {
      for (int m = 0; m < t.tx(); ++m) energy[k] += std::norm(t.at(k, n, m));
    }
  }
  return energy;
}

TEST(SimConfigTest, DefaultsAreDeskScale) {
  const SimConfig cfg = SimConfig::desk_scale();
  EXPECT_EQ(cfg.subcarriers, 64);
  EXPECT_EQ(cfg.used_subcarriers.size(), 52u);
  EXPECT_EQ(cfg.cp_length, 16);
  EXPECT_EQ(cfg.tx_antennas, 2);
  EXPECT_EQ(cfg.rx_antennas, 4);
  EXPECT_EQ(cfg.ap_count(), 2);
  EXPECT_NO_THROW(ChannelSimulator{cfg});
}

TEST(SimConfigTest, RejectsDelaysBeyondCyclicPrefix) {
  SimConfig cfg = SimConfig::desk_scale();
  cfg.impairments.delay_range = 14;
  try {
    ChannelSimulator sim(cfg);
    FAIL() << "expected a config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
  }
  cfg = SimConfig::desk_scale();
  cfg.cp_length = 60;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = SimConfig::desk_scale();
  cfg.used_subcarriers = {3, 2, 1};
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(ChannelSimTest, LineOfSightConcentratesInOneTap) {
  // One tap per meter, AP 3 m from the UE and 2 taps of sync offset: the path sits on tap 5.
  SimConfig cfg = quiet_config();
  cfg.paths_per_link = 1;
  cfg.sample_rate_hz = 299792458.0;
  cfg.access_points = {AccessPoint{Eigen::Vector2d(-1.0, 0.0), 0.0}};
  const ChannelSimulator sim(cfg);
  const CsiTensor h = sim.clean_response(Eigen::Vector2d(2.0, 0.0), 0);
  const auto energy = tap_energy(h, cfg);
  double total = 0.0;
  for (double e : energy) total += e;
  EXPECT_GE(energy[5] / total, 0.99);
}

TEST(ChannelSimTest, PurePathMatchesDftPhase) {
  SimConfig cfg = quiet_config();
  const ChannelSimulator sim(cfg);
  const double axis = cfg.access_points[0].array_axis;
  const Complex gain(0.3, -0.7);
  // Broadside arrival and departure: no steering phase across the arrays.
  const PathComponent path{4.0, gain, axis + std::numbers::pi / 2, std::numbers::pi / 2};
  const CsiTensor h = sim.response(std::span(&path, 1), 0);
  std::vector<bool> used(cfg.subcarriers, false);
  for (int w : cfg.used_subcarriers) used[w] = true;
  for (int w = 0; w < cfg.subcarriers; ++w) {
    const Complex expected =
        used[w] ? gain * std::polar(1.0, -2.0 * std::numbers::pi * w * 4.0 / cfg.subcarriers)
                : Complex(0.0);
    for (int n = 0; n < cfg.rx_antennas; ++n) {
      for (int m = 0; m < cfg.tx_antennas; ++m) {
        EXPECT_LE(std::abs(h.at(w, n, m) - expected), 1e-12) << "w=" << w;
      }
    }
  }
}

TEST(ChannelSimTest, GlobalPhaseIsExactFactor) {
  const SimConfig cfg = quiet_config();
  const ChannelSimulator sim(cfg);
  const Eigen::Vector2d x(1.3, 2.2);
  Rng rng(1);
  const CsiMeasurement a = sim.synth_csi(x, 1, PacketImpairment{0, 0.0, 1.0}, rng);
  const CsiMeasurement b =
      sim.synth_csi(x, 1, PacketImpairment{0, std::numbers::pi / 3, 1.0}, rng);
  const Complex factor = std::polar(1.0, std::numbers::pi / 3);
  for (std::size_t i = 0; i < a.h.data().size(); ++i) {
    EXPECT_LE(std::abs(b.h.data()[i] - factor * a.h.data()[i]), 1e-14);
  }
}

TEST(ChannelSimTest, SameSeedIsBitIdentical) {
  const SimConfig cfg = SimConfig::desk_scale();
  const ChannelSimulator s1(cfg);
  const ChannelSimulator s2(cfg);
  Rng r1 = packet_rng(9, 4, 1);
  Rng r2 = packet_rng(9, 4, 1);
  const Eigen::Vector2d x(2.5, 0.7);
  EXPECT_EQ(s1.synth_csi(x, 1, r1).h, s2.synth_csi(x, 1, r2).h);
  Rng r3 = packet_rng(9, 5, 1);
  Rng r4 = packet_rng(9, 4, 1);
  EXPECT_FALSE(s1.synth_csi(x, 1, r3).h == s1.synth_csi(x, 1, r4).h);
}

TEST(ChannelSimTest, UnusedSubcarriersStayZeroWithNoise) {
  const SimConfig cfg = SimConfig::desk_scale();
  const ChannelSimulator sim(cfg);
  Rng rng(3);
  const CsiMeasurement m = sim.synth_csi(Eigen::Vector2d(1, 1), 0, rng);
  for (int w : {0, 27, 32, 37}) {
    for (int n = 0; n < cfg.rx_antennas; ++n) EXPECT_EQ(m.h.at(w, n, 0), Complex(0.0));
  }
  for (const auto& c : m.h.data()) EXPECT_TRUE(std::isfinite(c.real()) && std::isfinite(c.imag()));
}

TEST(ChannelSimTest, SnrIsCalibrated) {
  const SimConfig cfg = SimConfig::desk_scale();
  const ChannelSimulator sim(cfg);
  Rng pos_rng(8);
  std::uniform_real_distribution<double> coord(0.0, 4.0);
  double signal = 0.0;
  double noise = 0.0;
  for (int i = 0; i < 400; ++i) {
    const Eigen::Vector2d x(coord(pos_rng), coord(pos_rng));
    Rng rng = packet_rng(cfg.seed, i, i % 2);
    const PacketImpairment imp = sim.draw_impairment(rng);
    const CsiMeasurement noisy = sim.synth_csi(x, i % 2, imp, rng);
    CsiTensor clean = sim.clean_response(x, i % 2);
    apply_impairment(clean, imp);
    for (std::size_t j = 0; j < clean.data().size(); ++j) {
      signal += std::norm(clean.data()[j]);
      noise += std::norm(noisy.h.data()[j] - clean.data()[j]);
    }
  }
  EXPECT_NEAR(10.0 * std::log10(signal / noise), *cfg.snr_db, 0.5);
}

TEST(ChannelSimTest, ImpairmentDrawsStayInRange) {
  const ChannelSimulator sim(SimConfig::desk_scale());
  const Impairments& imp = sim.config().impairments;
  Rng rng(4);
  bool saw_max_delay = false;
  for (int i = 0; i < 2000; ++i) {
    const PacketImpairment p = sim.draw_impairment(rng);
    EXPECT_GE(p.delay, 0);
    EXPECT_LE(p.delay, imp.delay_range);
    saw_max_delay |= p.delay == imp.delay_range;
    EXPECT_LE(std::abs(p.phase), imp.phase_range);
    EXPECT_LE(std::abs(20.0 * std::log10(p.gain)), imp.gain_range_db + 1e-12);
  }
  EXPECT_TRUE(saw_max_delay);
}

TEST(SynthDatasetTest, CardinalityOrderAndDeterminism) {
  const SimConfig cfg = SimConfig::desk_scale();
  const auto traj = make_trajectory(TrajectoryKind::RandomWalk, cfg.room, 10, 3);
  const auto a = synth_dataset(traj, cfg, 100);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].ap_index, static_cast<int>(i % 2));
    EXPECT_EQ(a[i].timestamp, 100 + i / 2);
    EXPECT_EQ(a[i].true_position, traj[i / 2]);
  }
  const auto b = synth_dataset(traj, cfg, 100);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].h, b[i].h);
}

TEST(SynthDatasetTest, ApsSeeDifferentDelayProfiles) {
  SimConfig cfg = quiet_config();
  cfg.paths_per_link = 1;
  const ChannelSimulator sim(cfg);
  // 1.1 m from the first AP, 4.5 m from the second: about 0.9 taps apart.
  const Eigen::Vector2d x(0.0, 0.5);
  const auto e0 = tap_energy(sim.clean_response(x, 0), cfg);
  const auto e1 = tap_energy(sim.clean_response(x, 1), cfg);
  const auto peak = [](const std::vector<double>& e) {
    return std::max_element(e.begin(), e.end()) - e.begin();
  };
  EXPECT_NE(peak(e0), peak(e1));
}

TEST(TrajectoryTest, LawnmowerSweepsCorners) {
  const Room unit{0.0, 1.0, 0.0, 1.0};
  const auto t = make_trajectory(TrajectoryKind::Lawnmower, unit, 4);
  ASSERT_EQ(t.size(), 4u);
  EXPECT_EQ(t[0], Eigen::Vector2d(0, 0));
  EXPECT_EQ(t[1], Eigen::Vector2d(1, 0));
  EXPECT_EQ(t[2], Eigen::Vector2d(1, 1));
  EXPECT_EQ(t[3], Eigen::Vector2d(0, 1));
}

TEST(TrajectoryTest, WalksStayInsideAndAreSeeded) {
  const Room room;
  for (auto kind : {TrajectoryKind::Lawnmower, TrajectoryKind::RandomWalk, TrajectoryKind::VipPath}) {
    const auto t = make_trajectory(kind, room, 10000, 5);
    ASSERT_EQ(t.size(), 10000u);
    for (const auto& p : t) EXPECT_TRUE(room.contains(p));
  }
  EXPECT_EQ(make_trajectory(TrajectoryKind::RandomWalk, room, 500, 5),
            make_trajectory(TrajectoryKind::RandomWalk, room, 500, 5));
  EXPECT_NE(make_trajectory(TrajectoryKind::RandomWalk, room, 500, 5),
            make_trajectory(TrajectoryKind::RandomWalk, room, 500, 6));
  EXPECT_EQ(parse_trajectory_kind(to_string(TrajectoryKind::VipPath)), TrajectoryKind::VipPath);
  EXPECT_THROW(parse_trajectory_kind("spiral"), Error);
}

}  // namespace
}  // namespace csiloc
