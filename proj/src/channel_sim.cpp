#include "csiloc/channel_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "csiloc/error.hpp"

namespace csiloc {
namespace {

constexpr double kSpeedOfLight = 299792458.0;
constexpr double kMinDistance = 0.05;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double angle_of(const Eigen::Vector2d& v) { return std::atan2(v.y(), v.x()); }

// Signed subcarrier index: the upper half of the FFT grid are negative frequencies.
double signed_subcarrier(int w, int subcarriers) {
  return w < subcarriers / 2 ? w : w - subcarriers;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<int> SimConfig::default_used_subcarriers(int subcarriers) {
  // Scale the 64-point 802.11a/g layout (tones +-1..26 used) to any FFT size.
  const int half_used = std::max(1, (subcarriers * 26) / 64);
  std::vector<int> used;
  for (int w = 1; w <= half_used; ++w) used.push_back(w);
  for (int w = subcarriers - half_used; w < subcarriers; ++w) used.push_back(w);
  return used;
}

SimConfig SimConfig::desk_scale() {
  SimConfig cfg;
  cfg.used_subcarriers = default_used_subcarriers(cfg.subcarriers);
  cfg.access_points = {
      AccessPoint{Eigen::Vector2d(-0.25, 1.6), std::numbers::pi / 2},
      AccessPoint{Eigen::Vector2d(2.4, 4.25), 0.0},
  };
  return cfg;
}

void SimConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorCode::Config, msg); };
  check(subcarriers >= 2, "subcarriers must be >= 2");
  check(!used_subcarriers.empty(), "used subcarrier set is empty");
  check(std::is_sorted(used_subcarriers.begin(), used_subcarriers.end()) &&
            std::adjacent_find(used_subcarriers.begin(), used_subcarriers.end()) ==
                used_subcarriers.end(),
        "used subcarriers must be sorted and distinct");
  check(used_subcarriers.front() >= 0 && used_subcarriers.back() < subcarriers,
        "used subcarrier index out of range");
  check(cp_length >= 1, "cp_length must be >= 1");
  check(cp_length <= static_cast<int>(used_subcarriers.size()),
        "cp_length must not exceed the number of used subcarriers");
  check(tx_antennas >= 1 && rx_antennas >= 1, "antenna counts must be >= 1");
  check(!access_points.empty(), "at least one access point is required");
  check(array_spacing > 0.0, "array_spacing must be positive");
  check(paths_per_link >= 1, "paths_per_link must be >= 1");
  check(!snr_db || std::isfinite(*snr_db), "snr_db must be finite");
  check(impairments.delay_range >= 0, "delay_range must be >= 0");
  check(impairments.phase_range >= 0.0 && impairments.gain_range_db >= 0.0,
        "impairment ranges must be >= 0");
  check(sample_rate_hz > 0.0 && carrier_hz > 0.0, "sample rate and carrier must be positive");
  check(sync_offset >= 0, "sync_offset must be >= 0");
  check(room.x_max > room.x_min && room.y_max > room.y_min, "room must have positive extent");
}

ChannelSimulator::ChannelSimulator(SimConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();

  // Scatterers sit on a perimeter 0.5 m outside the room, standing in for walls.
  Rng rng(splitmix64(cfg_.seed ^ 0x5ca77e12ULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Room& r = cfg_.room;
  const double margin = 0.5;
  const double w = r.x_max - r.x_min + 2 * margin;
  const double h = r.y_max - r.y_min + 2 * margin;
  for (int s = 0; s + 1 < cfg_.paths_per_link; ++s) {
    double t = unit(rng) * 2.0 * (w + h);
    Eigen::Vector2d q;
    if (t < w) {
      q = {r.x_min - margin + t, r.y_min - margin};
    } else if ((t -= w) < h) {
      q = {r.x_max + margin, r.y_min - margin + t};
    } else if ((t -= h) < w) {
      q = {r.x_max + margin - t, r.y_max + margin};
    } else {
      t -= w;
      q = {r.x_min - margin, r.y_max + margin - t};
    }
    scatterers_.push_back(q);
    const double magnitude = 0.3 + 0.5 * unit(rng);
    reflections_.push_back(std::polar(magnitude, kTwoPi * unit(rng) - std::numbers::pi));
  }

  const double worst = cfg_.impairments.delay_range + max_path_delay();
  require(worst < cfg_.cp_length, ErrorCode::Config,
          "delay_range plus maximum path delay (" + std::to_string(worst) +
              " taps) must stay below cp_length");
}

double ChannelSimulator::max_path_delay() const {
  const Room& r = cfg_.room;
  const std::array<Eigen::Vector2d, 4> corners = {
      Eigen::Vector2d(r.x_min, r.y_min), Eigen::Vector2d(r.x_max, r.y_min),
      Eigen::Vector2d(r.x_min, r.y_max), Eigen::Vector2d(r.x_max, r.y_max)};
  double longest = 0.0;
  for (const auto& ap : cfg_.access_points) {
    for (const auto& c : corners) {
      longest = std::max(longest, (c - ap.position).norm());
      for (const auto& q : scatterers_) {
        longest = std::max(longest, (c - q).norm() + (q - ap.position).norm());
      }
    }
  }
  return cfg_.sync_offset + longest / kSpeedOfLight * cfg_.sample_rate_hz;
}

std::vector<PathComponent> ChannelSimulator::paths(const Eigen::Vector2d& x, int ap) const {
  require(ap >= 0 && ap < cfg_.ap_count(), ErrorCode::InvalidArgument, "AP index out of range");
  const Eigen::Vector2d& a = cfg_.access_points[ap].position;
  const double taps_per_meter = cfg_.sample_rate_hz / kSpeedOfLight;

  std::vector<PathComponent> out;
  const double los = std::max((x - a).norm(), kMinDistance);
  out.push_back({cfg_.sync_offset + los * taps_per_meter, Complex(1.0 / los, 0.0),
                 angle_of(x - a), angle_of(a - x)});
  for (std::size_t s = 0; s < scatterers_.size(); ++s) {
    const Eigen::Vector2d& q = scatterers_[s];
    const double length = std::max((x - q).norm() + (q - a).norm(), kMinDistance);
    out.push_back({cfg_.sync_offset + length * taps_per_meter, reflections_[s] / length,
                   angle_of(q - a), angle_of(q - x)});
  }
  return out;
}

CsiTensor ChannelSimulator::clean_response(const Eigen::Vector2d& x, int ap) const {
  return response(paths(x, ap), ap);
}

CsiTensor ChannelSimulator::response(std::span<const PathComponent> components, int ap) const {
  require(ap >= 0 && ap < cfg_.ap_count(), ErrorCode::InvalidArgument, "AP index out of range");
  const int W = cfg_.subcarriers;
  const double wavelength = kSpeedOfLight / cfg_.carrier_hz;
  const double spacing = cfg_.array_spacing / wavelength;
  const double ap_axis = cfg_.access_points[ap].array_axis;

  CsiTensor h(W, cfg_.rx_antennas, cfg_.tx_antennas);
  for (const PathComponent& path : components) {
    const double rx_phase = -kTwoPi * spacing * std::cos(path.arrival_angle - ap_axis);
    const double tx_phase = -kTwoPi * spacing * std::cos(path.departure_angle);
    for (int w : cfg_.used_subcarriers) {
      const Complex delay = std::polar(1.0, -kTwoPi * signed_subcarrier(w, W) * path.delay_taps / W);
      for (int n = 0; n < cfg_.rx_antennas; ++n) {
        for (int m = 0; m < cfg_.tx_antennas; ++m) {
          h.at(w, n, m) += path.gain * delay * std::polar(1.0, rx_phase * n + tx_phase * m);
        }
      }
    }
  }
  return h;
}

void apply_impairment(CsiTensor& h, const PacketImpairment& imp) {
  const int W = h.subcarriers();
  const Complex common = std::polar(imp.gain, imp.phase);
  for (int w = 0; w < W; ++w) {
    const Complex factor =
        common * std::polar(1.0, -kTwoPi * signed_subcarrier(w, W) * imp.delay / W);
    for (int n = 0; n < h.rx(); ++n) {
      for (int m = 0; m < h.tx(); ++m) h.at(w, n, m) *= factor;
    }
  }
}

PacketImpairment ChannelSimulator::draw_impairment(Rng& rng) const {
  const Impairments& imp = cfg_.impairments;
  std::uniform_int_distribution<int> delay(0, imp.delay_range);
  std::uniform_real_distribution<double> phase(-imp.phase_range, imp.phase_range);
  std::uniform_real_distribution<double> gain_db(-imp.gain_range_db, imp.gain_range_db);
  PacketImpairment out;
  out.delay = delay(rng);
  out.phase = imp.phase_range > 0.0 ? phase(rng) : 0.0;
  out.gain = std::pow(10.0, (imp.gain_range_db > 0.0 ? gain_db(rng) : 0.0) / 20.0);
  return out;
}

CsiMeasurement ChannelSimulator::synth_csi(const Eigen::Vector2d& x, int ap, Rng& rng) const {
  const PacketImpairment imp = draw_impairment(rng);
  return synth_csi(x, ap, imp, rng);
}

CsiMeasurement ChannelSimulator::synth_csi(const Eigen::Vector2d& x, int ap,
                                           const PacketImpairment& imp, Rng& rng) const {
  CsiMeasurement out;
  out.h = clean_response(x, ap);
  out.ap_index = ap;
  out.true_position = x;
  apply_impairment(out.h, imp);

  if (cfg_.snr_db) {
    double power = 0.0;
    for (int w : cfg_.used_subcarriers) {
      for (int n = 0; n < out.h.rx(); ++n) {
        for (int m = 0; m < out.h.tx(); ++m) power += std::norm(out.h.at(w, n, m));
      }
    }
    power /= static_cast<double>(cfg_.used_subcarriers.size()) * out.h.rx() * out.h.tx();
    const double noise_var = power / std::pow(10.0, *cfg_.snr_db / 10.0);
    std::normal_distribution<double> noise(0.0, std::sqrt(noise_var / 2.0));
    for (int w : cfg_.used_subcarriers) {
      for (int n = 0; n < out.h.rx(); ++n) {
        for (int m = 0; m < out.h.tx(); ++m) {
          const double re = noise(rng);
          const double im = noise(rng);
          out.h.at(w, n, m) += Complex(re, im);
        }
      }
    }
  }
  return out;
}

Rng packet_rng(std::uint64_t seed, std::uint64_t snapshot, int ap) {
  std::uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ snapshot);
  s = splitmix64(s ^ static_cast<std::uint64_t>(ap));
  return Rng(s);
}

std::vector<CsiMeasurement> synth_dataset(std::span<const Eigen::Vector2d> trajectory,
                                          const SimConfig& cfg, std::uint64_t first_snapshot) {
  const ChannelSimulator sim(cfg);
  std::vector<CsiMeasurement> out;
  out.reserve(trajectory.size() * cfg.ap_count());
  for (std::size_t u = 0; u < trajectory.size(); ++u) {
    for (int b = 0; b < cfg.ap_count(); ++b) {
      const std::uint64_t snapshot = first_snapshot + u;
      Rng rng = packet_rng(cfg.seed, snapshot, b);
      CsiMeasurement m = sim.synth_csi(trajectory[u], b, rng);
      m.timestamp = snapshot;
      out.push_back(std::move(m));
    }
  }
  return out;
}

TrajectoryKind parse_trajectory_kind(const std::string& name) {
  if (name == "lawnmower") return TrajectoryKind::Lawnmower;
  if (name == "random_walk") return TrajectoryKind::RandomWalk;
  if (name == "vip_path") return TrajectoryKind::VipPath;
  fail(ErrorCode::Config, "unknown trajectory kind '" + name + "'");
}

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::Lawnmower: return "lawnmower";
    case TrajectoryKind::RandomWalk: return "random_walk";
    case TrajectoryKind::VipPath: return "vip_path";
  }
  return "unknown";
}

namespace {

std::vector<Eigen::Vector2d> lawnmower(const Room& room, int n) {
  const int rows = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const int cols = (n + rows - 1) / rows;
  auto coord = [](double lo, double hi, int i, int count) {
    return count == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (count - 1);
  };
  std::vector<Eigen::Vector2d> out;
  for (int r = 0; r < rows && static_cast<int>(out.size()) < n; ++r) {
    for (int c = 0; c < cols && static_cast<int>(out.size()) < n; ++c) {
      const int col = r % 2 == 0 ? c : cols - 1 - c;
      out.emplace_back(coord(room.x_min, room.x_max, col, cols),
                       coord(room.y_min, room.y_max, r, rows));
    }
  }
  return out;
}

double reflect(double v, double lo, double hi, bool& flipped) {
  flipped = false;
  if (v < lo) {
    v = 2 * lo - v;
    flipped = true;
  } else if (v > hi) {
    v = 2 * hi - v;
    flipped = true;
  }
  return std::clamp(v, lo, hi);
}

std::vector<Eigen::Vector2d> random_walk(const Room& room, int n, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0xa11cecafeULL));
  std::normal_distribution<double> turn(0.0, 0.6);
  std::uniform_real_distribution<double> start_heading(-std::numbers::pi, std::numbers::pi);
  const double step = 0.05 * std::min(room.x_max - room.x_min, room.y_max - room.y_min);

  Eigen::Vector2d pos(0.5 * (room.x_min + room.x_max), 0.5 * (room.y_min + room.y_max));
  double heading = start_heading(rng);
  std::vector<Eigen::Vector2d> out{pos};
  while (static_cast<int>(out.size()) < n) {
    heading += turn(rng);
    bool fx = false;
    bool fy = false;
    pos.x() = reflect(pos.x() + step * std::cos(heading), room.x_min, room.x_max, fx);
    pos.y() = reflect(pos.y() + step * std::sin(heading), room.y_min, room.y_max, fy);
    if (fx) heading = std::numbers::pi - heading;
    if (fy) heading = -heading;
    out.push_back(pos);
  }
  return out;
}

// The letters V, I and P traced as one polyline in a 3 x 1 box.
std::vector<Eigen::Vector2d> vip_outline() {
  std::vector<Eigen::Vector2d> pts = {{0.0, 1.0}, {0.4, 0.0}, {0.8, 1.0},   // V
                                      {1.4, 1.0}, {1.4, 0.0},                 // I
                                      {2.0, 0.0}, {2.0, 1.0}, {2.5, 1.0}};    // P stem
  for (int i = 1; i <= 12; ++i) {  // P bowl
    const double a = std::numbers::pi / 2 - std::numbers::pi * i / 12;
    pts.emplace_back(2.5 + 0.25 * std::cos(a), 0.75 + 0.25 * std::sin(a));
  }
  pts.emplace_back(2.0, 0.5);
  return pts;
}

std::vector<Eigen::Vector2d> vip_path(const Room& room, int n) {
  const std::vector<Eigen::Vector2d> outline = vip_outline();
  const double width = room.x_max - room.x_min;
  const double height = room.y_max - room.y_min;
  auto place = [&](const Eigen::Vector2d& p) {
    return Eigen::Vector2d(room.x_min + width * (0.1 + 0.8 * p.x() / 2.75),
                           room.y_min + height * (0.2 + 0.6 * p.y()));
  };
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < outline.size(); ++i) {
    cumulative.push_back(cumulative.back() + (place(outline[i]) - place(outline[i - 1])).norm());
  }
  std::vector<Eigen::Vector2d> out;
  for (int i = 0; i < n; ++i) {
    const double s = n == 1 ? 0.0 : cumulative.back() * i / (n - 1);
    std::size_t seg = std::upper_bound(cumulative.begin(), cumulative.end(), s) - cumulative.begin();
    seg = std::clamp<std::size_t>(seg, 1, outline.size() - 1);
    const double len = cumulative[seg] - cumulative[seg - 1];
    const double t = len > 0 ? std::clamp((s - cumulative[seg - 1]) / len, 0.0, 1.0) : 0.0;
    out.push_back(place(outline[seg - 1]) + t * (place(outline[seg]) - place(outline[seg - 1])));
  }
  return out;
}

}  // namespace

std::vector<Eigen::Vector2d> make_trajectory(TrajectoryKind kind, const Room& room, int n,
                                             std::uint64_t seed) {
  require(n >= 1, ErrorCode::InvalidArgument, "trajectory needs n >= 1");
  switch (kind) {
    case TrajectoryKind::Lawnmower: return lawnmower(room, n);
    case TrajectoryKind::RandomWalk: return random_walk(room, n, seed);
    case TrajectoryKind::VipPath: return vip_path(room, n);
  }
  return {};
}

}  // namespace csiloc
