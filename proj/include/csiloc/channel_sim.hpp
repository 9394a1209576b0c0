#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace csiloc {

using Complex = std::complex<double>;
using Rng = std::mt19937_64;

/// Complex W x M_R x M_T channel tensor, stored with the TX index fastest.
class CsiTensor {
 public:
  CsiTensor() = default;
  CsiTensor(int subcarriers, int rx, int tx)
      : subcarriers_(subcarriers), rx_(rx), tx_(tx),
        data_(static_cast<std::size_t>(subcarriers) * rx * tx) {}

  int subcarriers() const { return subcarriers_; }
  int rx() const { return rx_; }
  int tx() const { return tx_; }

  Complex& at(int w, int n, int m) { return data_[index(w, n, m)]; }
  const Complex& at(int w, int n, int m) const { return data_[index(w, n, m)]; }

  std::span<Complex> data() { return data_; }
  std::span<const Complex> data() const { return data_; }

  bool operator==(const CsiTensor&) const = default;

 private:
  std::size_t index(int w, int n, int m) const {
    return (static_cast<std::size_t>(w) * rx_ + n) * tx_ + m;
  }

  int subcarriers_ = 0;
  int rx_ = 0;
  int tx_ = 0;
  std::vector<Complex> data_;
};

struct CsiMeasurement {
  CsiTensor h;
  int ap_index = 0;
  Eigen::VectorXd true_position;
  /// Snapshot id: measurements of the same UE position share it across APs.
  std::uint64_t timestamp = 0;
};

struct Room {
  double x_min = 0.0;
  double x_max = 4.0;
  double y_min = 0.0;
  double y_max = 4.0;

  bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= x_min && p.x() <= x_max && p.y() >= y_min && p.y() <= y_max;
  }
};

struct Impairments {
  /// Per-packet timing error drawn uniformly from {0, ..., delay_range} taps.
  int delay_range = 4;
  /// Per-packet global phase drawn uniformly from [-phase_range, phase_range].
  double phase_range = 3.141592653589793;
  /// Per-packet gain drawn uniformly from [-gain_range_db, gain_range_db] dB.
  double gain_range_db = 6.0;
};

struct AccessPoint {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  /// Orientation of the receive ULA axis, radians from the x axis.
  double array_axis = 0.0;
};

struct SimConfig {
  int subcarriers = 64;
  /// Trained subcarrier indices, 0-based and sorted.
  std::vector<int> used_subcarriers;
  int cp_length = 16;
  int tx_antennas = 2;
  int rx_antennas = 4;
  std::vector<AccessPoint> access_points;
  /// Element spacing of the AP and UE arrays (meters).
  double array_spacing = 0.029;
  int paths_per_link = 4;
  /// Signal-to-noise ratio; no noise when empty.
  std::optional<double> snr_db = 20.0;
  Impairments impairments;
  double sample_rate_hz = 80e6;
  double carrier_hz = 5.2e9;
  /// Timing advance of the receiver's window ahead of the first path (taps).
  int sync_offset = 2;
  Room room;
  std::uint64_t seed = 1;

  /// 802.11a/g-style layout for 64 subcarriers: DC and 11 edge tones unused.
  static std::vector<int> default_used_subcarriers(int subcarriers);
  static SimConfig desk_scale();

  int ap_count() const { return static_cast<int>(access_points.size()); }

  /// Throws Config on any violated invariant.
  void validate() const;
};

struct PacketImpairment {
  int delay = 0;
  double phase = 0.0;
  double gain = 1.0;
};

/// Multipath component seen by one link: fractional delay in taps, complex gain,
/// arrival angle at the AP and departure angle at the UE (radians, global frame).
struct PathComponent {
  double delay_taps;
  Complex gain;
  double arrival_angle;
  double departure_angle;
};

/**
 * Geometric MIMO-OFDM channel: a line-of-sight path plus single-bounce paths
 * off scatterers fixed once per seed, followed by per-packet timing, phase and
 * gain impairments and AWGN.
 */
class ChannelSimulator {
 public:
  explicit ChannelSimulator(SimConfig cfg);

  const SimConfig& config() const { return cfg_; }
  const std::vector<Eigen::Vector2d>& scatterers() const { return scatterers_; }
  const std::vector<Complex>& reflection_gains() const { return reflections_; }

  std::vector<PathComponent> paths(const Eigen::Vector2d& x, int ap) const;

  /// Impairment-free, noise-free frequency response.
  CsiTensor clean_response(const Eigen::Vector2d& x, int ap) const;

  /// Frequency response of explicit path components on the used subcarriers.
  CsiTensor response(std::span<const PathComponent> components, int ap) const;

  PacketImpairment draw_impairment(Rng& rng) const;

  CsiMeasurement synth_csi(const Eigen::Vector2d& x, int ap, Rng& rng) const;

  /// Applies the given impairment; the RNG only feeds the noise.
  CsiMeasurement synth_csi(const Eigen::Vector2d& x, int ap, const PacketImpairment& imp,
                           Rng& rng) const;

  /// Upper bound on any path delay over the room (taps, including sync offset).
  double max_path_delay() const;

 private:
  SimConfig cfg_;
  std::vector<Eigen::Vector2d> scatterers_;
  std::vector<Complex> reflections_;
};

/// Applies an integer tap delay as a linear phase ramp, then phase and gain.
void apply_impairment(CsiTensor& h, const PacketImpairment& imp);

/// One measurement per position per AP, ordered position-major; position u gets
/// snapshot id first_snapshot + u.
std::vector<CsiMeasurement> synth_dataset(std::span<const Eigen::Vector2d> trajectory,
                                          const SimConfig& cfg, std::uint64_t first_snapshot = 0);

/// Deterministic per-(seed, snapshot, AP) RNG so generation can run in any order.
Rng packet_rng(std::uint64_t seed, std::uint64_t snapshot, int ap);

enum class TrajectoryKind { Lawnmower, RandomWalk, VipPath };

TrajectoryKind parse_trajectory_kind(const std::string& name);
std::string to_string(TrajectoryKind kind);

std::vector<Eigen::Vector2d> make_trajectory(TrajectoryKind kind, const Room& room, int n,
                                             std::uint64_t seed = 1);

}  // namespace csiloc
