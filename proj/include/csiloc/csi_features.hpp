#pragma once

#include <vector>

#include <Eigen/Dense>

#include "csiloc/channel_sim.hpp"

namespace csiloc {

enum class DelayMethod { Pinv, Ifft };

/// Complex C x M_R x M_T delay-domain taps, TX index fastest.
class DelayTensor {
 public:
  DelayTensor(int taps, int rx, int tx)
      : taps_(taps), rx_(rx), tx_(tx), data_(static_cast<std::size_t>(taps) * rx * tx) {}

  int taps() const { return taps_; }
  int rx() const { return rx_; }
  int tx() const { return tx_; }

  Complex& at(int k, int n, int m) { return data_[(static_cast<std::size_t>(k) * rx_ + n) * tx_ + m]; }
  const Complex& at(int k, int n, int m) const {
    return data_[(static_cast<std::size_t>(k) * rx_ + n) * tx_ + m];
  }

 private:
  int taps_;
  int rx_;
  int tx_;
  std::vector<Complex> data_;
};

/**
 * Least-squares delay-domain estimate from the used subcarriers.
 *
 * The forward model is h_w = sum_k t_k exp(-j 2 pi w k / W) for taps
 * k = 0..C-1; apply() returns pinv(D_used) h_used for every RX/TX pair.
 * The pseudo-inverse is computed once at construction.
 */
class DelayTransform {
 public:
  DelayTransform(int subcarriers, std::vector<int> used, int taps);

  int subcarriers() const { return subcarriers_; }
  int taps() const { return taps_; }
  const std::vector<int>& used() const { return used_; }
  const Eigen::MatrixXcd& dft() const { return dft_; }
  const Eigen::MatrixXcd& pinv() const { return pinv_; }

  DelayTensor apply(const CsiTensor& h, DelayMethod method = DelayMethod::Pinv) const;

 private:
  int subcarriers_;
  std::vector<int> used_;
  int taps_;
  Eigen::MatrixXcd dft_;
  Eigen::MatrixXcd pinv_;
};

/// Shared, immutable transform for a (W, used set, C) triple.
const DelayTransform& cached_delay_transform(int subcarriers, const std::vector<int>& used,
                                             int taps);

DelayTensor delay_transform(const CsiMeasurement& h, const std::vector<int>& used, int taps,
                            DelayMethod method = DelayMethod::Pinv);

/**
 * Instantaneous delay/antenna autocorrelation for TX antenna m:
 *
 *   R[tau, kappa] = sum_n sum_k t[k, n] conj(t[k + tau, n + kappa])
 *
 * for tau = 0..2C-1 and kappa = 0..2M_R-1, with out-of-range taps or antennas
 * contributing zero. Entry index is tau * 2M_R + kappa.
 */
Eigen::VectorXcd autocorr_features(const DelayTensor& t, int m);

struct FeatureConfig {
  std::vector<int> used;
  int taps = 16;
  DelayMethod method = DelayMethod::Pinv;
};

/// Length of one per-TX real feature block: 2 * 2C * 2M_R.
int per_tx_feature_length(int taps, int rx);

/**
 * Full feature: autocorrelations of all TX antennas (m outer, tau, kappa
 * inner), real parts then imaginary parts, scaled to unit l2 norm.
 * Throws ZeroFeature for all-zero CSI.
 */
Eigen::VectorXd feature_vector(const CsiTensor& h, const FeatureConfig& cfg);

/// One unit-norm [Re; Im] block per TX antenna.
std::vector<Eigen::VectorXd> per_tx_feature_vectors(const CsiTensor& h, const FeatureConfig& cfg);

}  // namespace csiloc
