#include "csiloc/csi_features.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <tuple>

#include "csiloc/error.hpp"

namespace csiloc {

DelayTransform::DelayTransform(int subcarriers, std::vector<int> used, int taps)
    : subcarriers_(subcarriers), used_(std::move(used)), taps_(taps) {
  require(taps_ >= 1 && taps_ <= static_cast<int>(used_.size()), ErrorCode::InvalidArgument,
          "delay transform needs 1 <= C <= |used subcarriers|");
  const auto rows = static_cast<Eigen::Index>(used_.size());
  dft_.resize(rows, taps_);
  for (Eigen::Index i = 0; i < rows; ++i) {
    require(used_[i] >= 0 && used_[i] < subcarriers_, ErrorCode::InvalidArgument,
            "used subcarrier out of range");
    for (int k = 0; k < taps_; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(used_[i]) * k / subcarriers_;
      dft_(i, k) = std::polar(1.0, angle);
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(dft_);
  require(qr.rank() == taps_, ErrorCode::NumericFailure, "DFT submatrix is rank deficient");
  pinv_ = dft_.completeOrthogonalDecomposition().pseudoInverse();
}

DelayTensor DelayTransform::apply(const CsiTensor& h, DelayMethod method) const {
  require(h.subcarriers() == subcarriers_, ErrorCode::DimensionMismatch,
          "CSI subcarrier count does not match the delay transform");
  DelayTensor out(taps_, h.rx(), h.tx());
  const auto rows = static_cast<Eigen::Index>(used_.size());
  Eigen::VectorXcd slice(rows);
  for (int n = 0; n < h.rx(); ++n) {
    for (int m = 0; m < h.tx(); ++m) {
      for (Eigen::Index i = 0; i < rows; ++i) slice[i] = h.at(used_[i], n, m);
      Eigen::VectorXcd taps;
      if (method == DelayMethod::Pinv) {
        taps = pinv_ * slice;
      } else {
        // First C outputs of the W-point inverse DFT of the zero-filled spectrum.
        taps = dft_.adjoint() * slice / static_cast<double>(subcarriers_);
      }
      for (int k = 0; k < taps_; ++k) out.at(k, n, m) = taps[k];
    }
  }
  return out;
}

const DelayTransform& cached_delay_transform(int subcarriers, const std::vector<int>& used,
                                             int taps) {
  using Key = std::tuple<int, std::vector<int>, int>;
  static std::mutex mutex;
  static std::map<Key, std::unique_ptr<DelayTransform>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[Key{subcarriers, used, taps}];
  if (!slot) slot = std::make_unique<DelayTransform>(subcarriers, used, taps);
  return *slot;
}

DelayTensor delay_transform(const CsiMeasurement& h, const std::vector<int>& used, int taps,
                            DelayMethod method) {
  return cached_delay_transform(h.h.subcarriers(), used, taps).apply(h.h, method);
}

Eigen::VectorXcd autocorr_features(const DelayTensor& t, int m) {
  require(m >= 0 && m < t.tx(), ErrorCode::InvalidArgument, "TX index out of range");
  const int taps = t.taps();
  const int rx = t.rx();
  const int kappa_count = 2 * rx;
  Eigen::VectorXcd r = Eigen::VectorXcd::Zero(2 * taps * kappa_count);
  // Lags tau >= C or kappa >= M_R only ever pair with padding, so they stay zero.
  for (int tau = 0; tau < taps; ++tau) {
    for (int kappa = 0; kappa < rx; ++kappa) {
      Complex acc = 0.0;
      for (int n = 0; n + kappa < rx; ++n) {
        for (int k = 0; k + tau < taps; ++k) {
          acc += t.at(k, n, m) * std::conj(t.at(k + tau, n + kappa, m));
        }
      }
      r[tau * kappa_count + kappa] = acc;
    }
  }
  return r;
}

int per_tx_feature_length(int taps, int rx) { return 2 * (2 * taps) * (2 * rx); }

namespace {

Eigen::VectorXd stack_and_normalize(const Eigen::VectorXcd& r) {
  Eigen::VectorXd f(2 * r.size());
  f.head(r.size()) = r.real();
  f.tail(r.size()) = r.imag();
  const double norm = f.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    fail(ErrorCode::ZeroFeature, "feature vector has zero or non-finite norm");
  }
  return f / norm;
}

}  // namespace

Eigen::VectorXd feature_vector(const CsiTensor& h, const FeatureConfig& cfg) {
  const DelayTensor t =
      cached_delay_transform(h.subcarriers(), cfg.used, cfg.taps).apply(h, cfg.method);
  const Eigen::Index block = 2 * t.taps() * 2 * t.rx();
  Eigen::VectorXcd r(block * t.tx());
  for (int m = 0; m < t.tx(); ++m) r.segment(m * block, block) = autocorr_features(t, m);
  return stack_and_normalize(r);
}

std::vector<Eigen::VectorXd> per_tx_feature_vectors(const CsiTensor& h, const FeatureConfig& cfg) {
  const DelayTensor t =
      cached_delay_transform(h.subcarriers(), cfg.used, cfg.taps).apply(h, cfg.method);
  std::vector<Eigen::VectorXd> out;
  out.reserve(t.tx());
  for (int m = 0; m < t.tx(); ++m) out.push_back(stack_and_normalize(autocorr_features(t, m)));
  return out;
}

}  // namespace csiloc
