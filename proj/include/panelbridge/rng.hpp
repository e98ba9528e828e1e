#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "panelbridge/numerics.hpp"

namespace panelbridge::rng {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 output function.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Order-sensitive key derivation; used for (seed, unit, tag, ...) substreams.
inline std::uint64_t derive_key(std::uint64_t key) { return mix64(key + kGolden); }
template <typename... Rest>
inline std::uint64_t derive_key(std::uint64_t key, std::uint64_t part, Rest... rest) {
  return derive_key(mix64(key ^ (part + kGolden)), rest...);
}

// Counter-based stream: the n-th output is mix64(key + (n+1) * golden).
// Streams with distinct keys are independent for practical purposes, so a
// substream per (seed, unit, variable) lets N grow without disturbing the
// draws of earlier units.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix64(state_);
  }

  // Uniform on the open interval (0, 1).
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal by inverse-CDF transform; keeps substreams one-draw-per-call.
  double next_normal() { return numerics::normal_quantile(next_uniform()); }

  Eigen::VectorXd next_normal_vector(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = next_normal();
    return z;
  }

 private:
  std::uint64_t state_;
};

// Symmetric PSD square root for sampling from N(mean, cov) when cov may be
// rank deficient (e.g. zero innovation covariance).
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::EigenFailure, "psd_sqrt");
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace panelbridge::rng
