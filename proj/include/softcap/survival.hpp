// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "softcap/chain.hpp"
#include "softcap/error.hpp"
#include "softcap/spectral.hpp"

namespace softcap {

inline constexpr std::size_t kExactSemigroupLimit = 4096;

/// Survival probabilities P_nu(T > s) of the chain killed at per-state rates `kill`,
/// from one symmetric eigendecomposition of sqrt(mu) (kill - L) / sqrt(mu).
class KilledSemigroup {
 public:
  KilledSemigroup(const ReversibleChain& chain, std::span<const double> kill) : sqrt_mu_(chain.size()) {
    const std::size_t n = chain.size();
    if (kill.size() != n) detail::fail(ErrorCode::DimensionMismatch, "kill vector length differs from state count");
    if (n > kExactSemigroupLimit) detail::fail(ErrorCode::TooLargeForExact, "exact semigroup limited to 4096 states");
    Eigen::MatrixXd a = detail::symmetric_generator_dense(chain);
    for (std::size_t x = 0; x < n; ++x) {
      a(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(x)) += kill[x];
      sqrt_mu_[static_cast<Eigen::Index>(x)] = std::sqrt(chain.mu(static_cast<int>(x)));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    values_ = es.eigenvalues();
    vectors_ = es.eigenvectors();
    b_ = vectors_.transpose() * sqrt_mu_;
  }

  /// P_nu(T > s) for a probability vector nu over all states.
  double survival(std::span<const double> nu, double s) const {
    Eigen::VectorXd a = coefficients(nu);
    double p = 0.0;
    for (Eigen::Index k = 0; k < values_.size(); ++k) p += a[k] * b_[k] * std::exp(-s * values_[k]);
    return std::clamp(p, 0.0, 1.0);
  }

  std::vector<double> survival(std::span<const double> nu, std::span<const double> times) const {
    Eigen::VectorXd a = coefficients(nu);
    std::vector<double> out;
    out.reserve(times.size());
    for (double s : times) {
      double p = 0.0;
      for (Eigen::Index k = 0; k < values_.size(); ++k) p += a[k] * b_[k] * std::exp(-s * values_[k]);
      out.push_back(std::clamp(p, 0.0, 1.0));
    }
    return out;
  }

  /// Principal decay rate (smallest eigenvalue of kill - L).
  double decay_rate() const { return values_[0]; }

 private:
  Eigen::VectorXd coefficients(std::span<const double> nu) const {
    if (static_cast<Eigen::Index>(nu.size()) != sqrt_mu_.size())
      detail::fail(ErrorCode::DimensionMismatch, "start distribution length differs from state count");
    Eigen::VectorXd w(sqrt_mu_.size());
    for (Eigen::Index x = 0; x < w.size(); ++x) w[x] = nu[static_cast<std::size_t>(x)] / sqrt_mu_[x];
    return vectors_.transpose() * w;
  }

  Eigen::VectorXd sqrt_mu_;
  Eigen::VectorXd values_;
  Eigen::MatrixXd vectors_;
  Eigen::VectorXd b_;
};

}  // namespace softcap
