// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <limits>

#include "softcap/chain.hpp"
#include "softcap/detail/linalg.hpp"

namespace softcap {

struct SpectralOptions {
  /// Dense eigensolve up to this many states, shift-invert Lanczos above.
  std::size_t dense_limit = 4096;
  /// Relative eigen-residual target of the iterative path, measured against ||A||_inf.
  double tolerance = 1e-11;
  int krylov_dim = 60;
  int max_restarts = 60;
};

namespace detail {

/// Symmetrized generator sqrt(mu) (-L) / sqrt(mu); by detailed balance the
/// off-diagonal entries are -sqrt(w(x,y) w(y,x)), which needs no division by mu.
inline Eigen::MatrixXd symmetric_generator_dense(const ReversibleChain& chain) {
  const auto n = static_cast<Eigen::Index>(chain.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index x = 0; x < n; ++x) {
    a(x, x) = chain.exit_rate(static_cast<int>(x));
    for (const Edge& e : chain.out(static_cast<int>(x)))
      a(x, e.to) = -std::sqrt(e.rate * chain.rate(e.to, static_cast<int>(x)));
  }
  return a;
}

inline SparseMat symmetric_generator_sparse(const ReversibleChain& chain) {
  const auto n = static_cast<int>(chain.size());
  std::vector<Triplet> t;
  t.reserve(chain.edge_count() + chain.size());
  for (int x = 0; x < n; ++x) {
    t.emplace_back(x, x, chain.exit_rate(x));
    for (const Edge& e : chain.out(x)) t.emplace_back(x, e.to, -std::sqrt(e.rate * chain.rate(e.to, x)));
  }
  SparseMat a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

/// Smallest eigenvalue of A on the complement of the unit vector v0 (A v0 = 0),
/// by Lanczos on (A + tau)^{-1} with full reorthogonalization and restarts.
inline double deflated_smallest(const SparseMat& a, const Eigen::VectorXd& v0, const SpectralOptions& opt) {
  const Eigen::Index n = a.rows();
  double norm_a = 0.0;
  for (Eigen::Index k = 0; k < a.outerSize(); ++k) {
    double s = 0.0;
    for (SparseMat::InnerIterator it(a, k); it; ++it) s += std::abs(it.value());
    norm_a = std::max(norm_a, s);
  }
  auto project = [&](Eigen::VectorXd& v) { v -= v0.dot(v) * v0; };

  Eigen::VectorXd start(n);
  for (Eigen::Index i = 0; i < n; ++i) start[i] = 1.0 + 0.5 * std::sin(1.0 + 0.7 * static_cast<double>(i));
  project(start);
  start.normalize();

  double tau = 1e-3 * norm_a;
  double best = std::numeric_limits<double>::quiet_NaN();
  const int m = static_cast<int>(std::min<Eigen::Index>(opt.krylov_dim, n - 1));
  SparseMat id(n, n);
  id.setIdentity();

  for (int restart = 0; restart < opt.max_restarts; ++restart) {
    Factor solver;
    factorize(solver, SparseMat(a + tau * id), "shift-invert operator");
    Eigen::MatrixXd v(n, m + 1);
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(m), beta = Eigen::VectorXd::Zero(m);
    v.col(0) = start;
    int k = 0;
    for (; k < m; ++k) {
      Eigen::VectorXd w = solver.solve(Eigen::VectorXd(v.col(k)));
      project(w);
      alpha[k] = v.col(k).dot(w);
      for (int pass = 0; pass < 2; ++pass) {
        project(w);
        for (int j = 0; j <= k; ++j) w -= v.col(j).dot(w) * v.col(j);
      }
      beta[k] = w.norm();
      if (beta[k] < 1e-13 * std::abs(alpha[k]) || k + 1 == m) {
        ++k;
        break;
      }
      v.col(k + 1) = w / beta[k];
    }
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
    for (int j = 0; j < k; ++j) {
      t(j, j) = alpha[j];
      if (j + 1 < k) t(j, j + 1) = t(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    Eigen::VectorXd y = es.eigenvectors().col(k - 1);
    Eigen::VectorXd ritz = v.leftCols(k) * y;
    project(ritz);
    ritz.normalize();
    Eigen::VectorXd ar = a * ritz;
    double rq = ritz.dot(ar);
    double res = (ar - rq * ritz).norm();
    best = rq;
    if (res <= opt.tolerance * norm_a) return rq;
    start = ritz;
    tau = std::max(rq, 1e-14 * norm_a);
  }
  fail(ErrorCode::ConvergenceFailure, "shift-invert Lanczos did not converge");
  return best;
}

}  // namespace detail

/// Smallest nonzero eigenvalue of -L in l2(mu); +inf for a one-state chain.
inline double spectral_gap(const ReversibleChain& chain, const SpectralOptions& opt = {}) {
  const std::size_t n = chain.size();
  if (n == 1) return std::numeric_limits<double>::infinity();
  if (n <= opt.dense_limit) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::symmetric_generator_dense(chain), Eigen::EigenvaluesOnly);
    return es.eigenvalues()[1];
  }
  Eigen::VectorXd v0(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v0[static_cast<Eigen::Index>(i)] = std::sqrt(chain.mu(static_cast<int>(i)));
  v0.normalize();
  return detail::deflated_smallest(detail::symmetric_generator_sparse(chain), v0, opt);
}

}  // namespace softcap
