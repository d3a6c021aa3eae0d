// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <span>
#include <vector>

#include "softcap/chain.hpp"
#include "softcap/error.hpp"

namespace softcap::detail {

using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Factor = Eigen::SimplicialLDLT<SparseMat>;

/// mu-weighted operator on `domain`:
///   M(x,x) = mu(x) (w(x) + extra(x)),  M(x,y) = -c(x,y) for x != y in domain.
/// w(x) counts every jump, including jumps leaving the domain (Dirichlet-zero outside).
/// `extra` is indexed by position inside `domain`.
inline SparseMat weighted_operator(const ReversibleChain& chain, const Subset& domain, std::span<const double> extra) {
  const int n = static_cast<int>(domain.size());
  std::vector<Triplet> t;
  t.reserve(domain.size() * 5);
  for (int k = 0; k < n; ++k) {
    int x = domain[k];
    t.emplace_back(k, k, chain.mu(x) * (chain.exit_rate(x) + extra[k]));
    for (const Edge& e : chain.out(x))
      if (domain.contains(e.to)) t.emplace_back(k, domain.local(e.to), -chain.conductance(x, e.to));
  }
  SparseMat m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

inline void factorize(Factor& f, const SparseMat& m, const char* what) {
  f.compute(m);
  if (f.info() != Eigen::Success) fail(ErrorCode::SingularSystem, std::string("factorization failed: ") + what);
  // LDLT of a singular PSD matrix can "succeed" with a zero pivot.
  const auto& d = f.vectorD();
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (!(d[i] > 0.0)) fail(ErrorCode::SingularSystem, std::string("non-positive pivot: ") + what);
}

inline Eigen::VectorXd to_eigen(std::span<const double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace softcap::detail
