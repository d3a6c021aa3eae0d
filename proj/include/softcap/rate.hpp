// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "softcap/error.hpp"

namespace softcap {

/// A killing rate that is either a finite non-negative number or the symbolic
/// value "infinite" (instantaneous killing). Infinity is never encoded as a
/// floating-point inf; callers branch on is_infinite().
class KillRate {
 public:
  constexpr KillRate() = default;
  KillRate(double value) : value_(value) {  // NOLINT: implicit from double on purpose
    if (!(value >= 0.0) || !std::isfinite(value))
      detail::fail(ErrorCode::InvalidArgument, "kill rate must be finite and >= 0 (use KillRate::infinite())");
  }

  static constexpr KillRate infinite() {
    KillRate r;
    r.infinite_ = true;
    return r;
  }

  constexpr bool is_infinite() const { return infinite_; }
  constexpr bool is_zero() const { return !infinite_ && value_ == 0.0; }
  constexpr bool is_positive() const { return infinite_ || value_ > 0.0; }

  double value() const {
    if (infinite_) detail::fail(ErrorCode::InvalidArgument, "finite value requested from an infinite kill rate");
    return value_;
  }

  friend constexpr bool operator==(const KillRate& a, const KillRate& b) {
    return a.infinite_ == b.infinite_ && (a.infinite_ || a.value_ == b.value_);
  }

 private:
  double value_ = 0.0;
  bool infinite_ = false;
};

}  // namespace softcap
