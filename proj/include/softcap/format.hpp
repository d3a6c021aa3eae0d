// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace softcap {

/// Shortest round-trip decimal form; integral values get a trailing ".0". Infinity prints as INF.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "INF" : "-INF";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

/// Like format_double, rounded to `significant` digits first.
inline std::string format_double(double v, int significant) {
  if (!std::isfinite(v)) return format_double(v);
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, significant);
  double rounded = 0.0;
  std::from_chars(buf, res.ptr, rounded);
  return format_double(rounded);
}

}  // namespace softcap
