// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace softcap {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace softcap
