// Copyright 2026 The softcap Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "softcap/bounds.hpp"
#include "softcap/capacity.hpp"
#include "softcap/chain.hpp"
#include "softcap/error.hpp"
#include "softcap/format.hpp"
#include "softcap/io.hpp"
#include "softcap/killed.hpp"
#include "softcap/models.hpp"
#include "softcap/rate.hpp"
#include "softcap/sim.hpp"
#include "softcap/spectral.hpp"
#include "softcap/survival.hpp"
#include "softcap/version.hpp"
