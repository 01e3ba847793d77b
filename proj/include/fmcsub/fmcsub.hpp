// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

// Umbrella header.
#ifndef FMCSUB_FMCSUB_HPP
#define FMCSUB_FMCSUB_HPP

#include "fmcsub/core.hpp"
#include "fmcsub/config.hpp"
#include "fmcsub/binio.hpp"
#include "fmcsub/forward_model.hpp"
#include "fmcsub/scene_gen.hpp"
#include "fmcsub/subsampling.hpp"
#include "fmcsub/recovery.hpp"
#include "fmcsub/training.hpp"
#include "fmcsub/crb_baseline.hpp"
#include "fmcsub/harness.hpp"
#include "fmcsub/cli.hpp"

#endif  // FMCSUB_FMCSUB_HPP
