// Copyright (C) 2026 invlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "invlab/config.hpp"
#include "invlab/emit.hpp"
#include "invlab/engine.hpp"
#include "invlab/grid.hpp"
#include "invlab/harness.hpp"
#include "invlab/metrics.hpp"
#include "invlab/mixture.hpp"
#include "invlab/oracle.hpp"
#include "invlab/predictor.hpp"
#include "invlab/rng.hpp"
#include "invlab/schedule.hpp"
#include "invlab/transform.hpp"
