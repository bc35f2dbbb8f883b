// SPDX-License-Identifier: MIT
//
// Umbrella header pulling in the whole library.
#pragma once

#include "flare/bo.hpp"
#include "flare/error.hpp"
#include "flare/filters.hpp"
#include "flare/gp.hpp"
#include "flare/harness.hpp"
#include "flare/image.hpp"
#include "flare/lbfgsb.hpp"
#include "flare/metrics.hpp"
#include "flare/niqe.hpp"
#include "flare/parallel.hpp"
#include "flare/params.hpp"
#include "flare/pipeline.hpp"
#include "flare/png_io.hpp"
#include "flare/sobol.hpp"
#include "flare/synth.hpp"
#include "flare/toml_lite.hpp"
#include "flare/version.hpp"
