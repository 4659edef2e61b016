#pragma once

// Matrix-free 2D tomographic reconstruction: row-action and Krylov solvers,
// proximal data terms, sparsifying regularizers and a linearized ADMM loop
// that combines them.

#include "trex/experiment.hpp"
#include "trex/io.hpp"
#include "trex/ladmm.hpp"
#include "trex/noise.hpp"
#include "trex/phantom.hpp"
#include "trex/projector.hpp"
#include "trex/prox_data.hpp"
#include "trex/regularizers.hpp"
#include "trex/solvers.hpp"
#include "trex/types.hpp"
