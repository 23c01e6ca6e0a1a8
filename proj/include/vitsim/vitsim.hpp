#pragma once

// Umbrella header: block-sparse formats and kernels, static weight pruning,
// dynamic token pruning, the reference encoder stack, the accelerator
// simulator, the analytical models and the file formats.

#include "vitsim/block_matrix.hpp"
#include "vitsim/model.hpp"
#include "vitsim/model_io.hpp"
#include "vitsim/perf_model.hpp"
#include "vitsim/reference.hpp"
#include "vitsim/reports.hpp"
#include "vitsim/simulator.hpp"
#include "vitsim/synthetic.hpp"
#include "vitsim/tensor_io.hpp"
#include "vitsim/token_pruning.hpp"
#include "vitsim/util.hpp"
#include "vitsim/weight_pruning.hpp"
