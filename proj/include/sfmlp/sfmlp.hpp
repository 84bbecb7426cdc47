#pragma once

// Sparse functional MLP: FPCA-based score extraction for sparse irregular
// time series and a functional-neuron network on top of the scores.

#include "sfmlp/curve.hpp"
#include "sfmlp/dataset_io.hpp"
#include "sfmlp/eval.hpp"
#include "sfmlp/fpca.hpp"
#include "sfmlp/grid.hpp"
#include "sfmlp/interp.hpp"
#include "sfmlp/mfpca.hpp"
#include "sfmlp/model_io.hpp"
#include "sfmlp/network.hpp"
#include "sfmlp/pipeline.hpp"
#include "sfmlp/rng.hpp"
#include "sfmlp/simgen.hpp"
#include "sfmlp/smoothing.hpp"
#include "sfmlp/version.hpp"
