#pragma once

#include "crowdcast/baselines.hpp"
#include "crowdcast/checkpoint.hpp"
#include "crowdcast/density.hpp"
#include "crowdcast/error.hpp"
#include "crowdcast/io.hpp"
#include "crowdcast/metrics.hpp"
#include "crowdcast/model.hpp"
#include "crowdcast/nn/adam.hpp"
#include "crowdcast/nn/gradcheck.hpp"
#include "crowdcast/nn/kernels.hpp"
#include "crowdcast/nn/layers.hpp"
#include "crowdcast/nn/ops.hpp"
#include "crowdcast/nn/tape.hpp"
#include "crowdcast/rng.hpp"
#include "crowdcast/runtime.hpp"
#include "crowdcast/selftest.hpp"
#include "crowdcast/sim.hpp"
#include "crowdcast/tensor.hpp"
#include "crowdcast/training.hpp"
