#pragma once

// Umbrella header for the RGI library.

#include "rgi/checkpoint.hpp"
#include "rgi/config.hpp"
#include "rgi/data.hpp"
#include "rgi/encoder.hpp"
#include "rgi/error.hpp"
#include "rgi/eval.hpp"
#include "rgi/graph.hpp"
#include "rgi/loss.hpp"
#include "rgi/optim.hpp"
#include "rgi/selfcheck.hpp"
#include "rgi/shift.hpp"
#include "rgi/tape.hpp"
#include "rgi/tensor.hpp"
#include "rgi/trainer.hpp"
