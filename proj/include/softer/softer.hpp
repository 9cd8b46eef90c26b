#pragma once

#include "softer/calibration.hpp"
#include "softer/config.hpp"
#include "softer/data.hpp"
#include "softer/diagnostics.hpp"
#include "softer/error.hpp"
#include "softer/io.hpp"
#include "softer/layout.hpp"
#include "softer/model.hpp"
#include "softer/random.hpp"
#include "softer/sampler.hpp"
#include "softer/simulation.hpp"
#include "softer/state.hpp"
#include "softer/symmetric.hpp"
#include "softer/tensor.hpp"
