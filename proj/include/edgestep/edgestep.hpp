#pragma once

#include "config.hpp"
#include "edge_step_fn.hpp"
#include "errors.hpp"
#include "format.hpp"
#include "histogram.hpp"
#include "process.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "stats.hpp"
#include "theory.hpp"
