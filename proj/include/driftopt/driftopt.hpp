#pragma once

#include "driftopt/core.hpp"
#include "driftopt/diagnostics.hpp"
#include "driftopt/dual_analysis.hpp"
#include "driftopt/oracles.hpp"
#include "driftopt/problems.hpp"
#include "driftopt/reference_oracle.hpp"
#include "driftopt/solver.hpp"
#include "driftopt/trace_io.hpp"
