#pragma once

// Umbrella header.

#include "genusflow/error.hpp"
#include "genusflow/expr.hpp"
#include "genusflow/field.hpp"
#include "genusflow/geometry.hpp"
#include "genusflow/integrate.hpp"
#include "genusflow/poincare.hpp"
#include "genusflow/presets.hpp"
#include "genusflow/report.hpp"
#include "genusflow/scenario.hpp"
#include "genusflow/topology.hpp"
