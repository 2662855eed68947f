#pragma once

#include "core.hpp"
#include "quadrature.hpp"
#include "phase.hpp"
#include "interpolation.hpp"
#include "collision.hpp"
#include "linearized.hpp"
#include "evolve.hpp"
#include "analysis.hpp"
#include "io.hpp"
#include "config.hpp"
