#pragma once

#include "svi/builtin_systems.hpp"
#include "svi/diagnostics.hpp"
#include "svi/galerkin.hpp"
#include "svi/harness.hpp"
#include "svi/noise.hpp"
#include "svi/phase.hpp"
#include "svi/quadrature.hpp"
#include "svi/reference.hpp"
#include "svi/schemes.hpp"
#include "svi/sprk.hpp"
#include "svi/system.hpp"
