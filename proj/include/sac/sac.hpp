#pragma once

#include "sac/baselines.hpp"
#include "sac/conformal.hpp"
#include "sac/estimator.hpp"
#include "sac/kernel.hpp"
#include "sac/quantum_core.hpp"
#include "sac/shadows.hpp"
