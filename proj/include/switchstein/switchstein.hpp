#pragma once

#include "switchstein/chain.hpp"
#include "switchstein/common.hpp"
#include "switchstein/config.hpp"
#include "switchstein/convergence.hpp"
#include "switchstein/io.hpp"
#include "switchstein/model.hpp"
#include "switchstein/noise.hpp"
#include "switchstein/rng.hpp"
#include "switchstein/scheme.hpp"
