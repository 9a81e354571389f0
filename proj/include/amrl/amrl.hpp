#pragma once

#include "amrl/amr.hpp"
#include "amrl/config.hpp"
#include "amrl/ddpg.hpp"
#include "amrl/entropy.hpp"
#include "amrl/envs.hpp"
#include "amrl/error.hpp"
#include "amrl/evolution.hpp"
#include "amrl/harness.hpp"
#include "amrl/neural.hpp"
#include "amrl/replay.hpp"
#include "amrl/rng.hpp"
