#pragma once

#include "hrl/agents.hpp"
#include "hrl/approx.hpp"
#include "hrl/discovery.hpp"
#include "hrl/env.hpp"
#include "hrl/grid.hpp"
#include "hrl/memory.hpp"
#include "hrl/rng.hpp"
#include "hrl/train_config.hpp"
#include "hrl/trainer.hpp"
#include "hrl/version.hpp"
