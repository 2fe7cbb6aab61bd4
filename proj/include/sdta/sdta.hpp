#pragma once

#include "sdta/error.hpp"
#include "sdta/network.hpp"
#include "sdta/scenario.hpp"
#include "sdta/events.hpp"
#include "sdta/policy.hpp"
#include "sdta/choice.hpp"
#include "sdta/ltm.hpp"
#include "sdta/loaders.hpp"
#include "sdta/equilibrium.hpp"
#include "sdta/io.hpp"
