#pragma once

#include "resil/error.hpp"
#include "resil/rng.hpp"
#include "resil/reliability.hpp"
#include "resil/network.hpp"
#include "resil/scenario.hpp"
#include "resil/attack.hpp"
#include "resil/perception.hpp"
#include "resil/decision.hpp"
#include "resil/transport.hpp"
#include "resil/actuation.hpp"
#include "resil/engine.hpp"
#include "resil/metrics.hpp"
