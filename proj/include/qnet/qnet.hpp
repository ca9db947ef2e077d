#pragma once

#include "qnet/error.hpp"
#include "qnet/signals.hpp"
#include "qnet/state_space.hpp"
#include "qnet/gain_engine.hpp"
#include "qnet/components.hpp"
#include "qnet/moment_sim.hpp"
#include "qnet/network.hpp"
#include "qnet/validation.hpp"
#include "qnet/robust.hpp"
#include "qnet/document.hpp"
