#pragma once

#include "cfsim/types.hpp"
#include "cfsim/rng.hpp"
#include "cfsim/config.hpp"
#include "cfsim/topology.hpp"
#include "cfsim/channel.hpp"
#include "cfsim/cluster.hpp"
#include "cfsim/dmrs.hpp"
#include "cfsim/srs_hopping.hpp"
#include "cfsim/rpca.hpp"
#include "cfsim/subspace_emulator.hpp"
#include "cfsim/receivers.hpp"
#include "cfsim/duality_power.hpp"
#include "cfsim/evaluation.hpp"
#include "cfsim/runner.hpp"
