#pragma once

#include "qkdsim/core/error.hpp"
#include "qkdsim/core/random.hpp"
#include "qkdsim/core/time.hpp"
#include "qkdsim/core/vec.hpp"
#include "qkdsim/orbit/passes.hpp"
#include "qkdsim/orbit/sgp4.hpp"
#include "qkdsim/orbit/tle.hpp"
#include "qkdsim/orbit/topocentric.hpp"
#include "qkdsim/source/photon_source.hpp"
#include "qkdsim/channel/link.hpp"
#include "qkdsim/pat/pat.hpp"
#include "qkdsim/pcs/polarization.hpp"
#include "qkdsim/receiver/receiver.hpp"
#include "qkdsim/protocol/bbm92.hpp"
#include "qkdsim/sim/scenario.hpp"
#include "qkdsim/sim/simulate.hpp"
