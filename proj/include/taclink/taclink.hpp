#pragma once

#include "taclink/aes128.hpp"
#include "taclink/crc16.hpp"
#include "taclink/energy.hpp"
#include "taclink/error.hpp"
#include "taclink/linkbudget.hpp"
#include "taclink/mac.hpp"
#include "taclink/phy.hpp"
#include "taclink/pipeline.hpp"
#include "taclink/rng.hpp"
#include "taclink/sim.hpp"
#include "taclink/trace.hpp"
