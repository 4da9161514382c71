#pragma once

#include "stconfound/diagnostics.hpp"
#include "stconfound/error.hpp"
#include "stconfound/io.hpp"
#include "stconfound/model.hpp"
#include "stconfound/pql.hpp"
#include "stconfound/projections.hpp"
#include "stconfound/rng.hpp"
#include "stconfound/simulate.hpp"
#include "stconfound/structures.hpp"
#include "stconfound/version.hpp"
#include "stconfound/workflow.hpp"
