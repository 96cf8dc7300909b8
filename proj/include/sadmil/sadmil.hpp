#pragma once

#include "sadmil/baggraph.hpp"
#include "sadmil/config.hpp"
#include "sadmil/dataio.hpp"
#include "sadmil/error.hpp"
#include "sadmil/gradcheck.hpp"
#include "sadmil/losses.hpp"
#include "sadmil/metrics.hpp"
#include "sadmil/model.hpp"
#include "sadmil/serialize.hpp"
#include "sadmil/sweep.hpp"
#include "sadmil/tape.hpp"
#include "sadmil/tensor.hpp"
#include "sadmil/training.hpp"
