#pragma once

#include "relagg/errors.hpp"
#include "relagg/dataset.hpp"
#include "relagg/metrics.hpp"
#include "relagg/optim.hpp"
#include "relagg/count_aggregators.hpp"
#include "relagg/neighborhood.hpp"
#include "relagg/rlr_dropout.hpp"
#include "relagg/factorization.hpp"
#include "relagg/harness.hpp"
