#pragma once

#include "maat/attention.hpp"
#include "maat/checkpoint.hpp"
#include "maat/config.hpp"
#include "maat/data.hpp"
#include "maat/error.hpp"
#include "maat/grad_check.hpp"
#include "maat/metrics.hpp"
#include "maat/model.hpp"
#include "maat/ops.hpp"
#include "maat/params.hpp"
#include "maat/random.hpp"
#include "maat/scoring.hpp"
#include "maat/ssm.hpp"
#include "maat/synth.hpp"
#include "maat/tape.hpp"
#include "maat/tensor.hpp"
#include "maat/training.hpp"
