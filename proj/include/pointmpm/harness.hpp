#pragma once

#include "pointmpm/harness/ablation.hpp"
#include "pointmpm/harness/checkpoint.hpp"
#include "pointmpm/harness/config.hpp"
#include "pointmpm/harness/dataset.hpp"
#include "pointmpm/harness/gradcheck.hpp"
#include "pointmpm/harness/metrics.hpp"
#include "pointmpm/harness/model.hpp"
#include "pointmpm/harness/optimizer.hpp"
#include "pointmpm/harness/training.hpp"
