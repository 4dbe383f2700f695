#pragma once

#include "pointmpm/numerics/autodiff.hpp"
#include "pointmpm/numerics/expression.hpp"
#include "pointmpm/numerics/ops.hpp"
#include "pointmpm/numerics/tensor.hpp"
