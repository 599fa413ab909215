#pragma once

#include <functional>

#include "core/tensor.hpp"

namespace augdiff {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central differences (fn(x + h e_i) - fn(x - h e_i)) / 2h for every i.
Tensor finite_difference(const ScalarFn& fn, const Tensor& x, double h);

/// ||analytic - reference||_inf / max(||reference||_inf, floor).
double relative_error(const Tensor& analytic, const Tensor& reference, double floor = 1e-8);

}  // namespace augdiff
