#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace augdiff {

Tensor finite_difference(const ScalarFn& fn, const Tensor& x, double h) {
  require(h > 0.0, ErrorCode::InvalidArgument, "finite_difference requires h > 0");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = x[i];
    probe[i] = orig + h;
    const double up = fn(probe);
    probe[i] = orig - h;
    const double down = fn(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(const Tensor& analytic, const Tensor& reference, double floor) {
  require(analytic.shape() == reference.shape(), ErrorCode::ShapeMismatch,
          "relative_error: " + to_string(analytic.shape()) + " vs " + to_string(reference.shape()));
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.numel(); ++i) diff = std::max(diff, std::abs(analytic[i] - reference[i]));
  return diff / std::max(max_abs(reference), floor);
}

}  // namespace augdiff
