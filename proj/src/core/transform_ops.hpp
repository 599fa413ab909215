#pragma once

#include "core/autodiff.hpp"
#include "core/transforms.hpp"

namespace augdiff::transforms {

// Graph-registered versions of the transforms for image batches.
// `images` is [B, ..., s, s] with one s x s plane per image, `params` is
// [B, 7] with one parameter vector per image, and the noise realization has
// the shape of `images`. Gradients flow to both images and params, so
// d_w(T(X, M_w(X))) = dT/dparams . d_w M is obtained by backward().

Var apply_op(Kind kind, Var images, Var params, const NoiseRealization& eps);
Var compose_op(Var images, Var params, const CompositionOrder& order, const NoiseRealization& eps);

}  // namespace augdiff::transforms
