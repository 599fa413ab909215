#pragma once

#include "core/autodiff.hpp"

namespace augdiff {

// Neural-network primitives. Every op checks shapes, records a graph node and
// defines gradients for each of its inputs.

/// Cross-correlation of input [B,C,H,W] with kernel [C',C,k,k] plus bias [C'].
/// Zero padding; output extent (H + 2*pad - k) / stride + 1, rounded down.
/// Any k works; the networks only use odd ones.
Var conv2d(Var input, Var kernel, Var bias, std::size_t stride = 1, std::size_t pad = 0);

/// input [B,N] -> input * weights^T + bias, weights [M,N], bias [M].
Var dense(Var input, Var weights, Var bias);

Var relu(Var x);
Var sigmoid(Var x);

/// 2x2 max pooling with stride 2 on [B,C,H,W]; H and W must be even.
/// Ties route the gradient to the first maximal element in row-major order.
Var max_pool2(Var x);

/// [B,C,H,W] -> [B,C] spatial mean.
Var global_avg_pool(Var x);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// Sum of all elements, shape [1].
Var sum(Var x);

/// Logistic function, evaluated without overflow for large |t|.
double stable_sigmoid(double t);

}  // namespace augdiff
