#include "core/transform_ops.hpp"

#include <memory>

#include "core/error.hpp"

namespace augdiff::transforms {

namespace {

struct BatchLayout {
  std::size_t batch;
  std::size_t plane;  // elements per image
  Shape image_shape;  // shape of one image (trailing dims)
};

BatchLayout layout_of(const Tensor& images, const Tensor& params) {
  require(images.rank() >= 3, ErrorCode::ShapeMismatch, "transform batch must be [B,...,s,s], got " + to_string(images.shape()));
  require(params.rank() == 2 && params.dim(0) == images.dim(0) && params.dim(1) == kParamCount, ErrorCode::ShapeMismatch,
          "transform params must be [" + std::to_string(images.dim(0)) + ",7], got " + to_string(params.shape()));
  Shape image_shape(images.shape().begin() + 1, images.shape().end());
  return {images.dim(0), numel_of(image_shape), std::move(image_shape)};
}

Tensor slice(const Tensor& t, const BatchLayout& l, std::size_t b) {
  return Tensor(l.image_shape, std::vector<double>(t.ptr() + b * l.plane, t.ptr() + (b + 1) * l.plane));
}

TransformParams row_params(const Tensor& params, std::size_t b) {
  return TransformParams::from_span(params.data().subspan(b * kParamCount, kParamCount));
}

}  // namespace

Var apply_op(Kind kind, Var images, Var params, const NoiseRealization& eps) {
  const auto layout = layout_of(images.value(), params.value());
  const bool noisy = kind == Kind::Noise;
  if (noisy) {
    require(eps.epsilon.shape() == images.shape(), ErrorCode::ShapeMismatch,
            "noise realization " + to_string(eps.epsilon.shape()) + " does not match batch " + to_string(images.shape()));
  }
  auto noise = std::make_shared<Tensor>(noisy ? eps.epsilon : Tensor());

  Tensor out(images.shape());
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const auto x = slice(images.value(), layout, b);
    const auto p = row_params(params.value(), b);
    const auto e = noisy ? NoiseRealization{slice(*noise, layout, b)} : NoiseRealization::zeros(layout.image_shape);
    const auto y = apply(kind, x, p, e);
    std::copy(y.ptr(), y.ptr() + layout.plane, out.ptr() + b * layout.plane);
  }

  return images.graph().record(std::move(out), {images, params}, [kind, layout, noise](const BackwardArgs& a) {
    const auto& imgs = *a.inputs[0];
    const auto& prm = *a.inputs[1];
    Tensor d_images = a.needs[0] ? Tensor(imgs.shape()) : Tensor();
    Tensor d_params = a.needs[1] ? Tensor(prm.shape()) : Tensor();
    for (std::size_t b = 0; b < layout.batch; ++b) {
      const auto g = slice(a.grad, layout, b);
      const auto p = row_params(prm, b);
      if (a.needs[0]) {
        const auto gx = apply_adjoint(kind, g, p);
        std::copy(gx.ptr(), gx.ptr() + layout.plane, d_images.ptr() + b * layout.plane);
      }
      if (a.needs[1]) {
        const auto x = slice(imgs, layout, b);
        const auto e = kind == Kind::Noise ? NoiseRealization{slice(*noise, layout, b)}
                                           : NoiseRealization::zeros(layout.image_shape);
        const auto derivs = param_derivatives(kind, x, p, e);
        const auto cols = params_of(kind);
        for (std::size_t k = 0; k < cols.size(); ++k) {
          double acc = 0.0;
          for (std::size_t i = 0; i < layout.plane; ++i) acc += g[i] * derivs[k][i];
          d_params[b * kParamCount + cols[k]] = acc;
        }
      }
    }
    if (a.needs[0]) a.input_grads[0] = std::move(d_images);
    if (a.needs[1]) a.input_grads[1] = std::move(d_params);
  });
}

Var compose_op(Var images, Var params, const CompositionOrder& order, const NoiseRealization& eps) {
  Var cur = images;
  for (auto kind : order.kinds()) cur = apply_op(kind, cur, params, eps);
  return cur;
}

}  // namespace augdiff::transforms
