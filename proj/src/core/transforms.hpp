#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>

#include "core/rng.hpp"
#include "core/tensor.hpp"

// Differentiable image transformations parameterized by normalized scalars in
// [0,1], with analytic derivatives w.r.t. those scalars.
//
// Images are tensors whose two trailing dimensions are equal (s x s); any
// leading dimensions are treated as a stack of planes sharing the same
// parameters. Pixel coordinates are x = (column, row); reflections and
// rotations are taken about the image center ((s-1)/2, (s-1)/2).
//
// Every transform is linear (noise: affine) in the image, so each one also
// exposes the adjoint of its image map for reverse-mode chaining.
namespace augdiff::transforms {

inline constexpr double kBlurSigmaMax = 2.0;
inline constexpr double kNoiseSigmaMax = 0.1;
inline constexpr int kBlurRadius = 6;
/// Below this sigma the blur kernel is treated as an exact delta.
inline constexpr double kBlurSigmaFloor = 1e-3;

enum class Kind { Blur, Noise, Crop, Flip0, Flip1, Rotate };
inline constexpr std::size_t kKindCount = 6;

/// Column layout of a parameter vector.
enum Param : std::size_t { kBlur = 0, kNoise, kCropX, kCropY, kFlip0, kFlip1, kRotate };
inline constexpr std::size_t kParamCount = 7;

std::string_view name(Kind kind);
/// Parameter columns driven by `kind` (crop has two).
std::span<const std::size_t> params_of(Kind kind);

/// The seven normalized parameters. Construction rejects values outside [0,1].
class TransformParams {
 public:
  /// Identity setting: everything at 0 except the crop, centered at 0.5.
  TransformParams();
  explicit TransformParams(const std::array<double, kParamCount>& values);
  static TransformParams from_span(std::span<const double> values);

  double operator[](std::size_t i) const { return values_[i]; }
  const std::array<double, kParamCount>& values() const noexcept { return values_; }

  /// Copy with one component replaced (validated).
  TransformParams with(std::size_t index, double value) const;

 private:
  std::array<double, kParamCount> values_;
};

/// Application order of the six transforms, first applied first.
class CompositionOrder {
 public:
  /// G, N, Crop, Flip0, Flip1, R: i.e. T = R o Flip1 o Flip0 o Crop o N o G.
  CompositionOrder();
  explicit CompositionOrder(const std::array<Kind, kKindCount>& kinds);

  /// Parses a comma-separated list such as "G,N,Crop,Flip0,Flip1,R".
  static CompositionOrder parse(std::string_view text);
  std::string to_string() const;

  const std::array<Kind, kKindCount>& kinds() const noexcept { return kinds_; }
  bool operator==(const CompositionOrder&) const = default;

 private:
  std::array<Kind, kKindCount> kinds_;
};

/// Frozen standard-normal draw for the additive-noise transform.
struct NoiseRealization {
  Tensor epsilon;
  static NoiseRealization sample(Rng& rng, const Shape& shape);
  static NoiseRealization zeros(const Shape& shape);
};

enum class Axis { Horizontal = 0, Vertical = 1 };

Tensor flip(const Tensor& x, double lambda, Axis axis);
Tensor flip_dlambda(const Tensor& x, Axis axis);

/// Soft square window S(s/8 - ||x - c||_inf) centered at c = (lx*s, ly*s).
Tensor crop(const Tensor& x, double lambda_x, double lambda_y);
/// Derivative w.r.t. lambda_x (`which` = 0) or lambda_y (`which` = 1).
/// On ||.||_inf ties the whole derivative goes to the x coordinate.
Tensor crop_dlambda(const Tensor& x, double lambda_x, double lambda_y, int which);
double crop_mask(std::size_t size, double lambda_x, double lambda_y, std::size_t row, std::size_t col);

/// Separable Gaussian blur, sigma = lambda * kBlurSigmaMax, truncated and
/// renormalized kernel of radius kBlurRadius, edge-replicating boundary.
Tensor gaussian_blur(const Tensor& x, double lambda);
Tensor gaussian_blur_dlambda(const Tensor& x, double lambda);
/// Normalized 1-D weights for offsets -kBlurRadius..kBlurRadius.
std::array<double, 2 * kBlurRadius + 1> blur_kernel(double sigma);
std::array<double, 2 * kBlurRadius + 1> blur_kernel_dsigma(double sigma);

/// Rotation by 2*pi*lambda about the center, inverse-warped with bilinear
/// interpolation and zeros outside the grid.
Tensor rotate(const Tensor& x, double lambda);
Tensor rotate_dlambda(const Tensor& x, double lambda);
/// (cos, sin) of 2*pi*lambda, exact at multiples of a quarter turn.
std::array<double, 2> turn_cos_sin(double lambda);

Tensor add_noise(const Tensor& x, double lambda, const NoiseRealization& eps);
Tensor add_noise_dlambda(const Tensor& x, const NoiseRealization& eps);

/// Applies one transform with its parameters taken from `params`.
Tensor apply(Kind kind, const Tensor& x, const TransformParams& params, const NoiseRealization& eps);
/// Adjoint of the (linear part of the) image map of `kind`.
Tensor apply_adjoint(Kind kind, const Tensor& grad, const TransformParams& params);
/// d apply / d params[p] for each p in params_of(kind), in that order.
std::vector<Tensor> param_derivatives(Kind kind, const Tensor& x, const TransformParams& params,
                                      const NoiseRealization& eps);

Tensor compose(const Tensor& x, const TransformParams& params, const CompositionOrder& order,
               const NoiseRealization& eps);

struct ComposeJacobian {
  Tensor output;
  std::array<Tensor, kParamCount> d_params;
};

/// Composition with forward-mode derivatives w.r.t. all seven parameters.
ComposeJacobian compose_jacobian(const Tensor& x, const TransformParams& params, const CompositionOrder& order,
                                 const NoiseRealization& eps);

}  // namespace augdiff::transforms
