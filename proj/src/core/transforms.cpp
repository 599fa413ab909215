#include "core/transforms.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace augdiff::transforms {

namespace {

struct Planes {
  std::size_t count;
  std::size_t size;
};

Planes planes_of(const Tensor& x) {
  require(x.rank() >= 2 && x.dim(x.rank() - 1) == x.dim(x.rank() - 2), ErrorCode::ShapeMismatch,
          "transforms expect square images [..., s, s], got " + to_string(x.shape()));
  const auto s = x.dim(x.rank() - 1);
  return {x.numel() / (s * s), s};
}

void check_lambda(double lambda, const char* what) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorCode::InvalidArgument,
          std::string(what) + ": parameter must lie in [0,1], got " + std::to_string(lambda));
}

constexpr std::array<std::size_t, 1> kBlurParams{kBlur};
constexpr std::array<std::size_t, 1> kNoiseParams{kNoise};
constexpr std::array<std::size_t, 2> kCropParams{kCropX, kCropY};
constexpr std::array<std::size_t, 1> kFlip0Params{kFlip0};
constexpr std::array<std::size_t, 1> kFlip1Params{kFlip1};
constexpr std::array<std::size_t, 1> kRotateParams{kRotate};

// ---- flip ----

std::size_t mirror_index(std::size_t i, std::size_t j, std::size_t s, Axis axis) {
  return axis == Axis::Horizontal ? i * s + (s - 1 - j) : (s - 1 - i) * s + j;
}

// ---- blur ----

using Kernel = std::array<double, 2 * kBlurRadius + 1>;

enum class PassMode { Apply, Derivative, Adjoint };

std::size_t clamp_index(std::ptrdiff_t v, std::size_t s) {
  if (v < 0) return 0;
  if (v >= static_cast<std::ptrdiff_t>(s)) return s - 1;
  return static_cast<std::size_t>(v);
}

// One 1-D pass over a plane in difference form: out = in + sum_{k != 0} w_k (in[clamp(. + k)] - in).
// Constants are therefore reproduced exactly. Derivative mode drops the
// leading `in` term; Adjoint mode applies the transpose.
void blur_pass(const double* in, double* out, std::size_t s, const Kernel& w, bool along_row, PassMode mode) {
  auto idx = [&](std::size_t line, std::size_t pos) { return along_row ? line * s + pos : pos * s + line; };
  if (mode == PassMode::Adjoint) {
    double off_center = 0.0;
    for (int k = -kBlurRadius; k <= kBlurRadius; ++k) {
      if (k != 0) off_center += w[static_cast<std::size_t>(k + kBlurRadius)];
    }
    for (std::size_t line = 0; line < s; ++line) {
      for (std::size_t pos = 0; pos < s; ++pos) out[idx(line, pos)] = in[idx(line, pos)] - off_center * in[idx(line, pos)];
      for (std::size_t pos = 0; pos < s; ++pos) {
        const double g = in[idx(line, pos)];
        for (int k = -kBlurRadius; k <= kBlurRadius; ++k) {
          if (k == 0) continue;
          const auto src = clamp_index(static_cast<std::ptrdiff_t>(pos) + k, s);
          out[idx(line, src)] += w[static_cast<std::size_t>(k + kBlurRadius)] * g;
        }
      }
    }
    return;
  }
  for (std::size_t line = 0; line < s; ++line) {
    for (std::size_t pos = 0; pos < s; ++pos) {
      const double base = in[idx(line, pos)];
      double acc = 0.0;
      for (int k = -kBlurRadius; k <= kBlurRadius; ++k) {
        if (k == 0) continue;
        const auto src = clamp_index(static_cast<std::ptrdiff_t>(pos) + k, s);
        acc += w[static_cast<std::size_t>(k + kBlurRadius)] * (in[idx(line, src)] - base);
      }
      out[idx(line, pos)] = mode == PassMode::Apply ? base + acc : acc;
    }
  }
}

// ---- rotation ----

struct Warp {
  double u_col, u_row;    // sample location
  double du_col, du_row;  // d(location)/d(theta)
};

Warp warp_of(std::size_t i, std::size_t j, std::size_t s, double c, double sn) {
  const double center = (static_cast<double>(s) - 1.0) / 2.0;
  const double dx = static_cast<double>(j) - center;
  const double dy = static_cast<double>(i) - center;
  return {c * dx - sn * dy + center, sn * dx + c * dy + center, -sn * dx - c * dy, c * dx - sn * dy};
}

struct Bilinear {
  std::ptrdiff_t row, col;  // top-left corner
  double frow, fcol;        // fractional offsets
};

Bilinear bilinear_of(double u_col, double u_row) {
  const double r = std::floor(u_row);
  const double c = std::floor(u_col);
  return {static_cast<std::ptrdiff_t>(r), static_cast<std::ptrdiff_t>(c), u_row - r, u_col - c};
}

double pixel_or_zero(const double* x, std::size_t s, std::ptrdiff_t r, std::ptrdiff_t c) {
  const auto n = static_cast<std::ptrdiff_t>(s);
  if (r < 0 || c < 0 || r >= n || c >= n) return 0.0;
  return x[static_cast<std::size_t>(r) * s + static_cast<std::size_t>(c)];
}

}  // namespace

std::string_view name(Kind kind) {
  switch (kind) {
    case Kind::Blur: return "G";
    case Kind::Noise: return "N";
    case Kind::Crop: return "Crop";
    case Kind::Flip0: return "Flip0";
    case Kind::Flip1: return "Flip1";
    case Kind::Rotate: return "R";
  }
  return "?";
}

std::span<const std::size_t> params_of(Kind kind) {
  switch (kind) {
    case Kind::Blur: return kBlurParams;
    case Kind::Noise: return kNoiseParams;
    case Kind::Crop: return kCropParams;
    case Kind::Flip0: return kFlip0Params;
    case Kind::Flip1: return kFlip1Params;
    case Kind::Rotate: return kRotateParams;
  }
  return {};
}

// ---- TransformParams ----

TransformParams::TransformParams() : values_{0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0} {}

TransformParams::TransformParams(const std::array<double, kParamCount>& values) : values_(values) {
  for (std::size_t i = 0; i < kParamCount; ++i) {
    require(values_[i] >= 0.0 && values_[i] <= 1.0, ErrorCode::InvalidArgument,
            "transform parameter " + std::to_string(i) + " outside [0,1]: " + std::to_string(values_[i]));
  }
}

TransformParams TransformParams::from_span(std::span<const double> values) {
  require(values.size() == kParamCount, ErrorCode::ShapeMismatch,
          "expected 7 transform parameters, got " + std::to_string(values.size()));
  std::array<double, kParamCount> a{};
  std::copy(values.begin(), values.end(), a.begin());
  return TransformParams(a);
}

TransformParams TransformParams::with(std::size_t index, double value) const {
  auto v = values_;
  v.at(index) = value;
  return TransformParams(v);
}

// ---- CompositionOrder ----

CompositionOrder::CompositionOrder()
    : kinds_{Kind::Blur, Kind::Noise, Kind::Crop, Kind::Flip0, Kind::Flip1, Kind::Rotate} {}

CompositionOrder::CompositionOrder(const std::array<Kind, kKindCount>& kinds) : kinds_(kinds) {
  std::array<bool, kKindCount> seen{};
  for (auto k : kinds_) {
    auto i = static_cast<std::size_t>(k);
    require(i < kKindCount && !seen[i], ErrorCode::InvalidArgument,
            "composition order must list each of the six transforms exactly once");
    seen[i] = true;
  }
}

CompositionOrder CompositionOrder::parse(std::string_view text) {
  std::array<Kind, kKindCount> kinds{};
  std::size_t n = 0;
  std::string token;
  std::istringstream in{std::string(text)};
  while (std::getline(in, token, ',')) {
    token.erase(std::remove_if(token.begin(), token.end(), [](unsigned char c) { return std::isspace(c); }),
                token.end());
    bool found = false;
    for (std::size_t k = 0; k < kKindCount; ++k) {
      if (token == name(static_cast<Kind>(k))) {
        require(n < kKindCount, ErrorCode::InvalidArgument, "composition order lists more than six transforms");
        kinds[n++] = static_cast<Kind>(k);
        found = true;
      }
    }
    require(found, ErrorCode::InvalidArgument,
            "unknown transform '" + token + "' in composition order (expected G, N, Crop, Flip0, Flip1, R)");
  }
  require(n == kKindCount, ErrorCode::InvalidArgument, "composition order must list six transforms");
  return CompositionOrder(kinds);
}

std::string CompositionOrder::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < kKindCount; ++i) {
    if (i) out += ',';
    out += name(kinds_[i]);
  }
  return out;
}

// ---- noise ----

NoiseRealization NoiseRealization::sample(Rng& rng, const Shape& shape) { return {standard_normal(rng, shape)}; }

NoiseRealization NoiseRealization::zeros(const Shape& shape) { return {Tensor(shape)}; }

// ---- flip ----

Tensor flip(const Tensor& x, double lambda, Axis axis) {
  check_lambda(lambda, "flip");
  const auto [count, s] = planes_of(x);
  Tensor out(x.shape());
  for (std::size_t p = 0; p < count; ++p) {
    const double* in = x.ptr() + p * s * s;
    double* dst = out.ptr() + p * s * s;
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        dst[i * s + j] = (1.0 - lambda) * in[i * s + j] + lambda * in[mirror_index(i, j, s, axis)];
      }
    }
  }
  return out;
}

Tensor flip_dlambda(const Tensor& x, Axis axis) {
  const auto [count, s] = planes_of(x);
  Tensor out(x.shape());
  for (std::size_t p = 0; p < count; ++p) {
    const double* in = x.ptr() + p * s * s;
    double* dst = out.ptr() + p * s * s;
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) dst[i * s + j] = in[mirror_index(i, j, s, axis)] - in[i * s + j];
    }
  }
  return out;
}

// ---- crop ----

double crop_mask(std::size_t size, double lambda_x, double lambda_y, std::size_t row, std::size_t col) {
  const double s = static_cast<double>(size);
  const double dist = std::max(std::abs(static_cast<double>(col) - lambda_x * s),
                               std::abs(static_cast<double>(row) - lambda_y * s));
  return stable_sigmoid(s / 8.0 - dist);
}

Tensor crop(const Tensor& x, double lambda_x, double lambda_y) {
  check_lambda(lambda_x, "crop");
  check_lambda(lambda_y, "crop");
  const auto [count, s] = planes_of(x);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const double m = crop_mask(s, lambda_x, lambda_y, i, j);
      for (std::size_t p = 0; p < count; ++p) out[p * s * s + i * s + j] = x[p * s * s + i * s + j] * m;
    }
  }
  return out;
}

Tensor crop_dlambda(const Tensor& x, double lambda_x, double lambda_y, int which) {
  require(which == 0 || which == 1, ErrorCode::InvalidArgument, "crop_dlambda: which must be 0 or 1");
  check_lambda(lambda_x, "crop");
  check_lambda(lambda_y, "crop");
  const auto [count, s] = planes_of(x);
  const double sd = static_cast<double>(s);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const double dx = static_cast<double>(j) - lambda_x * sd;
      const double dy = static_cast<double>(i) - lambda_y * sd;
      const bool x_dominates = std::abs(dx) >= std::abs(dy);
      const double dev = which == 0 ? dx : dy;
      if ((which == 0) != x_dominates) continue;
      const double m = stable_sigmoid(sd / 8.0 - std::max(std::abs(dx), std::abs(dy)));
      const double sign = dev > 0.0 ? 1.0 : (dev < 0.0 ? -1.0 : 0.0);
      const double factor = m * (1.0 - m) * sign * sd;
      for (std::size_t p = 0; p < count; ++p) out[p * s * s + i * s + j] = x[p * s * s + i * s + j] * factor;
    }
  }
  return out;
}

// ---- blur ----

Kernel blur_kernel(double sigma) {
  Kernel w{};
  if (sigma < kBlurSigmaFloor) {
    w[kBlurRadius] = 1.0;
    return w;
  }
  double total = 0.0;
  for (int k = -kBlurRadius; k <= kBlurRadius; ++k) {
    const double a = std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));
    w[static_cast<std::size_t>(k + kBlurRadius)] = a;
    total += a;
  }
  for (auto& v : w) v /= total;
  return w;
}

Kernel blur_kernel_dsigma(double sigma) {
  Kernel d{};
  if (sigma < kBlurSigmaFloor) return d;
  const auto w = blur_kernel(sigma);
  double second_moment = 0.0;
  for (int k = -kBlurRadius; k <= kBlurRadius; ++k) {
    second_moment += w[static_cast<std::size_t>(k + kBlurRadius)] * static_cast<double>(k * k);
  }
  const double s3 = sigma * sigma * sigma;
  for (int k = -kBlurRadius; k <= kBlurRadius; ++k) {
    const auto idx = static_cast<std::size_t>(k + kBlurRadius);
    d[idx] = w[idx] * (static_cast<double>(k * k) - second_moment) / s3;
  }
  return d;
}

Tensor gaussian_blur(const Tensor& x, double lambda) {
  check_lambda(lambda, "gaussian_blur");
  const double sigma = lambda * kBlurSigmaMax;
  if (sigma < kBlurSigmaFloor) return x;
  const auto [count, s] = planes_of(x);
  const auto w = blur_kernel(sigma);
  Tensor out(x.shape());
  std::vector<double> tmp(s * s);
  for (std::size_t p = 0; p < count; ++p) {
    blur_pass(x.ptr() + p * s * s, tmp.data(), s, w, true, PassMode::Apply);
    blur_pass(tmp.data(), out.ptr() + p * s * s, s, w, false, PassMode::Apply);
  }
  return out;
}

Tensor gaussian_blur_dlambda(const Tensor& x, double lambda) {
  check_lambda(lambda, "gaussian_blur");
  const double sigma = lambda * kBlurSigmaMax;
  Tensor out(x.shape());
  if (sigma < kBlurSigmaFloor) return out;
  const auto [count, s] = planes_of(x);
  const auto w = blur_kernel(sigma);
  auto dw = blur_kernel_dsigma(sigma);
  for (auto& v : dw) v *= kBlurSigmaMax;
  std::vector<double> h(s * s), dh(s * s), a(s * s), b(s * s);
  for (std::size_t p = 0; p < count; ++p) {
    const double* in = x.ptr() + p * s * s;
    blur_pass(in, h.data(), s, w, true, PassMode::Apply);
    blur_pass(in, dh.data(), s, dw, true, PassMode::Derivative);
    blur_pass(h.data(), a.data(), s, dw, false, PassMode::Derivative);
    blur_pass(dh.data(), b.data(), s, w, false, PassMode::Apply);
    double* dst = out.ptr() + p * s * s;
    for (std::size_t k = 0; k < s * s; ++k) dst[k] = a[k] + b[k];
  }
  return out;
}

static Tensor gaussian_blur_adjoint(const Tensor& g, double lambda) {
  const double sigma = lambda * kBlurSigmaMax;
  if (sigma < kBlurSigmaFloor) return g;
  const auto [count, s] = planes_of(g);
  const auto w = blur_kernel(sigma);
  Tensor out(g.shape());
  std::vector<double> tmp(s * s);
  for (std::size_t p = 0; p < count; ++p) {
    blur_pass(g.ptr() + p * s * s, tmp.data(), s, w, false, PassMode::Adjoint);
    blur_pass(tmp.data(), out.ptr() + p * s * s, s, w, true, PassMode::Adjoint);
  }
  return out;
}

// ---- rotation ----

std::array<double, 2> turn_cos_sin(double lambda) {
  const double quarters = lambda * 4.0;
  if (quarters == std::floor(quarters) && std::abs(quarters) < 1e15) {
    static constexpr std::array<std::array<double, 2>, 4> exact{{{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}}};
    auto q = static_cast<long long>(quarters) % 4;
    if (q < 0) q += 4;
    return exact[static_cast<std::size_t>(q)];
  }
  const double theta = 2.0 * std::numbers::pi * lambda;
  return {std::cos(theta), std::sin(theta)};
}

Tensor rotate(const Tensor& x, double lambda) {
  check_lambda(lambda, "rotate");
  const auto [count, s] = planes_of(x);
  const auto [c, sn] = turn_cos_sin(lambda);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const auto w = warp_of(i, j, s, c, sn);
      const auto b = bilinear_of(w.u_col, w.u_row);
      for (std::size_t p = 0; p < count; ++p) {
        const double* in = x.ptr() + p * s * s;
        const double top = (1.0 - b.fcol) * pixel_or_zero(in, s, b.row, b.col) + b.fcol * pixel_or_zero(in, s, b.row, b.col + 1);
        const double bottom =
            (1.0 - b.fcol) * pixel_or_zero(in, s, b.row + 1, b.col) + b.fcol * pixel_or_zero(in, s, b.row + 1, b.col + 1);
        out[p * s * s + i * s + j] = (1.0 - b.frow) * top + b.frow * bottom;
      }
    }
  }
  return out;
}

Tensor rotate_dlambda(const Tensor& x, double lambda) {
  check_lambda(lambda, "rotate");
  const auto [count, s] = planes_of(x);
  const auto [c, sn] = turn_cos_sin(lambda);
  const double dtheta = 2.0 * std::numbers::pi;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const auto w = warp_of(i, j, s, c, sn);
      const auto b = bilinear_of(w.u_col, w.u_row);
      for (std::size_t p = 0; p < count; ++p) {
        const double* in = x.ptr() + p * s * s;
        const double v00 = pixel_or_zero(in, s, b.row, b.col);
        const double v01 = pixel_or_zero(in, s, b.row, b.col + 1);
        const double v10 = pixel_or_zero(in, s, b.row + 1, b.col);
        const double v11 = pixel_or_zero(in, s, b.row + 1, b.col + 1);
        const double d_col = (1.0 - b.frow) * (v01 - v00) + b.frow * (v11 - v10);
        const double d_row = (1.0 - b.fcol) * (v10 - v00) + b.fcol * (v11 - v01);
        out[p * s * s + i * s + j] = (d_col * w.du_col + d_row * w.du_row) * dtheta;
      }
    }
  }
  return out;
}

static Tensor rotate_adjoint(const Tensor& g, double lambda) {
  const auto [count, s] = planes_of(g);
  const auto [c, sn] = turn_cos_sin(lambda);
  Tensor out(g.shape());
  const auto n = static_cast<std::ptrdiff_t>(s);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const auto w = warp_of(i, j, s, c, sn);
      const auto b = bilinear_of(w.u_col, w.u_row);
      const std::array<std::ptrdiff_t, 4> rows{b.row, b.row, b.row + 1, b.row + 1};
      const std::array<std::ptrdiff_t, 4> cols{b.col, b.col + 1, b.col, b.col + 1};
      const std::array<double, 4> weights{(1.0 - b.frow) * (1.0 - b.fcol), (1.0 - b.frow) * b.fcol,
                                          b.frow * (1.0 - b.fcol), b.frow * b.fcol};
      for (std::size_t k = 0; k < 4; ++k) {
        if (rows[k] < 0 || cols[k] < 0 || rows[k] >= n || cols[k] >= n) continue;
        const auto dst = static_cast<std::size_t>(rows[k]) * s + static_cast<std::size_t>(cols[k]);
        for (std::size_t p = 0; p < count; ++p) out[p * s * s + dst] += weights[k] * g[p * s * s + i * s + j];
      }
    }
  }
  return out;
}

// ---- noise ----

Tensor add_noise(const Tensor& x, double lambda, const NoiseRealization& eps) {
  check_lambda(lambda, "add_noise");
  require(eps.epsilon.shape() == x.shape(), ErrorCode::ShapeMismatch,
          "add_noise: noise shape " + to_string(eps.epsilon.shape()) + " does not match image " + to_string(x.shape()));
  if (lambda == 0.0) return x;
  Tensor out = x;
  const double scale = lambda * kNoiseSigmaMax;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += scale * eps.epsilon[i];
  return out;
}

Tensor add_noise_dlambda(const Tensor& x, const NoiseRealization& eps) {
  require(eps.epsilon.shape() == x.shape(), ErrorCode::ShapeMismatch,
          "add_noise: noise shape " + to_string(eps.epsilon.shape()) + " does not match image " + to_string(x.shape()));
  Tensor out = eps.epsilon;
  for (auto& v : out.data()) v *= kNoiseSigmaMax;
  return out;
}

// ---- dispatch ----

Tensor apply(Kind kind, const Tensor& x, const TransformParams& p, const NoiseRealization& eps) {
  switch (kind) {
    case Kind::Blur: return gaussian_blur(x, p[kBlur]);
    case Kind::Noise: return add_noise(x, p[kNoise], eps);
    case Kind::Crop: return crop(x, p[kCropX], p[kCropY]);
    case Kind::Flip0: return flip(x, p[kFlip0], Axis::Horizontal);
    case Kind::Flip1: return flip(x, p[kFlip1], Axis::Vertical);
    case Kind::Rotate: return rotate(x, p[kRotate]);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown transform kind");
}

Tensor apply_adjoint(Kind kind, const Tensor& g, const TransformParams& p) {
  switch (kind) {
    case Kind::Blur: return gaussian_blur_adjoint(g, p[kBlur]);
    case Kind::Noise: return g;
    // Pointwise masks and involutive blends are self-adjoint.
    case Kind::Crop: return crop(g, p[kCropX], p[kCropY]);
    case Kind::Flip0: return flip(g, p[kFlip0], Axis::Horizontal);
    case Kind::Flip1: return flip(g, p[kFlip1], Axis::Vertical);
    case Kind::Rotate: return rotate_adjoint(g, p[kRotate]);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown transform kind");
}

std::vector<Tensor> param_derivatives(Kind kind, const Tensor& x, const TransformParams& p,
                                      const NoiseRealization& eps) {
  switch (kind) {
    case Kind::Blur: return {gaussian_blur_dlambda(x, p[kBlur])};
    case Kind::Noise: return {add_noise_dlambda(x, eps)};
    case Kind::Crop: return {crop_dlambda(x, p[kCropX], p[kCropY], 0), crop_dlambda(x, p[kCropX], p[kCropY], 1)};
    case Kind::Flip0: return {flip_dlambda(x, Axis::Horizontal)};
    case Kind::Flip1: return {flip_dlambda(x, Axis::Vertical)};
    case Kind::Rotate: return {rotate_dlambda(x, p[kRotate])};
  }
  throw Error(ErrorCode::InvalidArgument, "unknown transform kind");
}

Tensor compose(const Tensor& x, const TransformParams& params, const CompositionOrder& order,
               const NoiseRealization& eps) {
  Tensor cur = x;
  for (auto kind : order.kinds()) cur = apply(kind, cur, params, eps);
  return cur;
}

ComposeJacobian compose_jacobian(const Tensor& x, const TransformParams& params, const CompositionOrder& order,
                                 const NoiseRealization& eps) {
  ComposeJacobian result;
  Tensor cur = x;
  const auto no_noise = NoiseRealization::zeros(x.shape());
  for (auto kind : order.kinds()) {
    auto derivs = param_derivatives(kind, cur, params, eps);
    // Tangents of earlier parameters pass through the linear part of this stage.
    if (kind != Kind::Noise) {
      for (auto& t : result.d_params) {
        if (!t.empty()) t = apply(kind, t, params, no_noise);
      }
    }
    const auto cols = params_of(kind);
    for (std::size_t k = 0; k < cols.size(); ++k) result.d_params[cols[k]] = std::move(derivs[k]);
    cur = apply(kind, cur, params, eps);
  }
  result.output = std::move(cur);
  return result;
}

}  // namespace augdiff::transforms
