#include <algorithm>
#include <cmath>
#include <numbers>

#include "core/error.hpp"
#include "core/gradcheck.hpp"
#include "core/ops.hpp"
#include "core/transform_ops.hpp"
#include "core/transforms.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace augdiff;
namespace tf = augdiff::transforms;

namespace {

const tf::Kind kAllKinds[] = {tf::Kind::Blur, tf::Kind::Noise, tf::Kind::Crop,
                              tf::Kind::Flip0, tf::Kind::Flip1, tf::Kind::Rotate};

Tensor plane(Rng& rng, std::size_t s) { return uniform(rng, 0.0, 1.0, {s, s}); }

double at(const Tensor& x, std::size_t s, std::size_t i, std::size_t j) { return x[i * s + j]; }

// Largest |a - b| / max(|b|_inf, 1e-8) over pixels where keep[k] is set.
double masked_rel(const Tensor& a, const Tensor& b, const std::vector<char>& keep) {
  double diff = 0, scale = 1e-8;
  for (std::size_t k = 0; k < a.numel(); ++k) {
    if (!keep[k]) continue;
    diff = std::max(diff, std::abs(a[k] - b[k]));
    scale = std::max(scale, std::abs(b[k]));
  }
  return diff / scale;
}

// Central difference of one parameter of tf::apply, image-valued.
Tensor fd_image(tf::Kind kind, const Tensor& x, const tf::TransformParams& p, std::size_t index,
                const tf::NoiseRealization& eps, double h) {
  const auto up = tf::apply(kind, x, p.with(index, p[index] + h), eps);
  const auto down = tf::apply(kind, x, p.with(index, p[index] - h), eps);
  Tensor out(x.shape());
  for (std::size_t k = 0; k < out.numel(); ++k) out[k] = (up[k] - down[k]) / (2 * h);
  return out;
}

// Source coordinate (col, row) sampled by output pixel (i, j) under rotation.
std::pair<double, double> warped(std::size_t i, std::size_t j, std::size_t s, double lambda) {
  const double c = (static_cast<double>(s) - 1) / 2, th = 2 * std::numbers::pi * lambda;
  const double dx = static_cast<double>(j) - c, dy = static_cast<double>(i) - c;
  return {std::cos(th) * dx - std::sin(th) * dy + c, std::sin(th) * dx + std::cos(th) * dy + c};
}

// Pixels whose warped coordinates stay more than `gap` from integers across
// [lambda - h, lambda + h]: the bilinear map is smooth there.
std::vector<char> rotation_smooth(std::size_t s, double lambda, double h, double gap) {
  std::vector<char> keep(s * s, 1);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      for (double l : {lambda - h, lambda, lambda + h}) {
        const auto [u, v] = warped(i, j, s, l);
        for (double w : {u, v}) {
          if (std::abs(w - std::round(w)) < gap) keep[i * s + j] = 0;
        }
        const auto [u0, v0] = warped(i, j, s, lambda - h);
        if (std::floor(u) != std::floor(u0) || std::floor(v) != std::floor(v0)) keep[i * s + j] = 0;
      }
  return keep;
}

// Pixels more than `gap` px away from an infinity-norm tie and from the
// window center lines across the stencil.
std::vector<char> crop_smooth(std::size_t s, double lx, double ly, double h, double gap) {
  std::vector<char> keep(s * s, 1);
  const double sd = static_cast<double>(s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      for (double dl : {-h, 0.0, h}) {
        const double ax = std::abs(static_cast<double>(j) - (lx + dl) * sd);
        const double ay = std::abs(static_cast<double>(i) - (ly + dl) * sd);
        if (std::abs(ax - ay) < gap || ax < gap || ay < gap) keep[i * s + j] = 0;
      }
  return keep;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.numel(); ++k) s += a[k] * b[k];
  return s;
}

tf::TransformParams random_params(Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::array<double, tf::kParamCount> v{};
  for (auto& x : v) x = rng.uniform(lo, hi);
  return tf::TransformParams(v);
}

}  // namespace

TEST_SUITE("transforms") {
  TEST_CASE("parameter and order validation") {
    CHECK_THROWS_AS(tf::TransformParams({0, 0, 0.5, 0.5, 0, 0, 1.5}), Error);
    CHECK_THROWS_AS(tf::TransformParams({-0.1, 0, 0.5, 0.5, 0, 0, 0}), Error);
    const tf::TransformParams id;
    CHECK(id[tf::kCropX] == 0.5);
    CHECK(id[tf::kCropY] == 0.5);
    CHECK(id[tf::kRotate] == 0.0);
    CHECK(tf::CompositionOrder::parse("G,N,Crop,Flip0,Flip1,R") == tf::CompositionOrder());
    CHECK(tf::CompositionOrder().to_string() == "G,N,Crop,Flip0,Flip1,R");
    CHECK_THROWS_AS(tf::CompositionOrder::parse("G,N,Crop,Flip0,Flip0,R"), Error);
    CHECK_THROWS_AS(tf::CompositionOrder::parse("G,N,Crop,Flip0,Flip1"), Error);
    CHECK_THROWS_AS(tf::CompositionOrder::parse("G,N,Crop,Flip0,Flip1,Shear"), Error);
    const auto rev = tf::CompositionOrder::parse("R,Flip1,Flip0,Crop,N,G");
    CHECK(tf::CompositionOrder::parse(rev.to_string()) == rev);
  }

  TEST_CASE("flip examples") {
    Rng rng(1);
    const auto x = plane(rng, 8);
    CHECK(bitwise_equal(tf::flip(x, 0.0, tf::Axis::Horizontal), x));
    const auto h = tf::flip(x, 1.0, tf::Axis::Horizontal);
    const auto v = tf::flip(x, 1.0, tf::Axis::Vertical);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(at(h, 8, i, j) == at(x, 8, i, 7 - j));
        CHECK(at(v, 8, i, j) == at(x, 8, 7 - i, j));
      }
    // Mirror-symmetric input is a fixed point for every lambda.
    Tensor sym({8, 8});
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) sym[i * 8 + j] = at(x, 8, i, std::min(j, 7 - j));
    for (double l : {0.1, 0.37, 0.9}) {
      const auto out = tf::flip(sym, l, tf::Axis::Horizontal);
      for (std::size_t k = 0; k < 64; ++k) CHECK(out[k] == doctest::Approx(sym[k]).epsilon(1e-15));
    }
    const tf::TransformParams p = tf::TransformParams().with(tf::kFlip0, 0.4);
    const auto fd = fd_image(tf::Kind::Flip0, x, p, tf::kFlip0, tf::NoiseRealization::zeros(x.shape()), 1e-4);
    CHECK(relative_error(tf::flip_dlambda(x, tf::Axis::Horizontal), fd) < 1e-8);
  }

  TEST_CASE("crop examples") {
    const std::size_t s = 32;
    // Window centered at (16, 16); pixel (row 16, col 20) sits at distance s/8.
    CHECK(tf::crop_mask(s, 0.5, 0.5, 16, 20) == 0.5);
    CHECK(tf::crop_mask(s, 0.5, 0.5, 16, 16) == doctest::Approx(1.0 / (1.0 + std::exp(-4.0))).epsilon(1e-15));
    CHECK(tf::crop_mask(s, 0.5, 0.5, 16, 16) == doctest::Approx(0.98201).epsilon(1e-5));
    Rng rng(2);
    const auto x = plane(rng, s);
    const auto out = tf::crop(x, 0.3, 0.6);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const double dist = std::max(std::abs(double(j) - 0.3 * 32), std::abs(double(i) - 0.6 * 32));
        CHECK(at(out, s, i, j) == doctest::Approx(at(x, s, i, j) / (1 + std::exp(dist - 4.0))).epsilon(1e-14));
      }
  }

  TEST_CASE("crop derivative matches finite differences away from ties") {
    for (auto seed : gen::seeds(10)) {
      Rng rng(seed);
      const std::size_t s = 16;
      const auto x = plane(rng, s);
      const double lx = rng.uniform(0.1, 0.9), ly = rng.uniform(0.1, 0.9);
      const tf::TransformParams p({0, 0, lx, ly, 0, 0, 0});
      const auto keep = crop_smooth(s, lx, ly, 1e-4, 0.5 / 16);
      const auto eps = tf::NoiseRealization::zeros(x.shape());
      for (int which : {0, 1}) {
        const auto fd = fd_image(tf::Kind::Crop, x, p, which == 0 ? tf::kCropX : tf::kCropY, eps, 1e-4);
        CHECK(masked_rel(tf::crop_dlambda(x, lx, ly, which), fd, keep) < 1e-5);
      }
    }
  }

  TEST_CASE("crop derivative tie rule goes to x") {
    // Pixel (row 4, col 4) with the center at (0, 0) ties |dx| = |dy| = 4.
    Tensor x = Tensor::full({16, 16}, 1.0);
    const auto dx = tf::crop_dlambda(x, 0.0, 0.0, 0);
    const auto dy = tf::crop_dlambda(x, 0.0, 0.0, 1);
    CHECK(dx[4 * 16 + 4] != 0.0);
    CHECK(dy[4 * 16 + 4] == 0.0);
  }

  TEST_CASE("blur examples") {
    Rng rng(3);
    const auto x = plane(rng, 16);
    CHECK(bitwise_equal(tf::gaussian_blur(x, 0.0), x));
    CHECK(max_abs(tf::gaussian_blur_dlambda(x, 0.0)) == 0.0);
    for (double l : {0.0, 0.2, 0.5, 1.0}) {
      const auto out = tf::gaussian_blur(Tensor::full({16, 16}, 0.42), l);
      for (double v : out.data()) CHECK(std::abs(v - 0.42) <= 4e-16);
    }
    const auto k = tf::blur_kernel(1.0);
    double total = 0;
    for (std::size_t i = 0; i < k.size(); ++i) {
      const double off = static_cast<double>(i) - tf::kBlurRadius;
      total += std::exp(-off * off / 2);
    }
    CHECK(k[tf::kBlurRadius] == doctest::Approx(1.0 / total).epsilon(1e-14));
    const tf::TransformParams p = tf::TransformParams().with(tf::kBlur, 0.5);
    const auto fd = fd_image(tf::Kind::Blur, x, p, tf::kBlur, tf::NoiseRealization::zeros(x.shape()), 1e-4);
    CHECK(relative_error(tf::gaussian_blur_dlambda(x, 0.5), fd) < 1e-5);
  }

  TEST_CASE("blur kernel derivative matches finite differences in sigma") {
    for (double sigma : {0.3, 0.8, 1.5, 2.0}) {
      const auto d = tf::blur_kernel_dsigma(sigma);
      const auto up = tf::blur_kernel(sigma + 1e-5), down = tf::blur_kernel(sigma - 1e-5);
      for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx((up[i] - down[i]) / 2e-5).epsilon(1e-6));
    }
  }

  TEST_CASE("rotation examples") {
    Rng rng(4);
    for (std::size_t s : {8, 9, 16}) {
      const auto x = plane(rng, s);
      CHECK(bitwise_equal(tf::rotate(x, 0.0), x));
      const auto q = tf::rotate(x, 0.25);
      const auto half = tf::rotate(x, 0.5);
      const auto three = tf::rotate(x, 0.75);
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j) {
          CHECK(at(q, s, i, j) == at(x, s, j, s - 1 - i));
          CHECK(at(half, s, i, j) == at(x, s, s - 1 - i, s - 1 - j));
          CHECK(at(three, s, i, j) == at(x, s, s - 1 - j, i));
        }
    }
  }

  TEST_CASE("rotation derivative matches finite differences away from cell crossings") {
    for (auto seed : gen::seeds(10)) {
      Rng rng(seed);
      const std::size_t s = 16;
      const auto x = plane(rng, s);
      const double l = rng.uniform(0.1, 0.9);
      const auto keep = rotation_smooth(s, l, 1e-4, 1e-3);
      const auto fd = fd_image(tf::Kind::Rotate, x, tf::TransformParams().with(tf::kRotate, l), tf::kRotate,
                               tf::NoiseRealization::zeros(x.shape()), 1e-4);
      CHECK(masked_rel(tf::rotate_dlambda(x, l), fd, keep) < 1e-4);
    }
  }

  TEST_CASE("noise examples") {
    Rng rng(5);
    const auto x = plane(rng, 16);
    const auto eps = tf::NoiseRealization::sample(rng, x.shape());
    CHECK(bitwise_equal(tf::add_noise(x, 0.0, eps), x));
    const auto out = tf::add_noise(x, 0.6, eps);
    for (std::size_t k = 0; k < x.numel(); ++k) CHECK(out[k] - x[k] == doctest::Approx(0.6 * 0.1 * eps.epsilon[k]));
    const auto d = tf::add_noise_dlambda(x, eps);
    for (std::size_t k = 0; k < x.numel(); ++k) CHECK(d[k] == 0.1 * eps.epsilon[k]);
    CHECK_THROWS_AS(tf::add_noise(x, 0.5, tf::NoiseRealization::zeros({4, 4})), Error);

    Rng big(6);
    const auto xb = uniform(big, 0, 1, {100000});
    const auto eb = tf::NoiseRealization::sample(big, xb.shape());
    for (double l : {0.3, 1.0}) {
      const auto ob = tf::add_noise(xb.reshaped({1000, 10, 10}), l, tf::NoiseRealization{eb.epsilon.reshaped({1000, 10, 10})});
      double m = 0, v = 0;
      for (std::size_t k = 0; k < xb.numel(); ++k) m += ob[k] - xb[k];
      m /= 1e5;
      for (std::size_t k = 0; k < xb.numel(); ++k) v += (ob[k] - xb[k] - m) * (ob[k] - xb[k] - m);
      CHECK(std::sqrt(v / (1e5 - 1)) == doctest::Approx(l * 0.1).epsilon(0.02));
    }
  }

  TEST_CASE("compose with everything at identity but the crop is the crop alone") {
    Rng rng(7);
    const auto x = plane(rng, 16);
    const auto eps = tf::NoiseRealization::sample(rng, x.shape());
    const tf::TransformParams p({0, 0, 0.3, 0.7, 0, 0, 0});
    CHECK(bitwise_equal(tf::compose(x, p, tf::CompositionOrder(), eps), tf::crop(x, 0.3, 0.7)));
  }

  TEST_CASE("composition order matters") {
    Rng rng(8);
    const auto x = plane(rng, 16);
    const auto eps = tf::NoiseRealization::sample(rng, x.shape());
    const tf::TransformParams p({0.4, 0.5, 0.35, 0.6, 0.7, 0.2, 0.13});
    const auto a = tf::compose(x, p, tf::CompositionOrder(), eps);
    const auto b = tf::compose(x, p, tf::CompositionOrder::parse("R,Flip1,Flip0,Crop,N,G"), eps);
    double diff = 0;
    for (std::size_t k = 0; k < a.numel(); ++k) diff = std::max(diff, std::abs(a[k] - b[k]));
    CHECK(diff > 1e-3);
  }

  TEST_CASE("compose jacobian matches finite differences for all seven parameters") {
    const std::size_t s = 8;
    const double h = 1e-4;
    std::size_t checked = 0;
    for (auto seed : gen::seeds(40)) {
      Rng rng(seed);
      const auto x = plane(rng, s);
      const auto eps = tf::NoiseRealization::sample(rng, x.shape());
      const auto p = random_params(rng, 0.1, 0.9);
      // Keep only draws whose rotation and crop stencils are smooth everywhere,
      // since later transforms mix pixels.
      const auto rk = rotation_smooth(s, p[tf::kRotate], h, 1e-3);
      const auto ck = crop_smooth(s, p[tf::kCropX], p[tf::kCropY], h, 0.5 / 8);
      if (std::count(rk.begin(), rk.end(), 0) || std::count(ck.begin(), ck.end(), 0)) continue;
      ++checked;
      const auto jac = tf::compose_jacobian(x, p, tf::CompositionOrder(), eps);
      CHECK(bitwise_equal(jac.output, tf::compose(x, p, tf::CompositionOrder(), eps)));
      for (std::size_t k = 0; k < tf::kParamCount; ++k) {
        const auto up = tf::compose(x, p.with(k, p[k] + h), tf::CompositionOrder(), eps);
        const auto down = tf::compose(x, p.with(k, p[k] - h), tf::CompositionOrder(), eps);
        Tensor fd(x.shape());
        for (std::size_t q = 0; q < fd.numel(); ++q) fd[q] = (up[q] - down[q]) / (2 * h);
        CAPTURE(k);
        CHECK(relative_error(jac.d_params[k], fd) < 1e-4);
      }
    }
    CHECK(checked >= 1);
  }
}

TEST_SUITE("transforms properties") {
  TEST_CASE("identity settings return the input bitwise") {
    for (auto seed : gen::seeds(10)) {
      Rng rng(seed);
      const auto s = 8 * gen::between(rng, 1, 4);
      const auto x = uniform(rng, 0, 1, {2, 1, s, s});
      const auto eps = tf::NoiseRealization::sample(rng, x.shape());
      const tf::TransformParams id;
      for (auto kind : kAllKinds) {
        if (kind == tf::Kind::Crop) continue;
        CHECK(bitwise_equal(tf::apply(kind, x, id, eps), x));
      }
    }
  }

  TEST_CASE("outputs stay finite and within range") {
    for (auto seed : gen::seeds(20)) {
      Rng rng(seed);
      const std::size_t s = 16;
      const auto x = uniform(rng, 0.2, 0.9, {s, s});
      const auto p = random_params(rng);
      const auto eps = tf::NoiseRealization::sample(rng, x.shape());
      double lo = 1, hi = 0;
      for (double v : x.data()) lo = std::min(lo, v), hi = std::max(hi, v);
      for (auto kind : kAllKinds) {
        const auto out = tf::apply(kind, x, p, eps);
        CHECK(all_finite(out));
        if (kind == tf::Kind::Noise) continue;
        // Crop attenuates and rotation pads with zeros, so 0 joins the lower bound.
        const double floor = (kind == tf::Kind::Crop || kind == tf::Kind::Rotate) ? 0.0 : lo;
        for (double v : out.data()) {
          CHECK(v >= floor - 1e-12);
          CHECK(v <= hi + 1e-12);
        }
      }
      CHECK(all_finite(tf::compose(x, p, tf::CompositionOrder(), eps)));
    }
  }

  TEST_CASE("transforms are continuous in lambda") {
    for (auto seed : gen::seeds(10)) {
      Rng rng(seed);
      const auto x = plane(rng, 16);
      const auto eps = tf::NoiseRealization::sample(rng, x.shape());
      const auto p = random_params(rng, 0.0, 1.0 - 1e-6);
      for (std::size_t k = 0; k < tf::kParamCount; ++k) {
        const auto a = tf::compose(x, p, tf::CompositionOrder(), eps);
        const auto b = tf::compose(x, p.with(k, p[k] + 1e-6), tf::CompositionOrder(), eps);
        double diff = 0;
        for (std::size_t q = 0; q < a.numel(); ++q) diff = std::max(diff, std::abs(a[q] - b[q]));
        CHECK(diff <= 1e-3);
      }
    }
  }

  TEST_CASE("each transform's adjoint satisfies <T x, y> = <x, T* y>") {
    for (auto seed : gen::seeds(10)) {
      Rng rng(seed);
      const std::size_t s = 8 + 8 * (seed % 2);
      const auto x = uniform(rng, -1, 1, {s, s});
      const auto y = uniform(rng, -1, 1, {s, s});
      const auto p = random_params(rng);
      const auto zero = tf::NoiseRealization::zeros(x.shape());
      for (auto kind : kAllKinds) {
        const double lhs = dot(tf::apply(kind, x, p, zero), y);
        const double rhs = dot(x, tf::apply_adjoint(kind, y, p));
        CAPTURE(tf::name(kind));
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("graph-registered compose matches finite differences in images and params") {
    const std::size_t s = 8, b = 2;
    const double h = 1e-5;
    std::size_t checked = 0;
    for (auto seed : gen::seeds(30)) {
      Rng rng(seed);
      const auto x = uniform(rng, 0, 1, {b, 1, s, s});
      Tensor lam({b, tf::kParamCount});
      bool smooth = true;
      for (std::size_t i = 0; i < b; ++i) {
        const auto p = random_params(rng, 0.1, 0.9);
        for (std::size_t k = 0; k < tf::kParamCount; ++k) lam[i * tf::kParamCount + k] = p[k];
        const auto rk = rotation_smooth(s, p[tf::kRotate], h, 1e-3);
        const auto ck = crop_smooth(s, p[tf::kCropX], p[tf::kCropY], h, 0.5 / 8);
        smooth = smooth && !std::count(rk.begin(), rk.end(), 0) && !std::count(ck.begin(), ck.end(), 0);
      }
      if (!smooth) continue;
      ++checked;
      const auto eps = tf::NoiseRealization::sample(rng, x.shape());
      const auto cot = uniform(rng, -1, 1, x.shape());
      auto value = [&](const Tensor& xi, const Tensor& li) {
        Graph g;
        return sum(mul(tf::compose_op(g.constant(xi), g.constant(li), tf::CompositionOrder(), eps), g.constant(cot)))
            .value()
            .item();
      };
      Graph g;
      Var xv = g.parameter(x), lv = g.parameter(lam);
      const auto grads = backward(g, sum(mul(tf::compose_op(xv, lv, tf::CompositionOrder(), eps), g.constant(cot))));
      const auto fd_x = finite_difference([&](const Tensor& t) { return value(t, lam); }, x, h);
      const auto fd_l = finite_difference([&](const Tensor& t) { return value(x, t); }, lam, h);
      CHECK(relative_error(grads.of(xv), fd_x) < 1e-6);
      CHECK(relative_error(grads.of(lv), fd_l) < 1e-4);
    }
    CHECK(checked >= 3);
  }
}
