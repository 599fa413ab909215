#include <cmath>
#include <functional>

#include "core/autodiff.hpp"
#include "core/error.hpp"
#include "core/gradcheck.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace augdiff;

namespace {

// Builds a scalar from one graph leaf; used to compare backward() with
// finite differences of the same function.
using Builder = std::function<Var(Graph&, Var)>;

double eval_scalar(const Builder& build, const Tensor& x) {
  Graph g;
  return build(g, g.constant(x)).value().item();
}

Tensor analytic_grad(const Builder& build, const Tensor& x) {
  Graph g;
  Var leaf = g.parameter(x);
  Var out = build(g, leaf);
  return backward(g, out).of(leaf);
}

double grad_error(const Builder& build, const Tensor& x, double h = 1e-4) {
  const auto fd = finite_difference([&](const Tensor& t) { return eval_scalar(build, t); }, x, h);
  return relative_error(analytic_grad(build, x), fd);
}

// Weighted sum so every output element carries a distinct cotangent.
Var weighted_sum(Var y, const Tensor& w) { return sum(mul(y, y.graph().constant(w))); }

// Values bounded away from zero so relu's kink is outside the stencil.
Tensor away_from_zero(Rng& rng, Shape shape) {
  Tensor t = uniform(rng, 0.1, 1.0, std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (rng.coin()) t[i] = -t[i];
  }
  return t;
}

}  // namespace

TEST_SUITE("tensor_core") {
  TEST_CASE("tensor construction and checks") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(max_abs(t) == 0.0);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), Error);
    CHECK(Tensor::scalar(4.5).item() == 4.5);
    CHECK(all_finite(Tensor::full({3}, 1.0)));
    CHECK_FALSE(all_finite(Tensor({2}, {1.0, NAN})));
  }

  TEST_CASE("conv2d: 1x1 identity kernel leaves input unchanged") {
    Rng rng(1);
    const auto x = gen::tensor(rng, {2, 1, 5, 5});
    Graph g;
    Var y = conv2d(g.constant(x), g.constant(Tensor({1, 1, 1, 1}, {1.0})), g.constant(Tensor({1})));
    CHECK(bitwise_equal(y.value(), x));
  }

  TEST_CASE("conv2d: 2x2 all-ones kernel sums the window") {
    Graph g;
    Var y = conv2d(g.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})), g.constant(Tensor::full({1, 1, 2, 2}, 1.0)),
                   g.constant(Tensor({1})));
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.value().item() == 10.0);
  }

  TEST_CASE("conv2d rejects mismatched channels and oversized kernels") {
    Graph g;
    Var x = g.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    CHECK_THROWS_AS(conv2d(x, g.constant(Tensor::full({1, 1, 3, 3}, 1.0)), g.constant(Tensor({1}))), Error);
    try {
      conv2d(x, g.constant(Tensor({1, 2, 1, 1})), g.constant(Tensor({1})));
      FAIL("expected a shape error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
  }

  TEST_CASE("conv2d output extent uses floor for strides") {
    Graph g;
    Var y = conv2d(g.constant(Tensor({1, 1, 6, 6})), g.constant(Tensor({2, 1, 3, 3})), g.constant(Tensor({2})), 2, 0);
    // (6 - 3) / 2 + 1 = 2 after flooring 1.5
    CHECK(y.shape() == Shape{1, 2, 2, 2});
  }

  TEST_CASE("conv2d against a direct sliding-window oracle") {
    Rng rng(5);
    const auto x = gen::tensor(rng, {2, 3, 6, 5});
    const auto w = gen::tensor(rng, {4, 3, 3, 3});
    const auto b = gen::tensor(rng, {4});
    for (std::size_t stride : {1, 2}) {
      for (std::size_t pad : {0, 1}) {
        Graph g;
        const auto y = conv2d(g.constant(x), g.constant(w), g.constant(b), stride, pad).value();
        const std::size_t oh = (6 + 2 * pad - 3) / stride + 1, ow = (5 + 2 * pad - 3) / stride + 1;
        REQUIRE(y.shape() == Shape{2, 4, oh, ow});
        double worst = 0.0;
        for (std::size_t n = 0; n < 2; ++n)
          for (std::size_t co = 0; co < 4; ++co)
            for (std::size_t i = 0; i < oh; ++i)
              for (std::size_t j = 0; j < ow; ++j) {
                double acc = b[co];
                for (std::size_t ci = 0; ci < 3; ++ci)
                  for (std::size_t u = 0; u < 3; ++u)
                    for (std::size_t v = 0; v < 3; ++v) {
                      const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                      const long c = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                      if (r < 0 || c < 0 || r >= 6 || c >= 5) continue;
                      acc += w[((co * 3 + ci) * 3 + u) * 3 + v] *
                             x[((n * 3 + ci) * 6 + static_cast<std::size_t>(r)) * 5 + static_cast<std::size_t>(c)];
                    }
                worst = std::max(worst, std::abs(acc - y[((n * 4 + co) * oh + i) * ow + j]));
              }
        CHECK(worst < 1e-12);
      }
    }
  }

  TEST_CASE("dense: identity weights and the hand example") {
    Rng rng(2);
    const auto x = gen::tensor(rng, {3, 4});
    Tensor eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
    Graph g;
    CHECK(bitwise_equal(dense(g.constant(x), g.constant(eye), g.constant(Tensor({4}))).value(), x));
    Var y = dense(g.constant(Tensor({1, 2}, {1, 2})), g.constant(Tensor({1, 2}, {1, 1})), g.constant(Tensor({1}, {3})));
    CHECK(y.value().item() == 6.0);
    CHECK_THROWS_AS(dense(g.constant(x), g.constant(Tensor({2, 3})), g.constant(Tensor({2}))), Error);
  }

  TEST_CASE("activations") {
    Graph g;
    CHECK(sigmoid(g.constant(Tensor::scalar(0.0))).value().item() == 0.5);
    const auto r = relu(g.constant(Tensor({2}, {-3.0, 3.0}))).value();
    CHECK(r[0] == 0.0);
    CHECK(r[1] == 3.0);
    const auto pooled = global_avg_pool(g.constant(Tensor::full({2, 3, 4, 4}, 0.7))).value();
    CHECK(pooled.shape() == Shape{2, 3});
    for (double v : pooled.data()) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
    // Stable branch: no overflow at extreme arguments.
    CHECK(stable_sigmoid(-1000.0) == 0.0);
    CHECK(stable_sigmoid(1000.0) == 1.0);
    CHECK(std::isfinite(stable_sigmoid(-745.0)));
    const auto mp = max_pool2(g.constant(Tensor({1, 1, 2, 4}, {1, 5, 2, 0, 3, 4, 9, 8}))).value();
    CHECK(mp.shape() == Shape{1, 1, 1, 2});
    CHECK(mp[0] == 5.0);
    CHECK(mp[1] == 9.0);
  }

  TEST_CASE("backward: scalar examples") {
    {
      Graph g;
      Var x = g.parameter(Tensor::scalar(3.0));
      Var y = mul(x, x);
      CHECK(backward(g, y).of(x).item() == 6.0);
    }
    {
      Graph g;
      Var x = g.parameter(Tensor({5}));
      const auto grad = backward(g, sum(sigmoid(x))).of(x);
      for (double v : grad.data()) CHECK(v == 0.25);
    }
  }

  TEST_CASE("backward rejects non-scalar outputs") {
    Graph g;
    Var x = g.parameter(Tensor({3}));
    try {
      backward(g, relu(x));
      FAIL("expected a shape error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
  }

  TEST_CASE("backward: random 3-layer composition matches finite differences") {
    for (auto seed : gen::seeds(20)) {
      Rng rng(seed);
      const auto w1 = gen::tensor(rng, {5, 4});
      const auto b1 = gen::tensor(rng, {5});
      const auto w2 = gen::tensor(rng, {3, 5});
      const auto b2 = gen::tensor(rng, {3});
      const auto w3 = gen::tensor(rng, {1, 3});
      const auto b3 = gen::tensor(rng, {1});
      const auto x = gen::tensor(rng, {2, 4});
      Builder net = [&](Graph& g, Var in) {
        Var h = sigmoid(dense(in, g.constant(w1), g.constant(b1)));
        h = sigmoid(dense(h, g.constant(w2), g.constant(b2)));
        return sum(dense(h, g.constant(w3), g.constant(b3)));
      };
      CHECK(grad_error(net, x) < 1e-6);
    }
  }

  TEST_CASE("finite_difference examples") {
    CHECK(finite_difference([](const Tensor& t) { return t[0] * t[0]; }, Tensor::scalar(1.0), 0.37).item() ==
          doctest::Approx(2.0).epsilon(1e-14));
    Rng rng(3);
    const auto x = gen::tensor(rng, {6});
    const auto ones = finite_difference(
        [](const Tensor& t) {
          double s = 0;
          for (double v : t.data()) s += v;
          return s;
        },
        x, 1e-3);
    for (double v : ones.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-10));
    const auto d = finite_difference([](const Tensor& t) { return std::sin(t[0]); }, Tensor::scalar(0.0), 1e-4);
    CHECK(std::abs(d.item() - 1.0) < 1e-8);
    CHECK_THROWS_AS(finite_difference([](const Tensor&) { return 0.0; }, x, 0.0), Error);
  }

  TEST_CASE("rng draws") {
    Rng a(42), b(42);
    const auto u = uniform(a, 0.0, 1.0, {7});
    for (double v : u.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(bitwise_equal(u, uniform(b, 0.0, 1.0, {7})));

    Rng n(7);
    const auto z = standard_normal(n, {100000});
    double mean = 0, var = 0;
    for (double v : z.data()) mean += v;
    mean /= 1e5;
    for (double v : z.data()) var += (v - mean) * (v - mean);
    var /= (1e5 - 1);
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
  }

  TEST_CASE("rng streams are reproducible and distinct") {
    Rng s1 = Rng::stream(9, 1), s2 = Rng::stream(9, 1), s3 = Rng::stream(9, 2);
    const auto a = s1.next_u64();
    CHECK(a == s2.next_u64());
    CHECK(a != s3.next_u64());
    Rng r(11);
    for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
  }
}

TEST_SUITE("tensor_core properties") {
  TEST_CASE("every primitive's gradient matches finite differences on 20 seeds") {
    for (auto seed : gen::seeds(20)) {
      CAPTURE(seed);
      Rng rng(seed);
      const auto wsum = gen::tensor(rng, {64});

      // conv2d w.r.t. input, kernel and bias, with stride and padding.
      const auto x = gen::tensor(rng, {2, 2, 5, 5});
      const auto k = gen::tensor(rng, {3, 2, 3, 3});
      const auto bias = gen::tensor(rng, {3});
      const std::size_t stride = 1 + seed % 2, pad = seed % 3 == 0 ? 0 : 1;
      {
        Rng wr(seed + 1);
        Graph probe;
        const auto out_shape = conv2d(probe.constant(x), probe.constant(k), probe.constant(bias), stride, pad).shape();
        const auto w = gen::tensor(wr, out_shape);
        CHECK(grad_error([&](Graph& g, Var in) { return weighted_sum(conv2d(in, g.constant(k), g.constant(bias), stride, pad), w); }, x) < 1e-6);
        CHECK(grad_error([&](Graph& g, Var in) { return weighted_sum(conv2d(g.constant(x), in, g.constant(bias), stride, pad), w); }, k) < 1e-6);
        CHECK(grad_error([&](Graph& g, Var in) { return weighted_sum(conv2d(g.constant(x), g.constant(k), in, stride, pad), w); }, bias) < 1e-6);
      }

      // dense w.r.t. all three inputs.
      const auto xd = gen::tensor(rng, {3, 4});
      const auto wd = gen::tensor(rng, {2, 4});
      const auto bd = gen::tensor(rng, {2});
      const auto cot = gen::tensor(rng, {3, 2});
      CHECK(grad_error([&](Graph& g, Var in) { return weighted_sum(dense(in, g.constant(wd), g.constant(bd)), cot); }, xd) < 1e-6);
      CHECK(grad_error([&](Graph& g, Var in) { return weighted_sum(dense(g.constant(xd), in, g.constant(bd)), cot); }, wd) < 1e-6);
      CHECK(grad_error([&](Graph& g, Var in) { return weighted_sum(dense(g.constant(xd), g.constant(wd), in), cot); }, bd) < 1e-6);

      // Elementwise ops; relu inputs stay clear of its kink.
      const auto xr = away_from_zero(rng, {12});
      const auto c12 = gen::tensor(rng, {12});
      CHECK(grad_error([&](Graph&, Var in) { return weighted_sum(relu(in), c12); }, xr) < 1e-6);
      CHECK(grad_error([&](Graph&, Var in) { return weighted_sum(sigmoid(in), c12); }, gen::tensor(rng, {12}, -4, 4)) < 1e-6);
      const auto other = gen::tensor(rng, {12});
      CHECK(grad_error([&](Graph& g, Var in) { return weighted_sum(add(in, g.constant(other)), c12); }, xr) < 1e-6);
      CHECK(grad_error([&](Graph& g, Var in) { return weighted_sum(mul(in, g.constant(other)), c12); }, xr) < 1e-6);
      CHECK(grad_error([&](Graph&, Var in) { return weighted_sum(scale(in, -2.5), c12); }, xr) < 1e-6);

      // Pooling: a random permutation of well-separated values keeps each
      // window's maximum unique under the stencil.
      Tensor xp({1, 2, 4, 4});
      std::vector<double> levels(32);
      for (std::size_t i = 0; i < 32; ++i) levels[i] = 0.05 * static_cast<double>(i);
      rng.shuffle(levels);
      for (std::size_t i = 0; i < 32; ++i) xp[i] = levels[i];
      const auto cp = gen::tensor(rng, {1, 2, 2, 2});
      CHECK(grad_error([&](Graph&, Var in) { return weighted_sum(max_pool2(in), cp); }, xp) < 1e-6);
      const auto cg = gen::tensor(rng, {1, 2});
      CHECK(grad_error([&](Graph&, Var in) { return weighted_sum(global_avg_pool(in), cg); }, xp) < 1e-6);
    }
  }

  TEST_CASE("backward is linear: grad of a sum equals the sum of grads") {
    for (auto seed : gen::seeds(10)) {
      Rng rng(seed);
      const auto x = gen::tensor(rng, {6});
      const auto c1 = gen::tensor(rng, {6});
      const auto c2 = gen::tensor(rng, {6});
      Builder f1 = [&](Graph&, Var in) { return weighted_sum(sigmoid(in), c1); };
      Builder f2 = [&](Graph&, Var in) { return weighted_sum(mul(in, in), c2); };
      const auto g1 = analytic_grad(f1, x);
      const auto g2 = analytic_grad(f2, x);
      const auto g12 = analytic_grad([&](Graph& g, Var in) { return add(f1(g, in), f2(g, in)); }, x);
      for (std::size_t i = 0; i < 6; ++i) CHECK(g12[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-14));
    }
  }

  TEST_CASE("operations are pure and repeatable") {
    for (auto seed : gen::seeds(5)) {
      Rng rng(seed);
      const auto x = gen::tensor(rng, {2, 1, 8, 8});
      const auto k = gen::tensor(rng, {2, 1, 3, 3});
      const auto b = gen::tensor(rng, {2});
      const Tensor x0 = x, k0 = k;
      Tensor first, second;
      for (Tensor* out : {&first, &second}) {
        Graph g;
        Var xv = g.parameter(x);
        Var y = global_avg_pool(max_pool2(relu(conv2d(xv, g.parameter(k), g.constant(b), 1, 1))));
        *out = backward(g, sum(y)).of(xv);
      }
      CHECK(bitwise_equal(first, second));
      CHECK(bitwise_equal(x, x0));
      CHECK(bitwise_equal(k, k0));
    }
  }

  TEST_CASE("graph nodes only reference earlier nodes") {
    Graph g;
    Var a = g.parameter(Tensor::scalar(1.0));
    Graph other;
    Var foreign = other.parameter(Tensor::scalar(2.0));
    CHECK_THROWS_AS(add(a, foreign), Error);
  }
}
