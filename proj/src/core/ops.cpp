#include "core/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <memory>

#include "core/error.hpp"

namespace augdiff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

struct ConvGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, k, stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_ch * k * k; }
  std::size_t columns() const { return batch * out_h * out_w; }
};

void im2col(const double* x, const ConvGeometry& g, RowMat& col) {
  col.resize(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.columns()));
  const auto hw = g.height * g.width;
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = col.row(static_cast<Eigen::Index>((c * g.k + ki) * g.k + kj)).data();
        for (std::size_t b = 0; b < g.batch; ++b) {
          const double* plane = x + (b * g.in_ch + c) * hw;
          for (std::size_t oi = 0; oi < g.out_h; ++oi) {
            double* dst = row + (b * g.out_h + oi) * g.out_w;
            auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.height)) {
              std::fill(dst, dst + g.out_w, 0.0);
              continue;
            }
            const double* src = plane + static_cast<std::size_t>(ii) * g.width;
            for (std::size_t oj = 0; oj < g.out_w; ++oj) {
              auto jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              dst[oj] = (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[jj];
            }
          }
        }
      }
    }
  }
}

void col2im(const RowMat& col, const ConvGeometry& g, double* dx) {
  const auto hw = g.height * g.width;
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = col.row(static_cast<Eigen::Index>((c * g.k + ki) * g.k + kj)).data();
        for (std::size_t b = 0; b < g.batch; ++b) {
          double* plane = dx + (b * g.in_ch + c) * hw;
          for (std::size_t oi = 0; oi < g.out_h; ++oi) {
            auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.height)) continue;
            const double* src = row + (b * g.out_h + oi) * g.out_w;
            double* dst = plane + static_cast<std::size_t>(ii) * g.width;
            for (std::size_t oj = 0; oj < g.out_w; ++oj) {
              auto jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
              if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(g.width)) dst[jj] += src[oj];
            }
          }
        }
      }
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch,
          std::string(op) + ": shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

}  // namespace

double stable_sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

Var conv2d(Var input, Var kernel, Var bias, std::size_t stride, std::size_t pad) {
  const auto& x = input.value();
  const auto& w = kernel.value();
  const auto& b = bias.value();
  require(x.rank() == 4, ErrorCode::ShapeMismatch, "conv2d: input must be [B,C,H,W], got " + to_string(x.shape()));
  require(w.rank() == 4 && w.dim(2) == w.dim(3), ErrorCode::ShapeMismatch,
          "conv2d: kernel must be [C',C,k,k], got " + to_string(w.shape()));
  require(w.dim(1) == x.dim(1), ErrorCode::ShapeMismatch,
          "conv2d: kernel expects " + std::to_string(w.dim(1)) + " channels, input has " + std::to_string(x.dim(1)));
  require(b.rank() == 1 && b.dim(0) == w.dim(0), ErrorCode::ShapeMismatch,
          "conv2d: bias must be [" + std::to_string(w.dim(0)) + "], got " + to_string(b.shape()));
  require(stride >= 1, ErrorCode::InvalidArgument, "conv2d: stride must be >= 1");

  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad, 0, 0};
  require(g.height + 2 * pad >= g.k && g.width + 2 * pad >= g.k, ErrorCode::ShapeMismatch,
          "conv2d: kernel larger than padded input " + to_string(x.shape()));
  g.out_h = (g.height + 2 * pad - g.k) / stride + 1;
  g.out_w = (g.width + 2 * pad - g.k) / stride + 1;

  auto col = std::make_shared<RowMat>();
  im2col(x.ptr(), g, *col);
  ConstMatMap wmat(w.ptr(), static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(g.patch()));
  RowMat out(static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(g.columns()));
  out.noalias() = wmat * *col;

  Tensor y({g.batch, g.out_ch, g.out_h, g.out_w});
  const auto ohw = g.out_h * g.out_w;
  for (std::size_t bi = 0; bi < g.batch; ++bi) {
    for (std::size_t co = 0; co < g.out_ch; ++co) {
      const double* src = out.row(static_cast<Eigen::Index>(co)).data() + bi * ohw;
      double* dst = y.ptr() + (bi * g.out_ch + co) * ohw;
      for (std::size_t k = 0; k < ohw; ++k) dst[k] = src[k] + b[co];
    }
  }
  if (!kernel.requires_grad()) col.reset();

  return input.graph().record(std::move(y), {input, kernel, bias}, [g, col](const BackwardArgs& a) {
    const auto ohw = g.out_h * g.out_w;
    RowMat gmat(static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(g.columns()));
    for (std::size_t bi = 0; bi < g.batch; ++bi) {
      for (std::size_t co = 0; co < g.out_ch; ++co) {
        const double* src = a.grad.ptr() + (bi * g.out_ch + co) * ohw;
        std::copy(src, src + ohw, gmat.row(static_cast<Eigen::Index>(co)).data() + bi * ohw);
      }
    }
    const auto& w = *a.inputs[1];
    if (a.needs[0]) {
      ConstMatMap wmat(w.ptr(), static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(g.patch()));
      RowMat dcol = wmat.transpose() * gmat;
      Tensor dx(a.inputs[0]->shape());
      col2im(dcol, g, dx.ptr());
      a.input_grads[0] = std::move(dx);
    }
    if (a.needs[1]) {
      Tensor dw(w.shape());
      MatMap dwmat(dw.ptr(), static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(g.patch()));
      dwmat.noalias() = gmat * col->transpose();
      a.input_grads[1] = std::move(dw);
    }
    if (a.needs[2]) {
      Tensor db({g.out_ch});
      for (std::size_t co = 0; co < g.out_ch; ++co) db[co] = gmat.row(static_cast<Eigen::Index>(co)).sum();
      a.input_grads[2] = std::move(db);
    }
  });
}

Var dense(Var input, Var weights, Var bias) {
  const auto& x = input.value();
  const auto& w = weights.value();
  const auto& b = bias.value();
  require(x.rank() == 2 && w.rank() == 2 && w.dim(1) == x.dim(1), ErrorCode::ShapeMismatch,
          "dense: input " + to_string(x.shape()) + " incompatible with weights " + to_string(w.shape()));
  require(b.rank() == 1 && b.dim(0) == w.dim(0), ErrorCode::ShapeMismatch,
          "dense: bias " + to_string(b.shape()) + " incompatible with weights " + to_string(w.shape()));
  const auto rows = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(x.dim(1));
  const auto out = static_cast<Eigen::Index>(w.dim(0));

  Tensor y({x.dim(0), w.dim(0)});
  MatMap ymat(y.ptr(), rows, out);
  ymat.noalias() = ConstMatMap(x.ptr(), rows, in) * ConstMatMap(w.ptr(), out, in).transpose();
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < out; ++c) ymat(r, c) += b[static_cast<std::size_t>(c)];
  }

  return input.graph().record(std::move(y), {input, weights, bias}, [rows, in, out](const BackwardArgs& a) {
    ConstMatMap g(a.grad.ptr(), rows, out);
    if (a.needs[0]) {
      Tensor dx(a.inputs[0]->shape());
      MatMap(dx.ptr(), rows, in).noalias() = g * ConstMatMap(a.inputs[1]->ptr(), out, in);
      a.input_grads[0] = std::move(dx);
    }
    if (a.needs[1]) {
      Tensor dw(a.inputs[1]->shape());
      MatMap(dw.ptr(), out, in).noalias() = g.transpose() * ConstMatMap(a.inputs[0]->ptr(), rows, in);
      a.input_grads[1] = std::move(dw);
    }
    if (a.needs[2]) {
      Tensor db(a.inputs[2]->shape());
      for (Eigen::Index c = 0; c < out; ++c) db[static_cast<std::size_t>(c)] = g.col(c).sum();
      a.input_grads[2] = std::move(db);
    }
  });
}

Var relu(Var x) {
  Tensor y = x.value();
  for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
  return x.graph().record(std::move(y), {x}, [](const BackwardArgs& a) {
    Tensor dx(a.grad.shape());
    const auto& in = *a.inputs[0];
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = in[i] > 0.0 ? a.grad[i] : 0.0;
    a.input_grads[0] = std::move(dx);
  });
}

Var sigmoid(Var x) {
  Tensor y = x.value();
  for (auto& v : y.data()) v = stable_sigmoid(v);
  return x.graph().record(std::move(y), {x}, [](const BackwardArgs& a) {
    Tensor dx(a.grad.shape());
    for (std::size_t i = 0; i < dx.numel(); ++i) {
      double s = a.output[i];
      dx[i] = a.grad[i] * s * (1.0 - s);
    }
    a.input_grads[0] = std::move(dx);
  });
}

Var max_pool2(Var x) {
  const auto& in = x.value();
  require(in.rank() == 4, ErrorCode::ShapeMismatch, "max_pool2: input must be [B,C,H,W], got " + to_string(in.shape()));
  const auto h = in.dim(2), w = in.dim(3);
  require(h % 2 == 0 && w % 2 == 0, ErrorCode::ShapeMismatch, "max_pool2: spatial size must be even, got " + to_string(in.shape()));
  const auto planes = in.dim(0) * in.dim(1);
  const auto oh = h / 2, ow = w / 2;
  Tensor y({in.dim(0), in.dim(1), oh, ow});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(y.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.ptr() + p * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (2 * i) * w + 2 * j;
        for (std::size_t cand : {(2 * i) * w + 2 * j + 1, (2 * i + 1) * w + 2 * j, (2 * i + 1) * w + 2 * j + 1}) {
          if (src[cand] > src[best]) best = cand;
        }
        const auto o = (p * oh + i) * ow + j;
        y[o] = src[best];
        (*argmax)[o] = static_cast<std::uint32_t>(p * h * w + best);
      }
    }
  }
  return x.graph().record(std::move(y), {x}, [argmax](const BackwardArgs& a) {
    Tensor dx(a.inputs[0]->shape());
    for (std::size_t o = 0; o < a.grad.numel(); ++o) dx[(*argmax)[o]] += a.grad[o];
    a.input_grads[0] = std::move(dx);
  });
}

Var global_avg_pool(Var x) {
  const auto& in = x.value();
  require(in.rank() == 4, ErrorCode::ShapeMismatch, "global_avg_pool: input must be [B,C,H,W], got " + to_string(in.shape()));
  const auto hw = in.dim(2) * in.dim(3);
  Tensor y({in.dim(0), in.dim(1)});
  for (std::size_t p = 0; p < y.numel(); ++p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < hw; ++k) acc += in[p * hw + k];
    y[p] = acc / static_cast<double>(hw);
  }
  return x.graph().record(std::move(y), {x}, [hw](const BackwardArgs& a) {
    Tensor dx(a.inputs[0]->shape());
    for (std::size_t p = 0; p < a.grad.numel(); ++p) {
      const double g = a.grad[p] / static_cast<double>(hw);
      for (std::size_t k = 0; k < hw; ++k) dx[p * hw + k] = g;
    }
    a.input_grads[0] = std::move(dx);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  y.accumulate(b.value());
  return a.graph().record(std::move(y), {a, b}, [](const BackwardArgs& args) {
    if (args.needs[0]) args.input_grads[0] = args.grad;
    if (args.needs[1]) args.input_grads[1] = args.grad;
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= b.value()[i];
  return a.graph().record(std::move(y), {a, b}, [](const BackwardArgs& args) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!args.needs[k]) continue;
      Tensor d(args.grad.shape());
      const auto& other = *args.inputs[1 - k];
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] = args.grad[i] * other[i];
      args.input_grads[k] = std::move(d);
    }
  });
}

Var scale(Var x, double factor) {
  Tensor y = x.value();
  for (auto& v : y.data()) v *= factor;
  return x.graph().record(std::move(y), {x}, [factor](const BackwardArgs& a) {
    Tensor d = a.grad;
    for (auto& v : d.data()) v *= factor;
    a.input_grads[0] = std::move(d);
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return x.graph().record(Tensor::scalar(acc), {x}, [](const BackwardArgs& a) {
    a.input_grads[0] = Tensor::full(a.inputs[0]->shape(), a.grad[0]);
  });
}

}  // namespace augdiff
