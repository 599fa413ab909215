#include "core/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace augdiff {

namespace {

constexpr double kProbClamp = 1e-7;

void check_pair(const Tensor& zm, const Tensor& z) {
  require(zm.rank() == 2 && zm.shape() == z.shape(), ErrorCode::ShapeMismatch,
          "contrastive loss: embeddings must share shape [B,d], got " + to_string(zm.shape()) + " and " +
              to_string(z.shape()));
  require(zm.dim(0) >= 2, ErrorCode::InvalidArgument, "contrastive loss needs a batch of at least 2 (no negatives)");
}

// Similarity matrix S = zm z^T / tau, [B,B] row-major.
std::vector<double> similarities(const Tensor& zm, const Tensor& z, double tau) {
  const auto b = zm.dim(0), d = zm.dim(1);
  std::vector<double> s(b * b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += zm[i * d + k] * z[j * d + k];
      s[i * b + j] = acc / tau;
    }
  }
  return s;
}

// log sum_{j != i} exp(S_ij), max-shifted.
double row_lse(const double* row, std::size_t b, std::size_t i) {
  double m = -INFINITY;
  for (std::size_t j = 0; j < b; ++j) {
    if (j != i) m = std::max(m, row[j]);
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < b; ++j) {
    if (j != i) acc += std::exp(row[j] - m);
  }
  return m + std::log(acc);
}

void check_labels(const Supervision& sup, std::size_t n) {
  require(sup.labels.size() == n && sup.mask.size() == n, ErrorCode::ShapeMismatch,
          "bce: " + std::to_string(n) + " predictions but " + std::to_string(sup.labels.size()) + " labels");
  for (std::size_t i = 0; i < n; ++i) {
    if (!sup.mask[i]) continue;
    require(sup.labels[i] == 0.0 || sup.labels[i] == 1.0, ErrorCode::InvalidArgument,
            "bce: label " + std::to_string(sup.labels[i]) + " is not 0 or 1");
  }
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

Var zero_scalar(Graph& graph) { return graph.constant(Tensor::scalar(0.0)); }

Var weighted_sum(Graph& graph, const std::vector<std::pair<double, Var>>& terms) {
  std::optional<Var> total;
  for (const auto& [w, v] : terms) {
    Var t = scale(v, w);
    total = total ? add(*total, t) : t;
  }
  return total ? *total : zero_scalar(graph);
}

const Supervision& need_labels(const Supervision* sup, const char* which) {
  require(sup != nullptr, ErrorCode::InvalidArgument, std::string(which) + " > 0 requires labels");
  return *sup;
}

Var need_pred(const std::optional<Var>& pred, const char* which) {
  require(pred.has_value(), ErrorCode::InvalidArgument, std::string(which) + " > 0 requires classifier outputs");
  return *pred;
}

}  // namespace

void ObjectiveConfig::validate() const {
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    require(std::isfinite(alpha[i]) && alpha[i] >= 0.0, ErrorCode::InvalidArgument,
            "alpha" + std::to_string(i) + " must be a nonnegative number");
  }
  require(std::isfinite(tau) && tau > 0.0, ErrorCode::InvalidArgument, "tau must be positive");
}

Supervision Supervision::all(std::vector<double> labels) {
  Supervision s;
  s.mask.assign(labels.size(), 1);
  s.labels = std::move(labels);
  return s;
}

std::size_t Supervision::labeled() const {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](char m) { return m != 0; }));
}

double contrastive_loss_value(const Tensor& zm, const Tensor& z, double tau) {
  check_pair(zm, z);
  require(tau > 0.0, ErrorCode::InvalidArgument, "tau must be positive");
  const auto b = zm.dim(0);
  const auto s = similarities(zm, z, tau);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) loss += row_lse(&s[i * b], b, i) - s[i * b + i];
  return loss;
}

Var row_normalize(Var z) {
  const auto& zv = z.value();
  require(zv.rank() == 2, ErrorCode::ShapeMismatch, "row_normalize expects [B,d], got " + to_string(zv.shape()));
  const auto b = zv.dim(0), d = zv.dim(1);
  Tensor out(zv.shape());
  std::vector<double> norms(b);
  for (std::size_t i = 0; i < b; ++i) {
    double n2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) n2 += zv[i * d + k] * zv[i * d + k];
    norms[i] = std::max(std::sqrt(n2), 1e-12);
    for (std::size_t k = 0; k < d; ++k) out[i * d + k] = zv[i * d + k] / norms[i];
  }
  return z.graph().record(std::move(out), {z}, [b, d, norms](const BackwardArgs& a) {
    Tensor gz(a.output.shape());
    for (std::size_t i = 0; i < b; ++i) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += a.output[i * d + k] * a.grad[i * d + k];
      for (std::size_t k = 0; k < d; ++k) gz[i * d + k] = (a.grad[i * d + k] - a.output[i * d + k] * dot) / norms[i];
    }
    a.input_grads[0] = std::move(gz);
  });
}

Var contrastive_loss(Var zm, Var z, const ObjectiveConfig& cfg) {
  cfg.validate();
  check_pair(zm.value(), z.value());
  if (cfg.use_cosine) {
    zm = row_normalize(zm);
    z = row_normalize(z);
  }
  const auto& a = zm.value();
  const auto& c = z.value();
  const auto b = a.dim(0), d = a.dim(1);
  const double tau = cfg.tau;
  const auto s = similarities(a, c, tau);

  // P_ij = softmax over j != i, P_ii = 0. dL/dS = P - I.
  std::vector<double> dlds(b * b, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double lse = row_lse(&s[i * b], b, i);
    loss += lse - s[i * b + i];
    for (std::size_t j = 0; j < b; ++j) {
      dlds[i * b + j] = (j == i) ? -1.0 : std::exp(s[i * b + j] - lse);
    }
  }

  return zm.graph().record(Tensor::scalar(loss), {zm, z}, [b, d, tau, dlds](const BackwardArgs& args) {
    const double g = args.grad[0] / tau;
    const auto& za = *args.inputs[0];
    const auto& zb = *args.inputs[1];
    if (args.needs[0]) {
      Tensor gm(za.shape());
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          const double w = g * dlds[i * b + j];
          for (std::size_t k = 0; k < d; ++k) gm[i * d + k] += w * zb[j * d + k];
        }
      }
      args.input_grads[0] = std::move(gm);
    }
    if (args.needs[1]) {
      Tensor gz(zb.shape());
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          const double w = g * dlds[i * b + j];
          for (std::size_t k = 0; k < d; ++k) gz[j * d + k] += w * za[i * d + k];
        }
      }
      args.input_grads[1] = std::move(gz);
    }
  });
}

double bce_value(const Tensor& pred, const Supervision& sup) {
  check_labels(sup, pred.numel());
  const auto n = sup.labeled();
  if (n == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    if (!sup.mask[i]) continue;
    const double p = clamp_prob(pred[i]);
    acc -= sup.labels[i] * std::log(p) + (1.0 - sup.labels[i]) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(n);
}

Var bce(Var pred, const Supervision& sup) {
  const auto& pv = pred.value();
  const double loss = bce_value(pv, sup);
  const auto n = sup.labeled();
  if (n == 0) return zero_scalar(pred.graph());
  return pred.graph().record(Tensor::scalar(loss), {pred}, [sup, n](const BackwardArgs& a) {
    const auto& p = *a.inputs[0];
    Tensor gp(p.shape());
    const double g = a.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      // Clamped predictions have zero derivative.
      if (!sup.mask[i] || p[i] < kProbClamp || p[i] > 1.0 - kProbClamp) continue;
      const double y = sup.labels[i];
      gp[i] = g * (-y / p[i] + (1.0 - y) / (1.0 - p[i]));
    }
    a.input_grads[0] = std::move(gp);
  });
}

Objective m_objective(const BranchOutputs& out, const Supervision* sup, const ObjectiveConfig& cfg) {
  cfg.validate();
  Graph& graph = out.zm.graph();
  Objective obj;
  std::vector<std::pair<double, Var>> terms;
  if (cfg.alpha[0] > 0.0) {
    Var con = contrastive_loss(out.zm, out.z, cfg);
    obj.contrastive = con.value().item();
    terms.emplace_back(-cfg.alpha[0], con);
  }
  if (cfg.alpha[1] > 0.0) {
    Var b = bce(need_pred(out.pred_m, "alpha1"), need_labels(sup, "alpha1"));
    obj.supervised = b.value().item();
    terms.emplace_back(cfg.alpha[1], b);
  }
  obj.total = weighted_sum(graph, terms);
  return obj;
}

Objective encoder_objective(const BranchOutputs& out, const Supervision* sup, const ObjectiveConfig& cfg) {
  cfg.validate();
  Graph& graph = out.zm.graph();
  Objective obj;
  std::vector<std::pair<double, Var>> terms;
  if (cfg.alpha[2] > 0.0) {
    Var con = contrastive_loss(out.zm, out.z, cfg);
    obj.contrastive = con.value().item();
    terms.emplace_back(cfg.alpha[2], con);
  }
  if (cfg.alpha[3] > 0.0) {
    Var b = bce(need_pred(out.pred_m, "alpha3"), need_labels(sup, "alpha3"));
    obj.supervised += b.value().item();
    terms.emplace_back(cfg.alpha[3], b);
  }
  if (cfg.alpha[4] > 0.0) {
    Var b = bce(need_pred(out.pred, "alpha4"), need_labels(sup, "alpha4"));
    obj.supervised += b.value().item();
    terms.emplace_back(cfg.alpha[4], b);
  }
  obj.total = weighted_sum(graph, terms);
  return obj;
}

}  // namespace augdiff
