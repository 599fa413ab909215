#include "core/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <numeric>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"

namespace augdiff {

namespace {

constexpr double kAdamBeta1 = 0.9, kAdamBeta2 = 0.999, kAdamEps = 1e-8;
constexpr std::uint64_t kSplitStream = 0x70726f6265ULL;

void check_both_classes(std::span<const int> labels, const char* who) {
  std::size_t pos = 0;
  for (int y : labels) {
    require(y == 0 || y == 1, ErrorCode::InvalidArgument, std::string(who) + ": labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  require(pos > 0 && pos < labels.size(), ErrorCode::InvalidArgument,
          std::string(who) + ": both classes must be present");
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorCode::ShapeMismatch, "roc_auc: scores and labels differ in length");
  check_both_classes(labels, "roc_auc");
  const auto n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks, ties sharing their average rank. Twice the ranks
  // keeps every quantity an integer.
  std::uint64_t rank2_pos = 0, n_pos = 0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi + 1 < n && scores[idx[hi + 1]] == scores[idx[lo]]) ++hi;
    const std::uint64_t avg2 = (lo + 1) + (hi + 1);  // 2 * mean rank of the tie group
    for (std::size_t k = lo; k <= hi; ++k) {
      if (labels[idx[k]] == 1) {
        rank2_pos += avg2;
        ++n_pos;
      }
    }
    lo = hi + 1;
  }
  const std::uint64_t n_neg = n - n_pos;
  // 2U = 2 * (rank sum - n_pos (n_pos + 1) / 2) counts concordant pairs twice and ties once.
  const std::uint64_t u2 = rank2_pos - n_pos * (n_pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_pos * n_neg));
}

Tensor extract_features(const ParameterStore& store, const Tensor& images, std::size_t batch) {
  require(batch >= 1, ErrorCode::InvalidArgument, "feature batch must be positive");
  const auto arch = infer_arch(store);
  require(images.rank() == 4, ErrorCode::ShapeMismatch, "expected images [N,1,s,s], got " + to_string(images.shape()));
  const auto n = images.dim(0);
  const auto plane = images.numel() / std::max<std::size_t>(n, 1);
  const auto d = arch.latent_dim();
  Tensor out({n, d});
  for (std::size_t start = 0; start < n; start += batch) {
    const auto count = std::min(batch, n - start);
    Shape shape = images.shape();
    shape[0] = count;
    Tensor chunk(shape, std::vector<double>(images.ptr() + start * plane, images.ptr() + (start + count) * plane));
    const auto feats = encode(store, arch, chunk);
    std::copy_n(feats.ptr(), count * d, out.ptr() + start * d);
  }
  return out;
}

ProbeSplit probe_split(std::span<const int> labels, std::uint64_t seed, std::size_t k) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == 1].push_back(i);
  Rng rng = Rng::stream(mix_seed(seed, kSplitStream), k);
  ProbeSplit split;
  for (auto& members : by_class) {
    rng.shuffle(members);
    const auto half = members.size() / 2;
    split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(half));
    split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(half), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<double> fit_probe(const Tensor& features, std::span<const int> labels, const ProbeSplit& split,
                              const LinearEvalOptions& opts) {
  require(features.rank() == 2 && features.dim(0) == labels.size(), ErrorCode::ShapeMismatch,
          "linear eval: features " + to_string(features.shape()) + " do not match " + std::to_string(labels.size()) +
              " labels");
  const auto d = features.dim(1);
  const auto& tr = split.train;

  std::vector<double> mu(d, 0.0), sd(d, 1.0);
  if (opts.standardize) {
    for (auto i : tr) {
      for (std::size_t k = 0; k < d; ++k) mu[k] += features[i * d + k];
    }
    for (auto& m : mu) m /= static_cast<double>(tr.size());
    std::vector<double> var(d, 0.0);
    for (auto i : tr) {
      for (std::size_t k = 0; k < d; ++k) var[k] += std::pow(features[i * d + k] - mu[k], 2);
    }
    for (std::size_t k = 0; k < d; ++k) {
      const double s = std::sqrt(var[k] / static_cast<double>(tr.size()));
      sd[k] = s > 1e-12 ? s : 1.0;
    }
  }
  auto x = [&](std::size_t i, std::size_t k) { return (features[i * d + k] - mu[k]) / sd[k]; };

  // Parameters [w_0..w_{d-1}, b], zero-initialized.
  std::vector<double> theta(d + 1, 0.0), m(d + 1, 0.0), v(d + 1, 0.0), grad(d + 1);
  for (std::size_t step = 1; step <= opts.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (auto i : tr) {
      double z = theta[d];
      for (std::size_t k = 0; k < d; ++k) z += theta[k] * x(i, k);
      const double err = stable_sigmoid(z) - static_cast<double>(labels[i]);
      for (std::size_t k = 0; k < d; ++k) grad[k] += err * x(i, k);
      grad[d] += err;
    }
    const double b1t = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
    const double b2t = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
    for (std::size_t k = 0; k <= d; ++k) {
      const double g = grad[k] / static_cast<double>(tr.size());
      m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * g;
      v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * g * g;
      theta[k] -= opts.lr * (m[k] / b1t) / (std::sqrt(v[k] / b2t) + kAdamEps);
    }
  }

  std::vector<double> scores;
  scores.reserve(split.test.size());
  for (auto i : split.test) {
    double z = theta[d];
    for (std::size_t k = 0; k < d; ++k) z += theta[k] * x(i, k);
    scores.push_back(z);
  }
  return scores;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  require(!values.empty(), ErrorCode::InvalidArgument, "mean_std of an empty list");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

EvalReport linear_eval(const Tensor& features, std::span<const int> labels, const LinearEvalOptions& opts) {
  require(opts.splits >= 1 && opts.steps >= 1 && opts.lr > 0.0, ErrorCode::InvalidArgument,
          "linear eval needs splits >= 1, steps >= 1 and lr > 0");
  check_both_classes(labels, "linear eval");
  EvalReport report;
  for (std::size_t k = 0; k < opts.splits; ++k) {
    const auto split = probe_split(labels, opts.seed, k);
    std::vector<int> test_labels;
    for (auto i : split.test) test_labels.push_back(labels[i]);
    std::vector<int> train_labels;
    for (auto i : split.train) train_labels.push_back(labels[i]);
    check_both_classes(train_labels, "linear eval probe-train split");
    check_both_classes(test_labels, "linear eval probe-test split");
    const auto scores = fit_probe(features, labels, split, opts);
    report.split_aucs.push_back(roc_auc(scores, test_labels));
  }
  std::tie(report.auc_mean, report.auc_std) = mean_std(report.split_aucs);
  return report;
}

EvalReport evaluate_checkpoint(const ParameterStore& store, const Dataset& pool, const LinearEvalOptions& opts) {
  const auto features = extract_features(store, pool.images);
  return linear_eval(features, pool.labels, opts);
}

void require_disjoint_pools(std::span<const std::uint64_t> pretrain, std::span<const std::uint64_t> eval) {
  const std::unordered_set<std::uint64_t> seen(pretrain.begin(), pretrain.end());
  std::size_t shared = 0;
  std::uint64_t first = 0;
  for (auto g : eval) {
    if (seen.count(g) && shared++ == 0) first = g;
  }
  require(shared == 0, ErrorCode::InvalidArgument,
          "evaluation pool shares " + std::to_string(shared) + " group ids with the pre-training pool (first " +
              std::to_string(first) + "); generate it with a different --group-offset");
}

}  // namespace augdiff
