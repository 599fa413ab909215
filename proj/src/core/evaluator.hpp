#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "core/models.hpp"
#include "core/synthdata.hpp"

namespace augdiff {

/// Area under the ROC curve as the Mann-Whitney statistic: the share of
/// (positive, negative) pairs in which the positive scores higher, ties
/// counted one half. Both classes must be present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Encoder latents f(images) [N, latent] with the projection head dropped.
/// Processed in chunks of `batch` images without recording gradients.
Tensor extract_features(const ParameterStore& store, const Tensor& images, std::size_t batch = 128);

struct LinearEvalOptions {
  std::size_t splits = 3;
  std::size_t steps = 200;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Standardize features with probe-train statistics before fitting.
  bool standardize = true;
};

struct EvalReport {
  double auc_mean = 0.0;
  double auc_std = 0.0;  // sample standard deviation over splits
  std::vector<double> split_aucs;
  std::vector<std::size_t> epochs;
};

/// Trains a dense+sigmoid probe on features [N,d] with full-batch Adam on BCE
/// and scores it on held-out data. Each split is a seeded, class-stratified,
/// disjoint 50/50 partition into probe-train and probe-test halves.
EvalReport linear_eval(const Tensor& features, std::span<const int> labels, const LinearEvalOptions& opts);

/// Probe-train and probe-test index sets of split `k`.
struct ProbeSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
ProbeSplit probe_split(std::span<const int> labels, std::uint64_t seed, std::size_t k);

/// Probe scores on `test` after fitting on `train`.
std::vector<double> fit_probe(const Tensor& features, std::span<const int> labels, const ProbeSplit& split,
                              const LinearEvalOptions& opts);

/// Linear evaluation of a checkpoint's encoder on a labeled pool.
EvalReport evaluate_checkpoint(const ParameterStore& store, const Dataset& pool, const LinearEvalOptions& opts);

/// Rejects an evaluation pool that shares group ids with the pre-training pool.
void require_disjoint_pools(std::span<const std::uint64_t> pretrain, std::span<const std::uint64_t> eval);

/// Sample mean and (n-1)-normalized standard deviation; std is 0 for one value.
std::pair<double, double> mean_std(std::span<const double> values);

}  // namespace augdiff
