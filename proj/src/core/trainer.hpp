#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "core/config.hpp"
#include "core/models.hpp"
#include "core/objectives.hpp"
#include "core/rng.hpp"
#include "core/synthdata.hpp"
#include "core/transforms.hpp"

namespace augdiff {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One bias-corrected Adam update of every slot under `prefix` from its
/// accumulated gradient, which is then cleared.
void adam_step(ParameterStore& store, std::string_view prefix, double lr);

/// Lambda batch [B,7] with i.i.d. U[0,1) entries.
Tensor sample_random_lambda(Rng& rng, std::size_t batch);

/// Lambda batch [B,7] where a fair coin per image and transform decides
/// inclusion. Included transforms get uniform parameters, excluded ones
/// their identity value (crop: centered at 0.5, 0.5).
Tensor sample_simclr_lambda(Rng& rng, std::size_t batch);

/// Class-stratified subset of round(fraction * N) indices, sorted. Each class
/// must contribute at least two samples.
std::vector<std::size_t> select_supervised_subset(std::span<const int> labels, double fraction, Rng& rng);

/// J_M of one batch recorded on `graph`, with M's weights as the only
/// parameters: M(X) gives lambda, X_M = T_lambda(X), and f, g, p are frozen.
struct MObjectiveGraph {
  Binding m;
  Objective objective;
};
MObjectiveGraph build_m_objective(Graph& graph, const ParameterStore& store, const ArchSpec& arch,
                                  const Tensor& images, const Supervision* sup, const ObjectiveConfig& cfg,
                                  const transforms::CompositionOrder& order,
                                  const transforms::NoiseRealization& eps);

/// Networks of a config with their seeded initial weights (M included for M
/// strategies), exactly as training starts from.
ParameterStore initial_store(const TrainConfig& cfg);

struct StepMetrics {
  double loss_con = 0.0;
  double loss_sup = 0.0;
};

struct BatchRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  StepMetrics metrics;
  double seconds = 0.0;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double mean_con = 0.0;
  double mean_sup = 0.0;
  double seconds = 0.0;
  std::size_t batches = 0;
};

/// Alternating optimizer of the encoder (f, g, p) and, for M strategies, the
/// transformation network. Holds a reference to the dataset.
class Trainer {
 public:
  Trainer(TrainConfig cfg, const Dataset& data);

  const TrainConfig& config() const noexcept { return cfg_; }
  ParameterStore& store() noexcept { return store_; }
  const ParameterStore& store() const noexcept { return store_; }
  /// Indices whose labels training may read (empty for unsupervised strategies).
  const std::vector<std::size_t>& labeled() const noexcept { return labeled_; }

  /// Labels of a batch, masked to the supervised subset.
  Supervision supervision(const std::vector<std::size_t>& batch) const;

  /// Updates M only, on J_M for one batch.
  StepMetrics m_step(const std::vector<std::size_t>& batch, Rng& rng);
  /// Updates f, g, p on J_E with a transformed view drawn per strategy.
  StepMetrics encoder_step(const std::vector<std::size_t>& batch, Rng& rng);
  /// Updates f and p on BCE of an augmented view; every image must be labeled.
  StepMetrics supervised_step(const std::vector<std::size_t>& batch, Rng& rng);

  /// Seeded shuffle of the epoch's pool (the labeled subset for the
  /// supervised baseline) cut into batches; a trailing batch below two images
  /// is dropped.
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;

  /// Runs one epoch (numbered from 1). Per batch: M step then encoder step for
  /// M strategies, encoder step alone for the random ones, the supervised
  /// step for the baseline.
  std::vector<BatchRecord> run_epoch(std::size_t epoch);

  /// Lambda the encoder step would use for these images.
  Tensor view_lambda(const Tensor& images, Rng& rng) const;

 private:
  TrainConfig cfg_;
  const Dataset* data_;
  ParameterStore store_;
  std::vector<std::size_t> labeled_;
  std::vector<char> is_labeled_;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path final_checkpoint;
  std::size_t rows = 0;
};

using EpochCallback = std::function<void(const EpochSummary&)>;

/// Full training run into `run_dir`: config.txt (written first),
/// train_groups.txt (group ids of the pre-training pool), metrics.csv,
/// checkpoints/epoch_NNNN.ckpt at epoch 0, every checkpoint_every epochs and
/// at the end, and final.ckpt.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& run_dir,
                  const EpochCallback& on_epoch = {});

std::filesystem::path epoch_checkpoint_path(const std::filesystem::path& run_dir, std::size_t epoch);

}  // namespace augdiff
