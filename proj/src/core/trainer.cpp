#include "core/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "core/transform_ops.hpp"

namespace augdiff {

namespace {

namespace tf = transforms;

constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kSubsetStream = 0x737562ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kStepStream = 0x73746570ULL;

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void adam_step(ParameterStore& store, std::string_view prefix, double lr) {
  for (auto& s : store.slots()) {
    if (!starts_with(s.name, prefix)) continue;
    ++s.step;
    const double t = static_cast<double>(s.step);
    const double c1 = 1.0 - std::pow(kAdamBeta1, t);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t);
    auto w = s.value.data();
    auto g = s.grad.data();
    auto m = s.adam_m.data();
    auto v = s.adam_v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
      g[i] = 0.0;
    }
  }
}

Tensor sample_random_lambda(Rng& rng, std::size_t batch) {
  require(batch >= 1, ErrorCode::InvalidArgument, "lambda batch must be nonempty");
  return uniform(rng, 0.0, 1.0, {batch, tf::kParamCount});
}

Tensor sample_simclr_lambda(Rng& rng, std::size_t batch) {
  require(batch >= 1, ErrorCode::InvalidArgument, "lambda batch must be nonempty");
  Tensor out({batch, tf::kParamCount});
  const tf::TransformParams identity;
  const tf::CompositionOrder order;
  for (std::size_t b = 0; b < batch; ++b) {
    double* row = out.ptr() + b * tf::kParamCount;
    for (auto kind : order.kinds()) {
      const bool include = rng.coin();
      for (auto p : tf::params_of(kind)) row[p] = include ? rng.uniform() : identity[p];
    }
  }
  return out;
}

std::vector<std::size_t> select_supervised_subset(std::span<const int> labels, double fraction, Rng& rng) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::InvalidArgument, "supervision fraction must lie in (0,1]");
  const auto n = labels.size();
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < n; ++i) {
    require(labels[i] == 0 || labels[i] == 1, ErrorCode::InvalidArgument, "labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  auto k_pos = static_cast<std::size_t>(
      std::llround(static_cast<double>(count) * static_cast<double>(by_class[1].size()) / static_cast<double>(n)));
  k_pos = std::min(k_pos, by_class[1].size());
  const auto k_neg = count - k_pos;
  require(k_pos >= 2 && k_neg >= 2 && k_neg <= by_class[0].size(), ErrorCode::InvalidArgument,
          "supervised subset of " + std::to_string(count) + " images leaves " + std::to_string(k_pos) +
              " positives and " + std::to_string(k_neg) + " negatives; each class needs at least 2");
  std::vector<std::size_t> out;
  const std::size_t take[2] = {k_neg, k_pos};
  for (int c = 0; c < 2; ++c) {
    auto members = by_class[c];
    rng.shuffle(members);
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take[c]));
  }
  std::sort(out.begin(), out.end());
  return out;
}

MObjectiveGraph build_m_objective(Graph& graph, const ParameterStore& store, const ArchSpec& arch,
                                  const Tensor& images, const Supervision* sup, const ObjectiveConfig& cfg,
                                  const tf::CompositionOrder& order, const tf::NoiseRealization& eps) {
  Binding m(graph, store, "m.", true);
  Binding f(graph, store, "f.", false);
  Binding g(graph, store, "g.", false);
  Binding p(graph, store, "p.", false);
  const EncoderF enc(arch);
  const ProjectionHeadG head(arch);

  Var x = graph.constant(images);
  Var lambda = TransformNetM(arch).forward(m, x);
  Var hm = enc.forward(f, tf::compose_op(x, lambda, order, eps));
  BranchOutputs out{head.forward(g, hm), head.forward(g, enc.forward(f, x)), std::nullopt, std::nullopt};
  if (cfg.alpha[1] > 0.0) out.pred_m = ClassifierP(arch).forward(p, hm);
  return {m, m_objective(out, sup, cfg)};
}

ParameterStore initial_store(const TrainConfig& cfg) {
  Networks nets(cfg.arch);
  auto store = nets.make_store(uses_m(cfg.strategy));
  Rng init = Rng::stream(cfg.seed, kInitStream);
  init_weights(store, init);
  return store;
}

// ---- Trainer ----

Trainer::Trainer(TrainConfig cfg, const Dataset& data) : cfg_(std::move(cfg)), data_(&data) {
  cfg_.validate();
  data.validate();
  require(data.image_size() % cfg_.arch.spatial_divisor() == 0, ErrorCode::InvalidArgument,
          "image size " + std::to_string(data.image_size()) + " is not divisible by " +
              std::to_string(cfg_.arch.spatial_divisor()) + " as the encoder requires");
  store_ = initial_store(cfg_);

  is_labeled_.assign(data.size(), 0);
  if (uses_labels(cfg_.strategy)) {
    const double fraction =
        cfg_.strategy == Strategy::Supervised ? cfg_.label_fraction : cfg_.supervision_fraction;
    Rng rng = Rng::stream(cfg_.seed, kSubsetStream);
    labeled_ = select_supervised_subset(data.labels, fraction, rng);
    for (auto i : labeled_) is_labeled_[i] = 1;
  }
}

Supervision Trainer::supervision(const std::vector<std::size_t>& batch) const {
  Supervision sup;
  for (auto i : batch) {
    sup.labels.push_back(static_cast<double>(data_->labels[i]));
    sup.mask.push_back(is_labeled_[i]);
  }
  return sup;
}

Tensor Trainer::view_lambda(const Tensor& images, Rng& rng) const {
  const auto b = images.dim(0);
  switch (cfg_.strategy) {
    case Strategy::SelfsupM:
    case Strategy::MSup:
      return transform_params(store_, cfg_.arch, images);
    case Strategy::Random:
    case Strategy::RandomSup:
      return sample_random_lambda(rng, b);
    case Strategy::SimclrBase:
    case Strategy::Supervised:
      return sample_simclr_lambda(rng, b);
  }
  throw Error(ErrorCode::Runtime, "unhandled strategy");
}

StepMetrics Trainer::m_step(const std::vector<std::size_t>& batch, Rng& rng) {
  require(uses_m(cfg_.strategy), ErrorCode::InvalidArgument,
          "m_step: strategy " + std::string(strategy_name(cfg_.strategy)) + " has no transformation network");
  const auto images = data_->gather(batch);
  const auto sup = supervision(batch);
  const auto eps = tf::NoiseRealization::sample(rng, images.shape());

  Graph graph;
  const auto built = build_m_objective(graph, store_, cfg_.arch, images, uses_labels(cfg_.strategy) ? &sup : nullptr,
                                       cfg_.objective, cfg_.order, eps);
  const auto& obj = built.objective;
  if (obj.total.requires_grad()) {
    const auto grads = backward(graph, obj.total);
    built.m.collect(grads, store_);
  }
  adam_step(store_, "m.", cfg_.lr_m);
  return {obj.contrastive, obj.supervised};
}

StepMetrics Trainer::encoder_step(const std::vector<std::size_t>& batch, Rng& rng) {
  require(cfg_.strategy != Strategy::Supervised, ErrorCode::InvalidArgument,
          "encoder_step: the supervised baseline uses supervised_step");
  const auto images = data_->gather(batch);
  const auto sup = supervision(batch);
  const auto lambda = view_lambda(images, rng);
  const auto eps = tf::NoiseRealization::sample(rng, images.shape());

  Graph graph;
  Var view = tf::compose_op(graph.constant(images), graph.constant(lambda), cfg_.order, eps);
  Binding f(graph, store_, "f.", true);
  Binding g(graph, store_, "g.", true);
  Binding p(graph, store_, "p.", true);
  const EncoderF enc(cfg_.arch);
  const ProjectionHeadG head(cfg_.arch);
  const ClassifierP cls(cfg_.arch);

  Var hm = enc.forward(f, view);
  Var h = enc.forward(f, graph.constant(images));
  BranchOutputs out{head.forward(g, hm), head.forward(g, h), std::nullopt, std::nullopt};
  if (cfg_.objective.alpha[3] > 0.0) out.pred_m = cls.forward(p, hm);
  if (cfg_.objective.alpha[4] > 0.0) out.pred = cls.forward(p, h);

  const auto obj = encoder_objective(out, uses_labels(cfg_.strategy) ? &sup : nullptr, cfg_.objective);
  if (obj.total.requires_grad()) {
    const auto grads = backward(graph, obj.total);
    f.collect(grads, store_);
    g.collect(grads, store_);
    p.collect(grads, store_);
  }
  adam_step(store_, "f.", cfg_.lr_f);
  adam_step(store_, "g.", cfg_.lr_f);
  adam_step(store_, "p.", cfg_.lr_f);
  return {obj.contrastive, obj.supervised};
}

StepMetrics Trainer::supervised_step(const std::vector<std::size_t>& batch, Rng& rng) {
  const auto sup = supervision(batch);
  require(!batch.empty() && sup.labeled() == batch.size(), ErrorCode::InvalidArgument,
          "supervised_step: batch contains unlabeled images");
  const auto images = data_->gather(batch);
  const auto lambda = sample_simclr_lambda(rng, batch.size());
  const auto eps = tf::NoiseRealization::sample(rng, images.shape());

  Graph graph;
  Var view = tf::compose_op(graph.constant(images), graph.constant(lambda), cfg_.order, eps);
  Binding f(graph, store_, "f.", true);
  Binding p(graph, store_, "p.", true);
  Var pred = ClassifierP(cfg_.arch).forward(p, EncoderF(cfg_.arch).forward(f, view));
  Var loss = bce(pred, sup);
  const auto grads = backward(graph, loss);
  f.collect(grads, store_);
  p.collect(grads, store_);
  adam_step(store_, "f.", cfg_.lr_f);
  adam_step(store_, "p.", cfg_.lr_f);
  return {0.0, loss.value().item()};
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(std::size_t epoch) const {
  std::vector<std::size_t> pool;
  if (cfg_.strategy == Strategy::Supervised) {
    pool = labeled_;
  } else {
    pool.resize(data_->size());
    std::iota(pool.begin(), pool.end(), 0);
  }
  Rng rng = Rng::stream(mix_seed(cfg_.seed, kShuffleStream), epoch);
  rng.shuffle(pool);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < pool.size(); start += cfg_.batch_size) {
    const auto end = std::min(pool.size(), start + cfg_.batch_size);
    if (end - start < 2) break;
    batches.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(start),
                         pool.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<BatchRecord> Trainer::run_epoch(std::size_t epoch) {
  std::vector<BatchRecord> rows;
  const auto batches = epoch_batches(epoch);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = Rng::stream(mix_seed(mix_seed(cfg_.seed, kStepStream), epoch), b);
    BatchRecord row;
    row.epoch = epoch;
    row.batch = b;
    if (cfg_.strategy == Strategy::Supervised) {
      row.metrics = supervised_step(batches[b], rng);
    } else {
      if (uses_m(cfg_.strategy)) m_step(batches[b], rng);
      row.metrics = encoder_step(batches[b], rng);
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);
  }
  return rows;
}

std::filesystem::path epoch_checkpoint_path(const std::filesystem::path& run_dir, std::size_t epoch) {
  char name[32];
  std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", epoch);
  return run_dir / "checkpoints" / name;
}

TrainResult train(const TrainConfig& cfg, const Dataset& data, const std::filesystem::path& run_dir,
                  const EpochCallback& on_epoch) {
  Trainer trainer(cfg, data);
  std::error_code ec;
  std::filesystem::create_directories(run_dir / "checkpoints", ec);
  require(!ec, ErrorCode::Io, "cannot create run directory '" + run_dir.string() + "': " + ec.message());

  {
    std::ofstream snap(run_dir / "config.txt", std::ios::trunc);
    require(static_cast<bool>(snap), ErrorCode::Io, "cannot write config snapshot in '" + run_dir.string() + "'");
    snap << format_config(trainer.config());
  }
  write_group_ids(data.groups, run_dir / "train_groups.txt");

  std::ofstream metrics(run_dir / "metrics.csv", std::ios::trunc);
  require(static_cast<bool>(metrics), ErrorCode::Io, "cannot write metrics in '" + run_dir.string() + "'");
  metrics << "epoch,batch,strategy,loss_con,loss_sup,seconds\n";

  TrainResult result;
  result.run_dir = run_dir;
  save_checkpoint(trainer.store(), epoch_checkpoint_path(run_dir, 0));
  const auto name = std::string(strategy_name(cfg.strategy));
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto rows = trainer.run_epoch(epoch);
    EpochSummary summary;
    summary.epoch = epoch;
    summary.batches = rows.size();
    for (const auto& r : rows) {
      require(std::isfinite(r.metrics.loss_con) && std::isfinite(r.metrics.loss_sup), ErrorCode::Runtime,
              "non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(r.batch));
      metrics << r.epoch << ',' << r.batch << ',' << name << ',' << fmt(r.metrics.loss_con) << ','
              << fmt(r.metrics.loss_sup) << ',' << (cfg.record_time ? fmt(r.seconds) : std::string("0")) << '\n';
      summary.mean_con += r.metrics.loss_con;
      summary.mean_sup += r.metrics.loss_sup;
      summary.seconds += r.seconds;
    }
    if (!rows.empty()) {
      summary.mean_con /= static_cast<double>(rows.size());
      summary.mean_sup /= static_cast<double>(rows.size());
    }
    result.rows += rows.size();
    metrics.flush();
    require(static_cast<bool>(metrics), ErrorCode::Io, "failed writing metrics in '" + run_dir.string() + "'");
    if (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs) {
      save_checkpoint(trainer.store(), epoch_checkpoint_path(run_dir, epoch));
    }
    if (on_epoch) on_epoch(summary);
  }
  result.final_checkpoint = run_dir / "final.ckpt";
  save_checkpoint(trainer.store(), result.final_checkpoint);
  return result;
}

}  // namespace augdiff
