#include "augdiff/augdiff.h"

#include <cstring>
#include <exception>
#include <new>
#include <sstream>
#include <string>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/error.hpp"
#include "core/evaluator.hpp"
#include "core/gradcheck_suite.hpp"
#include "core/rng.hpp"
#include "core/synthdata.hpp"
#include "core/trainer.hpp"
#include "core/transforms.hpp"

using namespace augdiff;

struct augd_dataset {
  Dataset data;
};

struct augd_config {
  ConfigMap values;
};

struct augd_model {
  ParameterStore store;
  ArchSpec arch;
};

namespace {

thread_local std::string g_last_error;

augd_status fail(augd_status status, const std::string& what) {
  g_last_error = what;
  return status;
}

augd_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return AUGD_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return AUGD_ERR_IO;
    case ErrorCode::BadMagic: return AUGD_ERR_BAD_MAGIC;
    case ErrorCode::BadVersion: return AUGD_ERR_BAD_VERSION;
    case ErrorCode::Corrupt: return AUGD_ERR_CORRUPT;
    case ErrorCode::ShapeMismatch: return AUGD_ERR_SHAPE;
    case ErrorCode::Runtime: return AUGD_ERR_RUNTIME;
  }
  return AUGD_ERR_INTERNAL;
}

template <typename Fn>
augd_status guarded(Fn&& fn) {
  try {
    fn();
    return AUGD_OK;
  } catch (const Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(AUGD_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(AUGD_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(AUGD_ERR_INTERNAL, "unknown exception");
  }
}

void need(const void* p, const char* what) {
  require(p != nullptr, ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

std::vector<std::string> split_list(const char* text) {
  std::vector<std::string> out;
  if (text == nullptr) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void copy_name(char* dst, std::size_t cap, const std::string& src) {
  const auto n = std::min(cap - 1, src.size());
  std::memcpy(dst, src.data(), n);
  dst[n] = '\0';
}

}  // namespace

extern "C" {

const char* augd_last_error(void) { return g_last_error.c_str(); }

const char* augd_status_string(augd_status status) {
  switch (status) {
    case AUGD_OK: return "ok";
    case AUGD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case AUGD_ERR_IO: return "i/o error";
    case AUGD_ERR_BAD_MAGIC: return "bad magic";
    case AUGD_ERR_BAD_VERSION: return "unsupported version";
    case AUGD_ERR_CORRUPT: return "corrupt file";
    case AUGD_ERR_SHAPE: return "shape mismatch";
    case AUGD_ERR_RUNTIME: return "runtime error";
    case AUGD_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* augd_version(void) { return "1.0.0"; }

// ---- datasets ----

void augd_synth_spec_default(augd_synth_spec* spec) {
  if (spec == nullptr) return;
  const SyntheticSpec d;
  *spec = {d.n_images,          static_cast<uint32_t>(d.size), d.lesion_intensity_min, d.lesion_intensity_max,
           d.lesion_radius_min, d.lesion_radius_max,          d.background_sigma,     d.background_std,
           d.positive_fraction, d.seed,                        d.group_offset};
}

augd_status augd_dataset_generate(const augd_synth_spec* spec, augd_dataset** out) {
  return guarded([&] {
    need(spec, "spec");
    need(out, "out");
    SyntheticSpec s;
    s.n_images = spec->n_images;
    s.size = spec->size;
    s.lesion_intensity_min = spec->lesion_intensity_min;
    s.lesion_intensity_max = spec->lesion_intensity_max;
    s.lesion_radius_min = spec->lesion_radius_min;
    s.lesion_radius_max = spec->lesion_radius_max;
    s.background_sigma = spec->background_sigma;
    s.background_std = spec->background_std;
    s.positive_fraction = spec->positive_fraction;
    s.seed = spec->seed;
    s.group_offset = spec->group_offset;
    *out = new augd_dataset{generate(s)};
  });
}

augd_status augd_dataset_load(const char* path, augd_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new augd_dataset{load_dataset(path)};
  });
}

augd_status augd_dataset_save(const augd_dataset* data, const char* path) {
  return guarded([&] {
    need(data, "dataset");
    need(path, "path");
    save_dataset(data->data, path);
  });
}

void augd_dataset_free(augd_dataset* data) { delete data; }

size_t augd_dataset_size(const augd_dataset* data) { return data ? data->data.size() : 0; }

uint32_t augd_dataset_image_size(const augd_dataset* data) {
  return data ? static_cast<uint32_t>(data->data.image_size()) : 0;
}

augd_status augd_dataset_image(const augd_dataset* data, size_t index, double* out) {
  return guarded([&] {
    need(data, "dataset");
    need(out, "out");
    const auto img = data->data.gather({index});
    std::memcpy(out, img.ptr(), img.numel() * sizeof(double));
  });
}

augd_status augd_dataset_label(const augd_dataset* data, size_t index, int* label) {
  return guarded([&] {
    need(data, "dataset");
    need(label, "label");
    require(index < data->data.size(), ErrorCode::InvalidArgument, "dataset index out of range");
    *label = data->data.labels[index];
  });
}

// ---- config ----

augd_status augd_config_new(augd_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new augd_config{};
  });
}

void augd_config_free(augd_config* cfg) { delete cfg; }

augd_status augd_config_set(augd_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "config");
    need(key, "key");
    need(value, "value");
    // Reuse the file parser so keys and values obey the same rules.
    const auto parsed = parse_config_text(std::string(key) + " = " + value);
    require(parsed.size() == 1, ErrorCode::InvalidArgument, "bad config assignment for '" + std::string(key) + "'");
    for (const auto& [k, v] : parsed) cfg->values[k] = v;
  });
}

augd_status augd_config_load_file(augd_config* cfg, const char* path) {
  return guarded([&] {
    need(cfg, "config");
    need(path, "path");
    for (const auto& [k, v] : load_config_file(path)) cfg->values[k] = v;
  });
}

augd_status augd_config_validate(const augd_config* cfg) {
  return guarded([&] {
    need(cfg, "config");
    build_config(cfg->values).validate();
  });
}

augd_status augd_config_format(const augd_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    need(cfg, "config");
    const auto resolved = build_config(cfg->values);
    resolved.validate();
    const auto text = format_config(resolved);
    if (needed) *needed = text.size() + 1;
    if (buf == nullptr || cap == 0) return;
    require(cap > text.size(), ErrorCode::InvalidArgument, "config buffer too small");
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

size_t augd_config_key_count(void) { return config_keys().size(); }

const char* augd_config_key(size_t i) { return i < config_keys().size() ? config_keys()[i].data() : nullptr; }

// ---- training ----

augd_status augd_train(const augd_config* cfg, const augd_dataset* data, const char* run_dir,
                       augd_epoch_callback on_epoch, void* user) {
  return guarded([&] {
    need(cfg, "config");
    need(data, "dataset");
    need(run_dir, "run_dir");
    const auto resolved = build_config(cfg->values);
    EpochCallback cb;
    if (on_epoch) {
      cb = [on_epoch, user](const EpochSummary& s) {
        const augd_epoch_summary c{s.epoch, s.batches, s.mean_con, s.mean_sup, s.seconds};
        on_epoch(&c, user);
      };
    }
    train(resolved, data->data, run_dir, cb);
  });
}

// ---- models ----

augd_status augd_model_load(const char* checkpoint, augd_model** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    auto store = load_checkpoint(checkpoint);
    auto arch = infer_arch(store);
    *out = new augd_model{std::move(store), std::move(arch)};
  });
}

augd_status augd_model_init(const augd_config* cfg, augd_model** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    const auto resolved = build_config(cfg->values);
    resolved.validate();
    *out = new augd_model{initial_store(resolved), resolved.arch};
  });
}

augd_status augd_model_save(const augd_model* model, const char* checkpoint) {
  return guarded([&] {
    need(model, "model");
    need(checkpoint, "checkpoint");
    save_checkpoint(model->store, checkpoint);
  });
}

void augd_model_free(augd_model* model) { delete model; }

int augd_model_has_transform_net(const augd_model* model) { return model && has_transform_net(model->store); }

uint32_t augd_model_latent_dim(const augd_model* model) {
  return model ? static_cast<uint32_t>(model->arch.latent_dim()) : 0;
}

augd_status augd_model_transform_params(const augd_model* model, const double* images, size_t n, uint32_t size,
                                        double* out) {
  return guarded([&] {
    need(model, "model");
    need(images, "images");
    need(out, "out");
    require(has_transform_net(model->store), ErrorCode::InvalidArgument, "checkpoint has no transformation network");
    require(n >= 1 && size >= 1, ErrorCode::InvalidArgument, "need at least one image");
    const std::size_t count = n * size * size;
    Tensor batch({n, 1, size, size}, std::vector<double>(images, images + count));
    const auto lambda = transform_params(model->store, model->arch, batch);
    std::memcpy(out, lambda.ptr(), lambda.numel() * sizeof(double));
  });
}

augd_status augd_model_features(const augd_model* model, const augd_dataset* data, double* out) {
  return guarded([&] {
    need(model, "model");
    need(data, "dataset");
    need(out, "out");
    const auto feats = extract_features(model->store, data->data.images);
    std::memcpy(out, feats.ptr(), feats.numel() * sizeof(double));
  });
}

// ---- evaluation ----

void augd_eval_options_default(augd_eval_options* opts) {
  if (opts == nullptr) return;
  const LinearEvalOptions d;
  *opts = {static_cast<uint32_t>(d.splits), static_cast<uint32_t>(d.steps), d.lr, d.seed, d.standardize ? 1 : 0};
}

augd_status augd_evaluate(const augd_model* model, const augd_dataset* pool, const augd_eval_options* opts,
                          augd_eval_report* out) {
  return guarded([&] {
    need(model, "model");
    need(pool, "pool");
    need(out, "out");
    LinearEvalOptions o;
    if (opts) {
      o.splits = opts->splits;
      o.steps = opts->steps;
      o.lr = opts->lr;
      o.seed = opts->seed;
      o.standardize = opts->standardize != 0;
    }
    require(o.splits <= AUGD_MAX_SPLITS, ErrorCode::InvalidArgument,
            "at most " + std::to_string(AUGD_MAX_SPLITS) + " evaluation splits");
    const auto report = evaluate_checkpoint(model->store, pool->data, o);
    *out = {};
    out->auc_mean = report.auc_mean;
    out->auc_std = report.auc_std;
    out->n_splits = static_cast<uint32_t>(report.split_aucs.size());
    for (std::size_t i = 0; i < report.split_aucs.size(); ++i) out->split_aucs[i] = report.split_aucs[i];
  });
}

augd_status augd_check_eval_pool(const char* run_dir, const augd_dataset* pool) {
  return guarded([&] {
    need(run_dir, "run_dir");
    need(pool, "pool");
    const auto pretrain = read_group_ids(std::filesystem::path(run_dir) / "train_groups.txt");
    require_disjoint_pools(pretrain, pool->data.groups);
  });
}

augd_status augd_roc_auc(const double* scores, const int* labels, size_t n, double* out) {
  return guarded([&] {
    need(scores, "scores");
    need(labels, "labels");
    need(out, "out");
    *out = roc_auc({scores, n}, {labels, n});
  });
}

// ---- transforms ----

augd_status augd_transform_compose(const double* image, uint32_t size, const double params[7], const char* order,
                                   uint64_t noise_seed, double* out) {
  return guarded([&] {
    need(image, "image");
    need(params, "params");
    need(out, "out");
    require(size >= 1, ErrorCode::InvalidArgument, "image size must be positive");
    const Tensor x({1, size, size}, std::vector<double>(image, image + static_cast<std::size_t>(size) * size));
    const auto p = transforms::TransformParams::from_span({params, transforms::kParamCount});
    const auto ord = order ? transforms::CompositionOrder::parse(order) : transforms::CompositionOrder();
    Rng rng(noise_seed);
    const auto eps = transforms::NoiseRealization::sample(rng, x.shape());
    const auto y = transforms::compose(x, p, ord, eps);
    std::memcpy(out, y.ptr(), y.numel() * sizeof(double));
  });
}

augd_status augd_sample_random_lambda(uint64_t seed, size_t n, double* out) {
  return guarded([&] {
    need(out, "out");
    Rng rng(seed);
    const auto lambda = sample_random_lambda(rng, n);
    std::memcpy(out, lambda.ptr(), lambda.numel() * sizeof(double));
  });
}

// ---- gradient checks ----

void augd_gradcheck_options_default(augd_gradcheck_options* opts) {
  if (opts == nullptr) return;
  const GradCheckOptions d;
  *opts = {d.h, d.transform_tolerance, static_cast<uint32_t>(d.draws), static_cast<uint32_t>(d.image_size),
           d.e2e_h, d.e2e_tolerance, d.seed, nullptr};
}

augd_status augd_grad_check(const augd_gradcheck_options* opts, augd_gradcheck_row* rows, size_t cap, size_t* count,
                            int* all_pass) {
  return guarded([&] {
    need(opts, "options");
    GradCheckOptions o;
    o.h = opts->h;
    o.transform_tolerance = opts->tolerance;
    o.draws = opts->draws;
    o.image_size = opts->image_size;
    o.e2e_h = opts->e2e_h;
    o.e2e_tolerance = opts->e2e_tolerance;
    o.seed = opts->seed;
    o.only = split_list(opts->only);
    const auto report = run_grad_check(o);
    if (count) *count = report.rows.size();
    if (all_pass) *all_pass = report.all_pass() ? 1 : 0;
    for (std::size_t i = 0; rows && i < std::min(cap, report.rows.size()); ++i) {
      const auto& r = report.rows[i];
      copy_name(rows[i].check, sizeof rows[i].check, r.check);
      copy_name(rows[i].target, sizeof rows[i].target, r.target);
      rows[i].max_rel_error = r.max_rel_error;
      rows[i].tolerance = r.tolerance;
      rows[i].draws = static_cast<uint32_t>(r.draws);
      rows[i].pass = r.pass ? 1 : 0;
    }
  });
}

}  // extern "C"
