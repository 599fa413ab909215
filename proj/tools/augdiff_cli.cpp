// Command-line front end. Talks to the library only through augdiff.h.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "augdiff/augdiff.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitGradCheck = 3;

struct Failure {
  int code;
  std::string message;
};

void check(augd_status st) {
  if (st == AUGD_OK) return;
  throw Failure{st == AUGD_ERR_INVALID_ARGUMENT ? kExitValidation : kExitRuntime, augd_last_error()};
}

[[noreturn]] void invalid(const std::string& msg) { throw Failure{kExitValidation, msg}; }

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using DatasetPtr = std::unique_ptr<augd_dataset, Deleter<augd_dataset, augd_dataset_free>>;
using ConfigPtr = std::unique_ptr<augd_config, Deleter<augd_config, augd_config_free>>;
using ModelPtr = std::unique_ptr<augd_model, Deleter<augd_model, augd_model_free>>;

DatasetPtr load_dataset(const std::string& path) {
  augd_dataset* d = nullptr;
  check(augd_dataset_load(path.c_str(), &d));
  return DatasetPtr(d);
}

ModelPtr load_model(const std::string& path) {
  augd_model* m = nullptr;
  check(augd_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_pgm(const fs::path& path, const std::vector<double>& pixels, std::uint32_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{kExitRuntime, "cannot write '" + path.string() + "'"};
  out << "P5\n" << size << ' ' << size << "\n255\n";
  for (double v : pixels) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  if (!out) throw Failure{kExitRuntime, "failed writing '" + path.string() + "'"};
}

std::string flag_of(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

// ---- gen-data ----

struct GenDataArgs {
  augd_synth_spec spec{};
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  augd_dataset* d = nullptr;
  check(augd_dataset_generate(&a.spec, &d));
  DatasetPtr data(d);
  const auto parent = fs::path(a.out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  check(augd_dataset_save(data.get(), a.out.c_str()));
  std::size_t pos = 0;
  for (std::size_t i = 0; i < augd_dataset_size(data.get()); ++i) {
    int y = 0;
    check(augd_dataset_label(data.get(), i, &y));
    pos += static_cast<std::size_t>(y);
  }
  std::cout << "wrote " << a.out << ": " << augd_dataset_size(data.get()) << " images of "
            << augd_dataset_image_size(data.get()) << "x" << augd_dataset_image_size(data.get()) << ", " << pos
            << " positive\n";
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string run_dir;
  std::string config;
  std::map<std::string, std::string> overrides;  // config key -> value
  bool quiet = false;
};

ConfigPtr build_config(const std::string& file, const std::map<std::string, std::string>& overrides) {
  augd_config* c = nullptr;
  check(augd_config_new(&c));
  ConfigPtr cfg(c);
  if (!file.empty()) check(augd_config_load_file(cfg.get(), file.c_str()));
  for (const auto& [k, v] : overrides) check(augd_config_set(cfg.get(), k.c_str(), v.c_str()));
  check(augd_config_validate(cfg.get()));
  return cfg;
}

void print_epoch(const augd_epoch_summary* s, void*) {
  std::cout << "epoch " << s->epoch << ": " << s->batches << " batches, loss_con " << fmt(s->mean_loss_con)
            << ", loss_sup " << fmt(s->mean_loss_sup) << ", " << fmt(s->seconds, "%.1f") << " s\n"
            << std::flush;
}

int cmd_train(const TrainArgs& a) {
  auto cfg = build_config(a.config, a.overrides);
  auto data = load_dataset(a.data);
  check(augd_train(cfg.get(), data.get(), a.run_dir.c_str(), a.quiet ? nullptr : print_epoch, nullptr));
  std::cout << "run written to " << a.run_dir << '\n';
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string data;
  std::vector<std::string> checkpoints;
  std::string run_dir;
  std::string report;
  augd_eval_options opts{};
};

std::optional<long> epoch_of(const fs::path& ckpt) {
  static const std::regex pattern(R"(epoch_(\d+)\.ckpt)");
  std::smatch m;
  const auto name = ckpt.filename().string();
  if (std::regex_match(name, m, pattern)) return std::stol(m[1].str());
  return std::nullopt;
}

int cmd_eval(const EvalArgs& a) {
  std::vector<fs::path> ckpts(a.checkpoints.begin(), a.checkpoints.end());
  if (!a.run_dir.empty() && ckpts.empty()) {
    const auto dir = fs::path(a.run_dir) / "checkpoints";
    if (!fs::is_directory(dir)) throw Failure{kExitRuntime, "no checkpoints directory in '" + a.run_dir + "'"};
    for (const auto& e : fs::directory_iterator(dir)) {
      if (epoch_of(e.path())) ckpts.push_back(e.path());
    }
    std::sort(ckpts.begin(), ckpts.end());
  }
  if (ckpts.empty()) invalid("eval needs --checkpoint or --run-dir");
  auto pool = load_dataset(a.data);
  if (!a.run_dir.empty()) check(augd_check_eval_pool(a.run_dir.c_str(), pool.get()));

  fs::path report_path = a.report;
  if (report_path.empty()) {
    report_path = a.run_dir.empty() ? fs::path("eval_report.csv") : fs::path(a.run_dir) / "eval_report.csv";
  }
  std::ostringstream report;
  report << "checkpoint,epoch,auc_mean,auc_std";
  for (std::uint32_t k = 0; k < a.opts.splits; ++k) report << ",auc_split" << k;
  report << '\n';

  std::vector<std::string> metric_rows;
  for (const auto& ckpt : ckpts) {
    if (!fs::exists(ckpt)) throw Failure{kExitRuntime, "checkpoint '" + ckpt.string() + "' does not exist"};
    auto model = load_model(ckpt.string());
    augd_eval_report r{};
    check(augd_evaluate(model.get(), pool.get(), &a.opts, &r));
    const auto epoch = epoch_of(ckpt);
    const std::string epoch_text = epoch ? std::to_string(*epoch) : "";
    report << ckpt.filename().string() << ',' << epoch_text << ',' << fmt(r.auc_mean, "%.17g") << ','
           << fmt(r.auc_std, "%.17g");
    for (std::uint32_t k = 0; k < r.n_splits; ++k) report << ',' << fmt(r.split_aucs[k], "%.17g");
    report << '\n';
    if (epoch) metric_rows.push_back(epoch_text + ',' + fmt(r.auc_mean, "%.17g") + ',' + fmt(r.auc_std, "%.17g"));
    std::cout << ckpt.string() << ": AUC " << fmt(r.auc_mean, "%.4f") << " (" << fmt(r.auc_std, "%.4f") << ")\n";
  }

  std::ofstream out(report_path, std::ios::trunc);
  if (!out) throw Failure{kExitRuntime, "cannot write '" + report_path.string() + "'"};
  out << report.str();

  if (!a.run_dir.empty() && !metric_rows.empty()) {
    const auto eval_csv = fs::path(a.run_dir) / "eval.csv";
    const bool fresh = !fs::exists(eval_csv);
    std::ofstream m(eval_csv, std::ios::app);
    if (!m) throw Failure{kExitRuntime, "cannot write '" + eval_csv.string() + "'"};
    if (fresh) m << "epoch,auc_mean,auc_std\n";
    for (const auto& row : metric_rows) m << row << '\n';
  }
  return kExitOk;
}

// ---- grad-check ----

struct GradCheckArgs {
  augd_gradcheck_options opts{};
  std::vector<std::string> only;
  bool sweep = false;
};

std::vector<augd_gradcheck_row> run_rows(const augd_gradcheck_options& opts, int* all_pass) {
  std::size_t count = 0;
  check(augd_grad_check(&opts, nullptr, 0, &count, all_pass));
  std::vector<augd_gradcheck_row> rows(count);
  check(augd_grad_check(&opts, rows.data(), rows.size(), &count, all_pass));
  return rows;
}

int cmd_grad_check(GradCheckArgs a) {
  std::string only;
  for (const auto& t : a.only) only += (only.empty() ? "" : ",") + t;
  a.opts.only = only.c_str();

  if (a.sweep) {
    // Same draws at three step sizes: errors should shrink roughly as h^2.
    const double hs[] = {1e-2, 1e-3, 1e-4};
    std::vector<std::vector<augd_gradcheck_row>> runs;
    for (double h : hs) {
      auto o = a.opts;
      o.h = h;
      int ignored = 0;
      runs.push_back(run_rows(o, &ignored));
    }
    std::printf("%-11s %-24s %12s %12s %12s\n", "check", "target", "h=1e-2", "h=1e-3", "h=1e-4");
    for (std::size_t i = 0; i < runs[0].size(); ++i) {
      std::printf("%-11s %-24s %12.3e %12.3e %12.3e\n", runs[0][i].check, runs[0][i].target, runs[0][i].max_rel_error,
                  runs[1][i].max_rel_error, runs[2][i].max_rel_error);
    }
    return kExitOk;
  }

  int all_pass = 0;
  const auto rows = run_rows(a.opts, &all_pass);
  std::printf("%-11s %-24s %12s %10s %5s  %s\n", "check", "target", "max_rel_err", "tolerance", "draws", "result");
  for (const auto& r : rows) {
    std::printf("%-11s %-24s %12.3e %10.1e %5u  %s\n", r.check, r.target, r.max_rel_error, r.tolerance, r.draws,
                r.pass ? "PASS" : "FAIL");
  }
  std::printf("%s\n", all_pass ? "all checks passed" : "gradient check FAILED");
  return all_pass ? kExitOk : kExitGradCheck;
}

// ---- preview ----

struct PreviewArgs {
  std::string data;
  std::string out;
  std::string checkpoint;
  std::string lambda;
  std::string order;
  std::size_t count = 8;
  std::uint64_t seed = 0;
};

std::vector<double> parse_lambda(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      invalid("--lambda: '" + item + "' is not a number");
    }
  }
  if (v.size() != 7) invalid("--lambda needs 7 comma-separated values, got " + std::to_string(v.size()));
  return v;
}

int cmd_preview(const PreviewArgs& a) {
  auto data = load_dataset(a.data);
  const auto n = std::min(a.count, augd_dataset_size(data.get()));
  if (n == 0) invalid("--count must be positive");
  const auto s = augd_dataset_image_size(data.get());
  const auto plane = static_cast<std::size_t>(s) * s;
  fs::create_directories(a.out);

  std::vector<double> images(n * plane);
  for (std::size_t i = 0; i < n; ++i) check(augd_dataset_image(data.get(), i, images.data() + i * plane));

  std::vector<double> random(n * 7);
  if (!a.lambda.empty()) {
    const auto fixed = parse_lambda(a.lambda);
    for (std::size_t i = 0; i < n; ++i) std::copy(fixed.begin(), fixed.end(), random.begin() + i * 7);
  } else {
    check(augd_sample_random_lambda(a.seed, n, random.data()));
  }
  std::vector<double> learned;
  if (!a.checkpoint.empty()) {
    auto model = load_model(a.checkpoint);
    if (!augd_model_has_transform_net(model.get())) {
      invalid("checkpoint '" + a.checkpoint + "' has no transformation network");
    }
    learned.resize(n * 7);
    check(augd_model_transform_params(model.get(), images.data(), n, s, learned.data()));
  }

  const char* order = a.order.empty() ? nullptr : a.order.c_str();
  std::ofstream csv(fs::path(a.out) / "lambdas.csv", std::ios::trunc);
  if (!csv) throw Failure{kExitRuntime, "cannot write lambdas.csv in '" + a.out + "'"};
  csv << "image,source,blur,noise,crop_x,crop_y,flip0,flip1,rotate\n";
  std::vector<double> view(plane);
  auto emit = [&](std::size_t i, const char* source, const double* lambda) {
    check(augd_transform_compose(images.data() + i * plane, s, lambda, order, a.seed + i, view.data()));
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03zu.pgm", source, i);
    write_pgm(fs::path(a.out) / name, view, s);
    csv << i << ',' << source;
    for (int k = 0; k < 7; ++k) csv << ',' << fmt(lambda[k], "%.17g");
    csv << '\n';
  };
  for (std::size_t i = 0; i < n; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "original_%03zu.pgm", i);
    write_pgm(fs::path(a.out) / name, std::vector<double>(images.begin() + i * plane, images.begin() + (i + 1) * plane), s);
    emit(i, a.lambda.empty() ? "random" : "fixed", random.data() + i * 7);
    if (!learned.empty()) emit(i, "m", learned.data() + i * 7);
  }
  std::cout << "wrote " << n << " previews to " << a.out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned differentiable augmentations for contrastive pre-training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", augd_version());

  GenDataArgs gen;
  augd_synth_spec_default(&gen.spec);
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic lesion-detection dataset");
  g->add_option("--out", gen.out, "Dataset path (labels go to the same path with .csv)")->required();
  g->add_option("--n", gen.spec.n_images, "Number of images")->capture_default_str();
  g->add_option("--size", gen.spec.size, "Image side, a multiple of 16")->capture_default_str();
  g->add_option("--seed", gen.spec.seed, "Generator seed")->capture_default_str();
  g->add_option("--positive-fraction", gen.spec.positive_fraction)->capture_default_str();
  g->add_option("--lesion-intensity-min", gen.spec.lesion_intensity_min)->capture_default_str();
  g->add_option("--lesion-intensity-max", gen.spec.lesion_intensity_max)->capture_default_str();
  g->add_option("--lesion-radius-min", gen.spec.lesion_radius_min)->capture_default_str();
  g->add_option("--lesion-radius-max", gen.spec.lesion_radius_max)->capture_default_str();
  g->add_option("--background-sigma", gen.spec.background_sigma)->capture_default_str();
  g->add_option("--background-std", gen.spec.background_std)->capture_default_str();
  g->add_option("--group-offset", gen.spec.group_offset, "First group id")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one strategy into a run directory");
  t->add_option("--data", tr.data, "Training dataset")->required();
  t->add_option("--run-dir", tr.run_dir, "Output directory")->required();
  t->add_option("--config", tr.config, "key = value config file; flags override it");
  t->add_flag("--quiet", tr.quiet, "No per-epoch output");
  std::map<std::string, std::string> raw;
  for (std::size_t i = 0; i < augd_config_key_count(); ++i) {
    const std::string key = augd_config_key(i);
    t->add_option(flag_of(key), raw[key], "config key " + key);
  }

  EvalArgs ev;
  augd_eval_options_default(&ev.opts);
  auto* e = app.add_subcommand("eval", "Linear evaluation of encoder checkpoints");
  e->add_option("--data", ev.data, "Labeled evaluation pool")->required();
  e->add_option("--checkpoint", ev.checkpoints, "Checkpoint(s) to evaluate");
  e->add_option("--run-dir", ev.run_dir, "Sweep checkpoints/epoch_*.ckpt of a run");
  e->add_option("--report", ev.report, "Report CSV (default <run-dir>/eval_report.csv)");
  e->add_option("--splits", ev.opts.splits)->capture_default_str();
  e->add_option("--steps", ev.opts.steps)->capture_default_str();
  e->add_option("--lr", ev.opts.lr)->capture_default_str();
  e->add_option("--seed", ev.opts.seed)->capture_default_str();

  GradCheckArgs gc;
  augd_gradcheck_options_default(&gc.opts);
  auto* c = app.add_subcommand("grad-check", "Compare analytic gradients with finite differences");
  c->set_help_flag("--help", "Print this help message and exit");  // -h would collide with --h
  c->add_option("--h", gc.opts.h, "Finite-difference step for transforms")->capture_default_str();
  c->add_option("--tolerance", gc.opts.tolerance, "Transform tolerance")->capture_default_str();
  c->add_option("--draws", gc.opts.draws)->capture_default_str();
  c->add_option("--seed", gc.opts.seed)->capture_default_str();
  c->add_option("--transform", gc.only, "Restrict to blur|noise|crop|flip0|flip1|rotate|compose|end-to-end");
  c->add_flag("--h-sweep", gc.sweep, "Print errors at h = 1e-2, 1e-3, 1e-4");

  PreviewArgs pv;
  auto* p = app.add_subcommand("preview", "Write original and transformed images as PGM");
  p->add_option("--data", pv.data, "Dataset")->required();
  p->add_option("--out", pv.out, "Output directory")->required();
  p->add_option("--checkpoint", pv.checkpoint, "Checkpoint with a transformation network");
  p->add_option("--lambda", pv.lambda, "Fixed lambda: 7 comma-separated values in [0,1]");
  p->add_option("--order", pv.order, "Composition order, e.g. G,N,Crop,Flip0,Flip1,R");
  p->add_option("--count", pv.count)->capture_default_str();
  p->add_option("--seed", pv.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen);
    if (t->parsed()) {
      for (const auto& [key, value] : raw) {
        if (t->count(flag_of(key)) > 0) tr.overrides[key] = value;
      }
      return cmd_train(tr);
    }
    if (e->parsed()) return cmd_eval(ev);
    if (c->parsed()) return cmd_grad_check(gc);
    if (p->parsed()) return cmd_preview(pv);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}
