#include "core/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "core/error.hpp"
#include "core/gradcheck.hpp"
#include "core/models.hpp"
#include "core/rng.hpp"
#include "core/trainer.hpp"
#include "core/transforms.hpp"

namespace augdiff {

namespace {

namespace tf = transforms;

constexpr std::size_t kMaxRedraws = 2000;
constexpr double kLambdaLo = 0.1, kLambdaHi = 0.9;
constexpr std::size_t kComposeSize = 8;
constexpr double kE2eFloor = 1e-6;

const char* param_name(std::size_t p) {
  static const char* names[] = {"blur", "noise", "crop_x", "crop_y", "flip0", "flip1", "rotate"};
  return names[p];
}

struct Target {
  std::string name;
  std::optional<tf::Kind> kind;  // empty: full composition
};

const std::vector<Target>& targets() {
  static const std::vector<Target> t{{"blur", tf::Kind::Blur},   {"noise", tf::Kind::Noise},
                                     {"crop", tf::Kind::Crop},   {"flip0", tf::Kind::Flip0},
                                     {"flip1", tf::Kind::Flip1}, {"rotate", tf::Kind::Rotate},
                                     {"compose", std::nullopt}};
  return t;
}

bool selected(const GradCheckOptions& opts, const std::string& name) {
  return opts.only.empty() || std::find(opts.only.begin(), opts.only.end(), name) != opts.only.end();
}

tf::TransformParams random_params(Rng& rng) {
  std::array<double, tf::kParamCount> v{};
  for (auto& x : v) x = rng.uniform(kLambdaLo, kLambdaHi);
  return tf::TransformParams(v);
}

// Pixels whose value is a smooth function of `param` over [value - h, value + h].
// Rotation: the bilinear sample point stays inside one grid cell. Crop: the
// infinity-norm distance keeps its dominant axis and side.
std::vector<char> smooth_pixels(std::size_t s, const tf::TransformParams& params, std::size_t param, double h) {
  std::vector<char> ok(s * s, 1);
  const double sd = static_cast<double>(s);
  const double center = (sd - 1.0) / 2.0;
  auto shifted = [&](double delta) { return params.values()[param] + delta; };

  if (param == tf::kRotate) {
    std::array<std::array<double, 2>, 2> cs{tf::turn_cos_sin(shifted(-h)), tf::turn_cos_sin(shifted(h))};
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        const double dx = static_cast<double>(j) - center, dy = static_cast<double>(i) - center;
        double cells[2][2];
        for (int k = 0; k < 2; ++k) {
          const double c = cs[k][0], sn = cs[k][1];
          const double u = c * dx - sn * dy + center, v = sn * dx + c * dy + center;
          cells[k][0] = std::floor(u);
          cells[k][1] = std::floor(v);
          if (u == cells[k][0] || v == cells[k][1]) ok[i * s + j] = 0;
        }
        if (cells[0][0] != cells[1][0] || cells[0][1] != cells[1][1]) ok[i * s + j] = 0;
      }
    }
  } else if (param == tf::kCropX || param == tf::kCropY) {
    auto regime = [&](double lx, double ly, std::size_t i, std::size_t j) {
      const double dx = static_cast<double>(j) - lx * sd, dy = static_cast<double>(i) - ly * sd;
      if (std::abs(dx) == std::abs(dy) || dx == 0.0 || dy == 0.0) return -1;
      return std::abs(dx) > std::abs(dy) ? (dx > 0 ? 0 : 1) : (dy > 0 ? 2 : 3);
    };
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        int seen = -2;
        for (double delta : {-h, 0.0, h}) {
          const double lx = params[tf::kCropX] + (param == tf::kCropX ? delta : 0.0);
          const double ly = params[tf::kCropY] + (param == tf::kCropY ? delta : 0.0);
          const int r = regime(lx, ly, i, j);
          if (r < 0 || (seen != -2 && r != seen)) ok[i * s + j] = 0;
          seen = r;
        }
      }
    }
  }
  return ok;
}

double masked_rel_error(const Tensor& analytic, const Tensor& reference, const std::vector<char>& ok) {
  const auto plane = ok.size();
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    if (!ok[i % plane]) continue;
    diff = std::max(diff, std::abs(analytic[i] - reference[i]));
    scale = std::max(scale, std::abs(reference[i]));
  }
  return diff / std::max(scale, 1e-8);
}

std::size_t count_ok(const std::vector<char>& ok) { return static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1)); }

std::vector<char> all_smooth(std::size_t s, const tf::TransformParams& params, double h) {
  std::vector<char> ok(s * s, 1);
  for (std::size_t p : {tf::kCropX, tf::kCropY, tf::kRotate}) {
    const auto part = smooth_pixels(s, params, p, h);
    for (std::size_t i = 0; i < ok.size(); ++i) ok[i] = ok[i] && part[i];
  }
  return ok;
}

Tensor fd_image(const std::function<Tensor(const tf::TransformParams&)>& fn, const tf::TransformParams& params,
                std::size_t p, double h) {
  const auto up = fn(params.with(p, params[p] + h));
  const auto down = fn(params.with(p, params[p] - h));
  Tensor out(up.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (up[i] - down[i]) / (2.0 * h);
  return out;
}

// One transform alone. Draws keep at least half of the pixels smooth in every
// parameter; non-smooth pixels are left out of the comparison.
std::vector<GradCheckRow> check_transform(tf::Kind kind, const std::string& name, const GradCheckOptions& opts) {
  const auto s = opts.image_size;
  const auto params_of = tf::params_of(kind);
  std::vector<GradCheckRow> rows;
  for (auto p : params_of) rows.push_back({name, param_name(p), 0.0, opts.transform_tolerance, 0, true});

  Rng rng = Rng::stream(opts.seed, static_cast<std::uint64_t>(kind));
  for (std::size_t d = 0; d < opts.draws; ++d) {
    const Tensor x = uniform(rng, 0.0, 1.0, {1, s, s});
    const auto eps = tf::NoiseRealization::sample(rng, x.shape());
    tf::TransformParams params;
    std::vector<std::vector<char>> masks;
    for (std::size_t tries = 0;; ++tries) {
      require(tries < kMaxRedraws, ErrorCode::Runtime,
              "grad check: no usable draw for " + name + " at h=" + std::to_string(opts.h));
      params = random_params(rng);
      masks.clear();
      bool usable = true;
      for (auto p : params_of) {
        masks.push_back(smooth_pixels(s, params, p, opts.h));
        usable = usable && 2 * count_ok(masks.back()) >= s * s;
      }
      if (usable) break;
    }
    const auto analytic = tf::param_derivatives(kind, x, params, eps);
    const auto fn = [&](const tf::TransformParams& q) { return tf::apply(kind, x, q, eps); };
    for (std::size_t k = 0; k < params_of.size(); ++k) {
      const auto fd = fd_image(fn, params, params_of[k], opts.h);
      rows[k].max_rel_error = std::max(rows[k].max_rel_error, masked_rel_error(analytic[k], fd, masks[k]));
      ++rows[k].draws;
    }
  }
  return rows;
}

// Full composition on small images, redrawn until every pixel is smooth.
std::vector<GradCheckRow> check_compose(const GradCheckOptions& opts) {
  const auto s = kComposeSize;
  std::vector<GradCheckRow> rows;
  for (std::size_t p = 0; p < tf::kParamCount; ++p) rows.push_back({"compose", param_name(p), 0.0, opts.transform_tolerance, 0, true});
  const tf::CompositionOrder order;
  Rng rng = Rng::stream(opts.seed, 0x636f6d70ULL);
  for (std::size_t d = 0; d < opts.draws; ++d) {
    const Tensor x = uniform(rng, 0.0, 1.0, {1, s, s});
    const auto eps = tf::NoiseRealization::sample(rng, x.shape());
    // Keep the draw with the fewest non-smooth pixels if none is clean.
    tf::TransformParams params = random_params(rng);
    std::size_t best = count_ok(all_smooth(s, params, opts.h));
    for (std::size_t tries = 0; tries < kMaxRedraws && best < s * s; ++tries) {
      const auto cand = random_params(rng);
      const auto n = count_ok(all_smooth(s, cand, opts.h));
      if (n > best) {
        best = n;
        params = cand;
      }
    }
    const auto jac = tf::compose_jacobian(x, params, order, eps);
    const auto fn = [&](const tf::TransformParams& q) { return tf::compose(x, q, order, eps); };
    const std::vector<char> everywhere(s * s, 1);
    for (std::size_t p = 0; p < tf::kParamCount; ++p) {
      const auto fd = fd_image(fn, params, p, opts.h);
      rows[p].max_rel_error = std::max(rows[p].max_rel_error, masked_rel_error(jac.d_params[p], fd, everywhere));
      ++rows[p].draws;
    }
  }
  return rows;
}

std::vector<GradCheckRow> check_end_to_end(const GradCheckOptions& opts) {
  ArchSpec arch;
  arch.encoder_widths = {4, 4, 4};
  arch.proj_hidden = 8;
  arch.proj_dim = 4;
  arch.m_widths = {4, 4};
  const Networks nets(arch);
  ParameterStore store = nets.make_store(true);
  Rng rng = Rng::stream(opts.seed, 0x653265ULL);
  init_weights(store, rng);

  const Tensor images = uniform(rng, 0.0, 1.0, {2, 1, 8, 8});
  const auto eps = tf::NoiseRealization::sample(rng, images.shape());
  const auto sup = Supervision::all({0.0, 1.0});
  ObjectiveConfig cfg;
  cfg.alpha = {1.0, 10.0, 0.0, 0.0, 0.0};
  const tf::CompositionOrder order;

  auto objective = [&](const ParameterStore& st) {
    Graph graph;
    return build_m_objective(graph, st, arch, images, &sup, cfg, order, eps).objective.total.value().item();
  };

  Graph graph;
  const auto built = build_m_objective(graph, store, arch, images, &sup, cfg, order, eps);
  const auto grads = backward(graph, built.objective.total);
  ParameterStore analytic = store;
  built.m.collect(grads, analytic);

  std::vector<GradCheckRow> rows;
  for (auto& slot : store.slots()) {
    if (slot.name.rfind("m.", 0) != 0) continue;
    ParameterStore probe = store;
    auto& target = probe.at(slot.name).value;
    const auto fd = finite_difference(
        [&](const Tensor& w) {
          target = w;
          return objective(probe);
        },
        slot.value, opts.e2e_h);
    const double err = relative_error(analytic.at(slot.name).grad, fd, kE2eFloor);
    rows.push_back({"end-to-end", slot.name, err, opts.e2e_tolerance, 1, true});
  }
  return rows;
}

}  // namespace

bool GradCheckReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.pass; });
}

const std::vector<std::string>& grad_check_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& t : targets()) out.push_back(t.name);
    out.emplace_back("end-to-end");
    return out;
  }();
  return names;
}

GradCheckReport run_grad_check(const GradCheckOptions& opts) {
  require(opts.h > 0.0 && opts.e2e_h > 0.0, ErrorCode::InvalidArgument, "finite-difference steps must be positive");
  require(opts.h < kLambdaLo, ErrorCode::InvalidArgument, "h must be below 0.1 so perturbed lambdas stay in [0,1]");
  require(opts.draws >= 1, ErrorCode::InvalidArgument, "grad check needs at least one draw");
  require(opts.image_size >= 4, ErrorCode::InvalidArgument, "grad check image size must be at least 4");
  const auto& names = grad_check_names();
  for (const auto& n : opts.only) {
    require(std::find(names.begin(), names.end(), n) != names.end(), ErrorCode::InvalidArgument,
            "unknown grad-check target '" + n + "'");
  }

  GradCheckReport report;
  for (const auto& t : targets()) {
    if (!selected(opts, t.name)) continue;
    auto rows = t.kind ? check_transform(*t.kind, t.name, opts) : check_compose(opts);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
  if (selected(opts, "end-to-end")) {
    auto rows = check_end_to_end(opts);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
  for (auto& r : report.rows) r.pass = std::isfinite(r.max_rel_error) && r.max_rel_error <= r.tolerance;
  return report;
}

}  // namespace augdiff
