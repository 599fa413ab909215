#include "core/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace augdiff {

namespace {

constexpr std::array<std::string_view, 6> kStrategyNames{"simclr_base", "random", "random_sup",
                                                          "selfsup_m",   "m_sup",  "supervised"};

constexpr std::array<std::string_view, 23> kKeys{
    "strategy",    "alpha0",         "alpha1",         "alpha2",          "alpha3",
    "alpha4",      "tau",            "use_cosine",     "lr_f",            "lr_m",
    "batch_size",  "epochs",         "seed",           "order",           "supervision_fraction",
    "label_fraction", "encoder_widths", "convs_per_block", "proj_hidden", "proj_dim",
    "m_widths",    "checkpoint_every", "record_time"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw Error(ErrorCode::InvalidArgument,
              "config key '" + std::string(key) + "': '" + std::string(value) + "' is not " + std::string(want));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a number");
  return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "a nonnegative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "a boolean (true/false)");
}

std::vector<std::size_t> to_widths(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    auto end = v.find(',', start);
    if (end == std::string_view::npos) end = v.size();
    out.push_back(static_cast<std::size_t>(to_uint(key, trim(v.substr(start, end - start)))));
    start = end + 1;
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

std::string fmt_widths(const std::vector<std::size_t>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
  return out;
}

void apply_key(TrainConfig& cfg, std::string_view key, std::string_view v) {
  if (key.size() == 6 && key.substr(0, 5) == "alpha" && key[5] >= '0' && key[5] <= '4') {
    cfg.objective.alpha[static_cast<std::size_t>(key[5] - '0')] = to_double(key, v);
  } else if (key == "tau") {
    cfg.objective.tau = to_double(key, v);
  } else if (key == "use_cosine") {
    cfg.objective.use_cosine = to_bool(key, v);
  } else if (key == "lr_f") {
    cfg.lr_f = to_double(key, v);
  } else if (key == "lr_m") {
    cfg.lr_m = to_double(key, v);
  } else if (key == "batch_size") {
    cfg.batch_size = to_uint(key, v);
  } else if (key == "epochs") {
    cfg.epochs = to_uint(key, v);
  } else if (key == "seed") {
    cfg.seed = to_uint(key, v);
  } else if (key == "order") {
    cfg.order = transforms::CompositionOrder::parse(v);
  } else if (key == "supervision_fraction") {
    cfg.supervision_fraction = to_double(key, v);
  } else if (key == "label_fraction") {
    cfg.label_fraction = to_double(key, v);
  } else if (key == "encoder_widths") {
    cfg.arch.encoder_widths = to_widths(key, v);
  } else if (key == "convs_per_block") {
    cfg.arch.convs_per_block = to_uint(key, v);
  } else if (key == "proj_hidden") {
    cfg.arch.proj_hidden = to_uint(key, v);
  } else if (key == "proj_dim") {
    cfg.arch.proj_dim = to_uint(key, v);
  } else if (key == "m_widths") {
    cfg.arch.m_widths = to_widths(key, v);
  } else if (key == "checkpoint_every") {
    cfg.checkpoint_every = to_uint(key, v);
  } else if (key == "record_time") {
    cfg.record_time = to_bool(key, v);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown config key '" + std::string(key) + "'");
  }
}

bool known_key(std::string_view key) {
  for (auto k : kKeys) {
    if (k == key) return true;
  }
  return false;
}

}  // namespace

std::string_view strategy_name(Strategy s) { return kStrategyNames[static_cast<std::size_t>(s)]; }

Strategy parse_strategy(std::string_view text) {
  std::string norm(text);
  for (auto& c : norm) {
    if (c == '-') c = '_';
  }
  for (std::size_t i = 0; i < kStrategyNames.size(); ++i) {
    if (kStrategyNames[i] == norm) return static_cast<Strategy>(i);
  }
  throw Error(ErrorCode::InvalidArgument,
              "unknown strategy '" + std::string(text) +
                  "' (expected simclr-base, random, random-sup, selfsup-m, m-sup or supervised)");
}

bool uses_m(Strategy s) { return s == Strategy::SelfsupM || s == Strategy::MSup; }

bool uses_labels(Strategy s) { return s == Strategy::RandomSup || s == Strategy::MSup || s == Strategy::Supervised; }

TrainConfig TrainConfig::defaults(Strategy s) {
  TrainConfig cfg;
  cfg.strategy = s;
  auto& a = cfg.objective.alpha;
  switch (s) {
    case Strategy::SimclrBase:
    case Strategy::Random:
    case Strategy::SelfsupM:
      a = {0.0, 0.0, 1.0, 0.0, 0.0};
      if (s == Strategy::SelfsupM) a[0] = 1.0;
      break;
    case Strategy::RandomSup:
      a = {0.0, 0.0, 1.0, 10.0, 10.0};
      break;
    case Strategy::MSup:
      a = {1.0, 10.0, 1.0, 1.0, 1.0};
      break;
    case Strategy::Supervised:
      a = {0.0, 0.0, 0.0, 0.0, 0.0};
      break;
  }
  cfg.lr_m = s == Strategy::MSup ? 1e-3 : 1e-4;
  return cfg;
}

void TrainConfig::validate() const {
  objective.validate();
  arch.validate();
  require(lr_f > 0.0 && lr_m > 0.0, ErrorCode::InvalidArgument, "learning rates must be positive");
  require(batch_size >= 2, ErrorCode::InvalidArgument, "batch_size must be at least 2 (contrastive negatives)");
  require(supervision_fraction > 0.0 && supervision_fraction <= 1.0, ErrorCode::InvalidArgument,
          "supervision_fraction must lie in (0,1]");
  require(label_fraction > 0.0 && label_fraction <= 1.0, ErrorCode::InvalidArgument,
          "label_fraction must lie in (0,1]");
  require(checkpoint_every >= 1, ErrorCode::InvalidArgument, "checkpoint_every must be at least 1");

  const auto& a = objective.alpha;
  const std::string who = "strategy " + std::string(strategy_name(strategy));
  auto forbid = [&](std::size_t i, const char* why) {
    require(a[i] == 0.0, ErrorCode::InvalidArgument,
            who + " requires alpha" + std::to_string(i) + " = 0 (" + why + "), got " + fmt_double(a[i]));
  };
  switch (strategy) {
    case Strategy::SimclrBase:
    case Strategy::Random:
      forbid(0, "no transformation network");
      forbid(1, "no transformation network");
      forbid(3, "no supervision");
      forbid(4, "no supervision");
      break;
    case Strategy::RandomSup:
      forbid(0, "no transformation network");
      forbid(1, "no transformation network");
      break;
    case Strategy::SelfsupM:
      forbid(1, "self-supervised, no labels");
      forbid(3, "self-supervised, no labels");
      forbid(4, "self-supervised, no labels");
      break;
    case Strategy::MSup:
      break;
    case Strategy::Supervised:
      for (std::size_t i = 0; i < a.size(); ++i) forbid(i, "the supervised baseline trains on BCE only");
      break;
  }
}

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorCode::InvalidArgument,
            "config line " + std::to_string(lineno) + ": expected 'key = value', got '" + t + "'");
    auto key = trim(std::string_view(t).substr(0, eq));
    auto value = trim(std::string_view(t).substr(eq + 1));
    require(known_key(key), ErrorCode::InvalidArgument,
            "config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    out[key] = value;
  }
  return out;
}

ConfigMap load_config_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

TrainConfig build_config(const ConfigMap& values) {
  auto it = values.find("strategy");
  TrainConfig cfg = TrainConfig::defaults(it == values.end() ? Strategy::MSup : parse_strategy(it->second));
  for (const auto& [key, value] : values) {
    if (key != "strategy") apply_key(cfg, key, value);
  }
  return cfg;
}

std::string format_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out << "strategy = " << strategy_name(cfg.strategy) << '\n';
  for (std::size_t i = 0; i < cfg.objective.alpha.size(); ++i) {
    out << "alpha" << i << " = " << fmt_double(cfg.objective.alpha[i]) << '\n';
  }
  out << "tau = " << fmt_double(cfg.objective.tau) << '\n';
  out << "use_cosine = " << (cfg.objective.use_cosine ? "true" : "false") << '\n';
  out << "lr_f = " << fmt_double(cfg.lr_f) << '\n';
  out << "lr_m = " << fmt_double(cfg.lr_m) << '\n';
  out << "batch_size = " << cfg.batch_size << '\n';
  out << "epochs = " << cfg.epochs << '\n';
  out << "seed = " << cfg.seed << '\n';
  out << "order = " << cfg.order.to_string() << '\n';
  out << "supervision_fraction = " << fmt_double(cfg.supervision_fraction) << '\n';
  out << "label_fraction = " << fmt_double(cfg.label_fraction) << '\n';
  out << "encoder_widths = " << fmt_widths(cfg.arch.encoder_widths) << '\n';
  out << "convs_per_block = " << cfg.arch.convs_per_block << '\n';
  out << "proj_hidden = " << cfg.arch.proj_hidden << '\n';
  out << "proj_dim = " << cfg.arch.proj_dim << '\n';
  out << "m_widths = " << fmt_widths(cfg.arch.m_widths) << '\n';
  out << "checkpoint_every = " << cfg.checkpoint_every << '\n';
  out << "record_time = " << (cfg.record_time ? "true" : "false") << '\n';
  return out.str();
}

std::span<const std::string_view> config_keys() { return kKeys; }

}  // namespace augdiff
