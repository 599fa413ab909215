#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "core/models.hpp"
#include "core/objectives.hpp"
#include "core/transforms.hpp"

namespace augdiff {

enum class Strategy { SimclrBase, Random, RandomSup, SelfsupM, MSup, Supervised };

/// Canonical snake_case name, e.g. "m_sup".
std::string_view strategy_name(Strategy s);
/// Accepts snake_case or kebab-case ("m-sup").
Strategy parse_strategy(std::string_view text);

/// Strategies with a transformation network.
bool uses_m(Strategy s);
/// Strategies that read labels during training.
bool uses_labels(Strategy s);

struct TrainConfig {
  Strategy strategy = Strategy::MSup;
  ObjectiveConfig objective;
  double lr_f = 1e-4;
  double lr_m = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  transforms::CompositionOrder order;
  double supervision_fraction = 0.1;
  double label_fraction = 0.1;  // supervised baseline only
  ArchSpec arch;
  std::size_t checkpoint_every = 10;
  bool record_time = false;  // wall-clock column of the metrics CSV; 0 when off

  /// Defaults of a strategy: its loss weights and M learning rate.
  static TrainConfig defaults(Strategy s);

  /// Rejects out-of-range values and loss weights the strategy does not use.
  void validate() const;
};

/// Raw `key = value` pairs. Later assignments override earlier ones.
using ConfigMap = std::map<std::string, std::string, std::less<>>;

/// Parses flat `key = value` text; blank lines and lines starting with '#'
/// are skipped. Unknown keys are rejected.
ConfigMap parse_config_text(std::string_view text);
ConfigMap load_config_file(const std::string& path);

/// Strategy defaults first, then every other key in the map.
TrainConfig build_config(const ConfigMap& values);

/// Every key with its resolved value; parse_config_text + build_config
/// reproduce the config exactly.
std::string format_config(const TrainConfig& cfg);

/// Documented keys in output order.
std::span<const std::string_view> config_keys();

}  // namespace augdiff
