#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "core/tensor.hpp"

namespace augdiff {

/// Seeded generator with a platform-independent stream of draws.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Doubles are built from the top 53 bits of each word rather than
/// through <random> distributions, which are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent generator for (seed, stream) pairs, e.g. one per batch step.
  static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via the Marsaglia polar method. Draws come in pairs; the
  /// second value of a pair is cached for the next call.
  double normal();

  /// Uniform integer in [0, n), rejection-sampled.
  std::uint64_t below(std::uint64_t n);

  bool coin() { return (engine_() >> 63) != 0; }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

Tensor uniform(Rng& rng, double lo, double hi, Shape shape);
Tensor standard_normal(Rng& rng, Shape shape);

}  // namespace augdiff
