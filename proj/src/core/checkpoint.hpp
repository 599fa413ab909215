#pragma once

#include <filesystem>

#include "core/models.hpp"

namespace augdiff {

// Checkpoint layout, little-endian:
//   "AUGD" | u32 version (1) | u32 record count
//   per record: u32 name length | UTF-8 name | u32 rank | u32 dims[rank] | f64 payload
// Weight records come first in store order, followed by the optimizer state
// of each slot as records named "<slot>.m", "<slot>.v" and "<slot>.t" (the
// Adam step counter, stored as a one-element tensor).

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);

/// Throws Error with code Io, BadMagic, BadVersion or Corrupt.
ParameterStore load_checkpoint(const std::filesystem::path& path);

}  // namespace augdiff
