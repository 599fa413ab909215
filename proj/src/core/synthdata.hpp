#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "core/tensor.hpp"

namespace augdiff {

/// Parameters of the synthetic "pathology presence" task. Every image holds a
/// smoothed noise background and a soft bright ellipse; positives also carry a
/// small Gaussian lesion inside the ellipse.
struct SyntheticSpec {
  std::size_t n_images = 2000;
  std::size_t size = 32;
  double lesion_intensity_min = 0.3;
  double lesion_intensity_max = 0.6;
  double lesion_radius_min = 2.0;
  double lesion_radius_max = 4.0;
  double background_sigma = 4.0;
  double background_std = 0.35;
  double positive_fraction = 0.5;
  std::uint64_t seed = 0;
  /// Added to each image index to form its group id; lets two generated pools
  /// carry disjoint ids.
  std::uint64_t group_offset = 0;

  void validate() const;
};

/// Where generate() put a lesion. radius 0 marks a negative image.
struct Lesion {
  double x = 0.0, y = 0.0;  // column, row
  double radius = 0.0;
  double intensity = 0.0;
};

struct Dataset {
  Tensor images;                     // [N,1,s,s], values in [0,1]
  std::vector<int> labels;           // 0 or 1
  std::vector<std::uint64_t> groups;
  /// Ground truth from generate(); empty for loaded datasets.
  std::vector<Lesion> lesions;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return images.dim(2); }
  std::size_t positives() const;
  void validate() const;

  Dataset subset(const std::vector<std::size_t>& indices) const;
  /// Images [k,1,s,s] for the given indices.
  Tensor gather(const std::vector<std::size_t>& indices) const;
};

Dataset generate(const SyntheticSpec& spec);

/// Sibling label file of a dataset: the path with its extension replaced by ".csv".
std::filesystem::path labels_path(const std::filesystem::path& dataset_path);

// Dataset file, little-endian: "DTCL" | u32 version (1) | u32 N | u32 H | u32 W
// | N*H*W f32 pixels row-major. Labels live in the sibling CSV with header
// index,label,group.
inline constexpr std::uint32_t kDatasetVersion = 1;

/// Pixels are written as f32, so a dataset whose pixels are f32-representable
/// (as generate() guarantees) round-trips bit-exactly.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
/// Throws Error with code Io, BadMagic, BadVersion or Corrupt.
Dataset load_dataset(const std::filesystem::path& path);

/// Group ids listed one per line, as train() writes them to train_groups.txt.
std::vector<std::uint64_t> read_group_ids(const std::filesystem::path& path);
void write_group_ids(std::span<const std::uint64_t> groups, const std::filesystem::path& path);

}  // namespace augdiff
