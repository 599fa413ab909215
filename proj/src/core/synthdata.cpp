#include "core/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "core/binary_io.hpp"
#include "core/error.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"

namespace augdiff {

namespace {

constexpr char kMagic[] = "DTCL";
constexpr std::uint64_t kLabelStream = 0x6c6162656c73ULL;
constexpr double kBackgroundLevel = 0.1;
constexpr double kEllipseMin = 0.33, kEllipseMax = 0.35;
constexpr double kEllipseIntensityMin = 0.4, kEllipseIntensityMax = 0.45;
constexpr double kCenterJitter = 1.5;
constexpr double kLesionReach = 1.0;  // lesion centre lies within this fraction of the ellipse

// Separable Gaussian smoothing with clamped borders, then rescaled to unit std.
std::vector<double> smooth_noise(Rng& rng, std::size_t s, double sigma) {
  std::vector<double> field(s * s);
  for (auto& v : field) v = rng.normal();
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) total += w[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  for (auto& x : w) x /= total;
  const int n = static_cast<int>(s);
  auto at = [n](int i) { return std::clamp(i, 0, n - 1); };
  std::vector<double> tmp(s * s, 0.0);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += w[k + radius] * field[r * n + at(c + k)];
      tmp[r * n + c] = acc;
    }
  }
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += w[k + radius] * tmp[at(r + k) * n + c];
      field[r * n + c] = acc;
    }
  }
  double mean = 0.0, var = 0.0;
  for (double v : field) mean += v;
  mean /= static_cast<double>(field.size());
  for (double v : field) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(field.size()));
  for (auto& v : field) v = (v - mean) / std::max(sd, 1e-12);
  return field;
}

Lesion render(const SyntheticSpec& spec, bool positive, Rng& rng, double* out) {
  const auto s = spec.size;
  const double sd = static_cast<double>(s);
  const auto noise = smooth_noise(rng, s, spec.background_sigma);

  const double center = (sd - 1.0) / 2.0;
  const double cx = center + rng.uniform(-kCenterJitter, kCenterJitter);
  const double cy = center + rng.uniform(-kCenterJitter, kCenterJitter);
  const double ax = rng.uniform(kEllipseMin, kEllipseMax) * sd;
  const double ay = rng.uniform(kEllipseMin, kEllipseMax) * sd;
  const double level = rng.uniform(kEllipseIntensityMin, kEllipseIntensityMax);
  const double edge = std::min(ax, ay);

  double lx = 0.0, ly = 0.0, lr = 1.0, li = 0.0;
  if (positive) {
    li = rng.uniform(spec.lesion_intensity_min, spec.lesion_intensity_max);
    lr = rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max);
    // Uniform point in the inner ellipse.
    double u, v;
    do {
      u = rng.uniform(-1.0, 1.0);
      v = rng.uniform(-1.0, 1.0);
    } while (u * u + v * v > 1.0);
    lx = std::clamp(cx + kLesionReach * ax * u, lr, sd - 1.0 - lr);
    ly = std::clamp(cy + kLesionReach * ay * v, lr, sd - 1.0 - lr);
  }
  const double lsigma = lr / 1.5;

  for (std::size_t r = 0; r < s; ++r) {
    for (std::size_t c = 0; c < s; ++c) {
      const double x = static_cast<double>(c), y = static_cast<double>(r);
      const double rho = std::hypot((x - cx) / ax, (y - cy) / ay);
      double v = kBackgroundLevel + spec.background_std * noise[r * s + c] + level * stable_sigmoid((1.0 - rho) * edge);
      if (positive) {
        const double d2 = (x - lx) * (x - lx) + (y - ly) * (y - ly);
        v += li * std::exp(-0.5 * d2 / (lsigma * lsigma));
      }
      out[r * s + c] = static_cast<double>(static_cast<float>(std::clamp(v, 0.0, 1.0)));
    }
  }
  if (!positive) return {};
  return {lx, ly, lr, li};
}

[[noreturn]] void bad_labels(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorCode::Corrupt, "labels file '" + path.string() + "': " + what);
}

}  // namespace

void SyntheticSpec::validate() const {
  require(n_images >= 1, ErrorCode::InvalidArgument, "n_images must be at least 1");
  require(size >= 16 && size % 16 == 0, ErrorCode::InvalidArgument,
          "image size must be a positive multiple of 16, got " + std::to_string(size));
  require(positive_fraction > 0.0 && positive_fraction < 1.0, ErrorCode::InvalidArgument,
          "positive fraction must lie in (0,1)");
  require(lesion_intensity_min > 0.0 && lesion_intensity_min <= lesion_intensity_max && lesion_intensity_max <= 1.0,
          ErrorCode::InvalidArgument, "lesion intensity range must satisfy 0 < min <= max <= 1");
  require(lesion_radius_min > 0.0 && lesion_radius_min <= lesion_radius_max &&
              lesion_radius_max <= static_cast<double>(size) / 4.0,
          ErrorCode::InvalidArgument, "lesion radius range must satisfy 0 < min <= max <= size/4");
  require(background_sigma > 0.0 && background_std >= 0.0, ErrorCode::InvalidArgument,
          "background smoothness must be positive and its std nonnegative");
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

void Dataset::validate() const {
  require(images.rank() == 4 && images.dim(1) == 1 && images.dim(2) == images.dim(3), ErrorCode::ShapeMismatch,
          "dataset images must be [N,1,s,s], got " + to_string(images.shape()));
  require(images.dim(0) == labels.size() && labels.size() == groups.size(), ErrorCode::ShapeMismatch,
          "dataset holds " + std::to_string(images.dim(0)) + " images, " + std::to_string(labels.size()) +
              " labels and " + std::to_string(groups.size()) + " group ids");
  for (int y : labels) require(y == 0 || y == 1, ErrorCode::InvalidArgument, "labels must be 0 or 1");
  for (double v : images.data()) {
    require(v >= 0.0 && v <= 1.0, ErrorCode::InvalidArgument, "pixel values must lie in [0,1]");
  }
}

Tensor Dataset::gather(const std::vector<std::size_t>& indices) const {
  const auto s = image_size();
  const auto plane = s * s;
  Tensor out({indices.size(), 1, s, s});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    require(indices[k] < size(), ErrorCode::InvalidArgument, "dataset index out of range");
    std::copy_n(images.ptr() + indices[k] * plane, plane, out.ptr() + k * plane);
  }
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.images = gather(indices);
  for (auto i : indices) {
    out.labels.push_back(labels[i]);
    out.groups.push_back(groups[i]);
    if (!lesions.empty()) out.lesions.push_back(lesions[i]);
  }
  return out;
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const auto n = spec.n_images, s = spec.size;
  Dataset data;
  data.images = Tensor({n, 1, s, s});
  data.labels.assign(n, 0);
  data.groups.resize(n);
  data.lesions.resize(n);

  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.positive_fraction));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng label_rng = Rng::stream(spec.seed, kLabelStream);
  label_rng.shuffle(order);
  for (std::size_t k = 0; k < n_pos; ++k) data.labels[order[k]] = 1;

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::stream(spec.seed, i);
    data.lesions[i] = render(spec, data.labels[i] == 1, rng, data.images.ptr() + i * s * s);
    data.groups[i] = spec.group_offset + i;
  }
  return data;
}

std::filesystem::path labels_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p.replace_extension(".csv");
  return p;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  require(labels_path(path) != path, ErrorCode::InvalidArgument, "dataset path must not end in .csv");
  io::Writer w;
  w.raw(std::string(kMagic, 4));
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.size()));
  w.u32(static_cast<std::uint32_t>(data.image_size()));
  w.u32(static_cast<std::uint32_t>(data.image_size()));
  for (double v : data.images.data()) w.f32(static_cast<float>(v));
  w.write_file(path);

  const auto csv = labels_path(path);
  std::ofstream out(csv, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open '" + csv.string() + "' for writing");
  out << "index,label,group\n";
  for (std::size_t i = 0; i < data.size(); ++i) out << i << ',' << data.labels[i] << ',' << data.groups[i] << '\n';
  require(static_cast<bool>(out), ErrorCode::Io, "failed writing '" + csv.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  io::Reader r(path);
  if (r.remaining() < 4 || r.raw(4) != std::string(kMagic, 4)) {
    throw Error(ErrorCode::BadMagic, "'" + path.string() + "' is not a dataset file (bad magic)");
  }
  const auto version = r.u32();
  if (version != kDatasetVersion) {
    throw Error(ErrorCode::BadVersion, "'" + path.string() + "' has dataset version " + std::to_string(version) +
                                           ", expected " + std::to_string(kDatasetVersion));
  }
  const std::size_t n = r.u32(), h = r.u32(), w = r.u32();
  if (n == 0 || h == 0 || h != w) {
    r.corrupt("bad header shape N=" + std::to_string(n) + " H=" + std::to_string(h) + " W=" + std::to_string(w));
  }
  if (r.remaining() != n * h * w * 4) {
    r.corrupt("expected " + std::to_string(n * h * w * 4) + " pixel bytes, found " + std::to_string(r.remaining()));
  }
  Dataset data;
  data.images = Tensor({n, 1, h, w});
  for (auto& v : data.images.data()) {
    v = static_cast<double>(r.f32());
    if (!(v >= 0.0 && v <= 1.0)) r.corrupt("pixel value outside [0,1]");
  }

  const auto csv = labels_path(path);
  std::ifstream in(csv);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open labels file '" + csv.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "index,label,group") bad_labels(csv, "missing header index,label,group");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    long long index = -1, label = -1;
    unsigned long long group = 0;
    char c1 = 0, c2 = 0;
    if (!(row >> index >> c1 >> label >> c2 >> group) || c1 != ',' || c2 != ',' || !(row >> std::ws).eof()) {
      bad_labels(csv, "malformed row '" + line + "'");
    }
    if (index != static_cast<long long>(data.labels.size())) {
      bad_labels(csv, "row index " + std::to_string(index) + " out of order");
    }
    if (label != 0 && label != 1) bad_labels(csv, "label " + std::to_string(label) + " is not 0 or 1");
    data.labels.push_back(static_cast<int>(label));
    data.groups.push_back(group);
  }
  if (data.labels.size() != n) {
    bad_labels(csv, "has " + std::to_string(data.labels.size()) + " rows but the dataset holds " + std::to_string(n) +
                        " images");
  }
  return data;
}

std::vector<std::uint64_t> read_group_ids(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::vector<std::uint64_t> out;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != line.size()) throw Error(ErrorCode::Corrupt, "'" + path.string() + "': bad group id '" + line + "'");
    out.push_back(v);
  }
  return out;
}

void write_group_ids(std::span<const std::uint64_t> groups, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write '" + path.string() + "'");
  for (auto g : groups) out << g << '\n';
  require(static_cast<bool>(out), ErrorCode::Io, "failed writing '" + path.string() + "'");
}

}  // namespace augdiff
