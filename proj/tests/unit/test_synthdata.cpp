#include <cmath>
#include <fstream>

#include "core/error.hpp"
#include "core/synthdata.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace augdiff;

namespace {

SyntheticSpec small_spec(std::uint64_t seed, std::size_t n = 64) {
  SyntheticSpec s;
  s.seed = seed;
  s.n_images = n;
  return s;
}

ErrorCode load_error(const std::filesystem::path& p) {
  try {
    load_dataset(p);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("dataset unexpectedly loaded");
  return ErrorCode::Runtime;
}

// Pairwise AUC with ties counted half.
double brute_auc(const std::vector<double>& score, const std::vector<int>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        den += 1;
        num += score[i] > score[j] ? 1.0 : score[i] == score[j] ? 0.5 : 0.0;
      }
  return num / den;
}

// L2-regularized logistic regression on standardized raw pixels, plain
// full-batch gradient descent, first half trains and second half scores.
double raw_pixel_probe_auc(const Dataset& d) {
  const std::size_t n = d.size(), p = d.image_size() * d.image_size(), half = n / 2;
  std::vector<double> mu(p, 0.0), sd(p, 0.0);
  for (std::size_t i = 0; i < half; ++i)
    for (std::size_t k = 0; k < p; ++k) mu[k] += d.images[i * p + k];
  for (auto& v : mu) v /= static_cast<double>(half);
  for (std::size_t i = 0; i < half; ++i)
    for (std::size_t k = 0; k < p; ++k) sd[k] += std::pow(d.images[i * p + k] - mu[k], 2);
  for (auto& v : sd) v = std::sqrt(v / static_cast<double>(half)) + 1e-8;
  auto x = [&](std::size_t i, std::size_t k) { return (d.images[i * p + k] - mu[k]) / sd[k]; };

  std::vector<double> w(p, 0.0), grad(p);
  double b = 0;
  const double lr = 0.05, l2 = 1e-2;
  for (int it = 0; it < 300; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0;
    for (std::size_t i = 0; i < half; ++i) {
      double z = b;
      for (std::size_t k = 0; k < p; ++k) z += w[k] * x(i, k);
      const double r = 1.0 / (1.0 + std::exp(-z)) - d.labels[i];
      for (std::size_t k = 0; k < p; ++k) grad[k] += r * x(i, k);
      gb += r;
    }
    for (std::size_t k = 0; k < p; ++k) w[k] -= lr * (grad[k] / static_cast<double>(half) + l2 * w[k]);
    b -= lr * gb / static_cast<double>(half);
  }
  std::vector<double> score;
  std::vector<int> y;
  for (std::size_t i = half; i < n; ++i) {
    double z = b;
    for (std::size_t k = 0; k < p; ++k) z += w[k] * x(i, k);
    score.push_back(z);
    y.push_back(d.labels[i]);
  }
  return brute_auc(score, y);
}

double class_mean_gap(const Dataset& d) {
  const std::size_t p = d.image_size() * d.image_size();
  double pos = 0, neg = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double m = 0;
    for (std::size_t k = 0; k < p; ++k) m += d.images[i * p + k];
    (d.labels[i] ? pos : neg) += m / static_cast<double>(p);
  }
  const double np = static_cast<double>(d.positives());
  return pos / np - neg / (static_cast<double>(d.size()) - np);
}

}  // namespace

TEST_SUITE("synthdata") {
  TEST_CASE("generation is deterministic by seed") {
    const auto a = generate(small_spec(5)), b = generate(small_spec(5));
    CHECK(bitwise_equal(a.images, b.images));
    CHECK(a.labels == b.labels);
    CHECK_FALSE(bitwise_equal(a.images, generate(small_spec(6)).images));
  }

  TEST_CASE("positive fraction is exact") {
    SyntheticSpec s;
    s.seed = 1;
    const auto d = generate(s);
    CHECK(d.size() == 2000);
    CHECK(d.positives() == 1000);
    s.n_images = 10;
    s.positive_fraction = 0.3;
    CHECK(generate(s).positives() == 3);
  }

  TEST_CASE("pixels lie in [0,1] and group ids follow the offset") {
    auto s = small_spec(2);
    s.group_offset = 500;
    const auto d = generate(s);
    for (double v : d.images.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.groups[i] == 500 + i);
  }

  TEST_CASE("spec validation") {
    auto s = small_spec(1);
    s.size = 24;
    CHECK_THROWS_AS(generate(s), Error);
    s = small_spec(1);
    s.positive_fraction = 1.0;
    CHECK_THROWS_AS(generate(s), Error);
    s = small_spec(1);
    s.lesion_radius_max = 9;
    CHECK_THROWS_AS(generate(s), Error);
  }

  TEST_CASE("save and load round trip bitwise") {
    gen::TempDir dir;
    const auto d = generate(small_spec(3));
    save_dataset(d, dir / "d.dtcl");
    const auto back = load_dataset(dir / "d.dtcl");
    CHECK(bitwise_equal(d.images, back.images));
    CHECK(d.labels == back.labels);
    CHECK(d.groups == back.groups);
    CHECK(back.lesions.empty());
  }

  TEST_CASE("corrupt files give distinct errors") {
    gen::TempDir dir;
    const auto d = generate(small_spec(4, 8));
    save_dataset(d, dir / "d.dtcl");
    std::ifstream in(dir / "d.dtcl", std::ios::binary);
    const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    auto write = [&](const std::string& name, std::vector<char> b) {
      std::ofstream(dir / name, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
      std::filesystem::copy_file(dir / "d.csv", dir / (name.substr(0, name.find('.')) + ".csv"),
                                 std::filesystem::copy_options::overwrite_existing);
    };
    auto magic = bytes;
    magic[1] = 'X';
    write("m.dtcl", magic);
    CHECK(load_error(dir / "m.dtcl") == ErrorCode::BadMagic);
    auto version = bytes;
    version[4] = 7;
    write("v.dtcl", version);
    CHECK(load_error(dir / "v.dtcl") == ErrorCode::BadVersion);
    auto shape = bytes;
    shape[12] = 17;  // H no longer matches W
    write("s.dtcl", shape);
    CHECK(load_error(dir / "s.dtcl") == ErrorCode::Corrupt);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 4);
    write("t.dtcl", truncated);
    CHECK(load_error(dir / "t.dtcl") == ErrorCode::Corrupt);
    CHECK(load_error(dir / "missing.dtcl") == ErrorCode::Io);
  }

  TEST_CASE("label file row count mismatch is rejected") {
    gen::TempDir dir;
    save_dataset(generate(small_spec(4, 8)), dir / "d.dtcl");
    {
      std::ofstream out(dir / "d.csv", std::ios::app);
      out << "8,1,8\n";
    }
    CHECK(load_error(dir / "d.dtcl") == ErrorCode::Corrupt);
    save_dataset(generate(small_spec(4, 8)), dir / "d.dtcl");
    std::ifstream in(dir / "d.csv");
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    in.close();
    std::ofstream out(dir / "d.csv", std::ios::trunc);
    for (std::size_t i = 0; i + 1 < lines.size(); ++i) out << lines[i] << '\n';
    out.close();
    CHECK(load_error(dir / "d.dtcl") == ErrorCode::Corrupt);
  }

  TEST_CASE("raw-pixel linear probe finds a weak but real signal") {
    SyntheticSpec s;
    s.seed = 1;
    const double auc = raw_pixel_probe_auc(generate(s));
    MESSAGE("raw-pixel probe AUC " << auc);
    CHECK(auc > 0.6);
    CHECK(auc < 0.95);
  }
}

TEST_SUITE("synthdata properties") {
  TEST_CASE("lesions stay inside the image") {
    for (auto seed : gen::seeds(5)) {
      auto s = small_spec(seed, 200);
      s.lesion_radius_max = 8;  // push radii toward the border constraint
      const auto d = generate(s);
      const double last = static_cast<double>(s.size) - 1.0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& l = d.lesions[i];
        CHECK((l.radius > 0) == (d.labels[i] == 1));
        if (d.labels[i] == 0) continue;
        CHECK(l.x - l.radius >= 0.0);
        CHECK(l.y - l.radius >= 0.0);
        CHECK(l.x + l.radius <= last);
        CHECK(l.y + l.radius <= last);
      }
    }
  }

  TEST_CASE("class mean intensity gap is positive and stable across seeds") {
    // Small images keep the lesion a sizeable share of the pixels, so the gap
    // is not swamped by the anatomy's own intensity spread.
    std::vector<double> gaps;
    for (auto seed : gen::seeds(5)) {
      auto s = small_spec(seed, 20000);
      s.size = 16;
      gaps.push_back(class_mean_gap(generate(s)));
    }
    double mean = 0;
    for (double g : gaps) mean += g / static_cast<double>(gaps.size());
    for (double g : gaps) {
      CHECK(g > 0.0);
      CHECK(g == doctest::Approx(mean).epsilon(0.2));
    }
  }
}
