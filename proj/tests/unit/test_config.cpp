#include <fstream>

#include "core/config.hpp"
#include "core/error.hpp"
#include "doctest.h"
#include "generators.hpp"

using namespace augdiff;

namespace {

TrainConfig from_text(const std::string& text) { return build_config(parse_config_text(text)); }

ErrorCode validate_error(const TrainConfig& cfg) {
  try {
    cfg.validate();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Runtime;
}

const Strategy kAll[] = {Strategy::SimclrBase, Strategy::Random,   Strategy::RandomSup,
                         Strategy::SelfsupM,   Strategy::MSup,     Strategy::Supervised};

// Random but valid config: alphas only where the strategy allows them.
TrainConfig random_config(Rng& rng) {
  auto cfg = TrainConfig::defaults(kAll[rng.below(6)]);
  auto& a = cfg.objective.alpha;
  for (auto& v : a)
    if (v != 0.0) v = rng.uniform(0.01, 20);
  cfg.objective.tau = rng.uniform(0.05, 3);
  cfg.objective.use_cosine = rng.coin();
  cfg.lr_f = rng.uniform(1e-6, 1e-2);
  cfg.lr_m = rng.uniform(1e-6, 1e-2);
  cfg.batch_size = gen::between(rng, 2, 128);
  cfg.epochs = gen::between(rng, 0, 300);
  cfg.seed = rng.next_u64();
  cfg.supervision_fraction = rng.uniform(0.01, 1);
  cfg.label_fraction = rng.uniform(0.01, 1);
  cfg.arch.encoder_widths = {gen::between(rng, 1, 9), gen::between(rng, 1, 9)};
  cfg.arch.proj_hidden = gen::between(rng, 1, 50);
  cfg.arch.proj_dim = gen::between(rng, 1, 50);
  cfg.checkpoint_every = gen::between(rng, 1, 20);
  cfg.record_time = rng.coin();
  return cfg;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("strategy names") {
    for (auto s : kAll) {
      const std::string snake(strategy_name(s));
      std::string kebab = snake;
      std::replace(kebab.begin(), kebab.end(), '_', '-');
      CHECK(parse_strategy(snake) == s);
      CHECK(parse_strategy(kebab) == s);
    }
    CHECK(strategy_name(Strategy::MSup) == "m_sup");
    CHECK_THROWS_AS(parse_strategy("msup"), Error);
  }

  TEST_CASE("strategy defaults") {
    using A = std::array<double, 5>;
    CHECK(TrainConfig::defaults(Strategy::MSup).objective.alpha == A{1, 10, 1, 1, 1});
    CHECK(TrainConfig::defaults(Strategy::SelfsupM).objective.alpha == A{1, 0, 1, 0, 0});
    CHECK(TrainConfig::defaults(Strategy::RandomSup).objective.alpha == A{0, 0, 1, 10, 10});
    CHECK(TrainConfig::defaults(Strategy::SimclrBase).objective.alpha == A{0, 0, 1, 0, 0});
    CHECK(TrainConfig::defaults(Strategy::Random).objective.alpha == A{0, 0, 1, 0, 0});
    CHECK(TrainConfig::defaults(Strategy::MSup).lr_m == 1e-3);
    CHECK(TrainConfig::defaults(Strategy::SelfsupM).lr_m == 1e-4);
    const TrainConfig d;
    CHECK(d.lr_f == 1e-4);
    CHECK(d.batch_size == 32);
    CHECK(d.epochs == 100);
    CHECK(d.supervision_fraction == 0.1);
    for (auto s : kAll) CHECK_NOTHROW(TrainConfig::defaults(s).validate());
  }

  TEST_CASE("omitted alphas resolve to the m_sup defaults in the snapshot") {
    const auto text = format_config(from_text("strategy = m-sup\n"));
    CHECK(text.find("alpha0 = 1\n") != std::string::npos);
    CHECK(text.find("alpha1 = 10\n") != std::string::npos);
    CHECK(text.find("alpha4 = 1\n") != std::string::npos);
  }

  TEST_CASE("later keys override and strategy applies first") {
    const auto cfg = from_text("alpha1 = 3\n# comment\n\nstrategy = m_sup\nepochs = 4\nepochs = 7\n");
    CHECK(cfg.objective.alpha[1] == 3);
    CHECK(cfg.epochs == 7);
  }

  TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_config_text("nonsense_key = 1\n"), Error);
    CHECK_THROWS_AS(parse_config_text("epochs 4\n"), Error);
    CHECK_THROWS_AS(from_text("epochs = -3\n"), Error);
    CHECK_THROWS_AS(from_text("tau = abc\n"), Error);
    CHECK_THROWS_AS(from_text("use_cosine = maybe\n"), Error);
    CHECK_THROWS_AS(load_config_file("/nonexistent/cfg.txt"), Error);
  }

  TEST_CASE("validation rules") {
    auto cfg = from_text("strategy = selfsup-m\nalpha1 = 10\n");
    CHECK(validate_error(cfg) == ErrorCode::InvalidArgument);
    cfg = from_text("strategy = random\nalpha3 = 1\n");
    CHECK(validate_error(cfg) == ErrorCode::InvalidArgument);
    cfg = from_text("strategy = supervised\nalpha2 = 1\n");
    CHECK(validate_error(cfg) == ErrorCode::InvalidArgument);
    cfg = from_text("batch_size = 1\n");
    CHECK(validate_error(cfg) == ErrorCode::InvalidArgument);
    cfg = from_text("supervision_fraction = 0\n");
    CHECK(validate_error(cfg) == ErrorCode::InvalidArgument);
    cfg = from_text("supervision_fraction = 1\n");
    CHECK_NOTHROW(cfg.validate());
    cfg = from_text("lr_f = 0\n");
    CHECK(validate_error(cfg) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("config file loads") {
    gen::TempDir dir;
    std::ofstream(dir / "c.txt") << "strategy = random-sup\nseed = 9\n";
    const auto cfg = build_config(load_config_file((dir / "c.txt").string()));
    CHECK(cfg.strategy == Strategy::RandomSup);
    CHECK(cfg.seed == 9);
  }

  TEST_CASE("every documented key appears in the snapshot") {
    const auto text = format_config(TrainConfig{});
    for (auto key : config_keys()) CHECK(text.find(std::string(key) + " = ") != std::string::npos);
  }
}

TEST_SUITE("config properties") {
  TEST_CASE("format then parse reproduces the config exactly") {
    for (auto seed : gen::seeds(50)) {
      Rng rng(seed);
      const auto cfg = random_config(rng);
      const auto text = format_config(cfg);
      const auto back = from_text(text);
      CHECK(format_config(back) == text);
      CHECK(back.objective.alpha == cfg.objective.alpha);
      CHECK(back.objective.tau == cfg.objective.tau);
      CHECK(back.lr_f == cfg.lr_f);
      CHECK(back.lr_m == cfg.lr_m);
      CHECK(back.seed == cfg.seed);
      CHECK(back.supervision_fraction == cfg.supervision_fraction);
      CHECK(back.arch == cfg.arch);
      CHECK_NOTHROW(back.validate());
    }
  }
}
