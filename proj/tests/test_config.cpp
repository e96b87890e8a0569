#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hwsf/config.hpp"

using namespace hwsf;

TEST_CASE("config parsing") {
  SUBCASE("empty document yields validated defaults") {
    const ExperimentConfig cfg = config_from_json_text("{}");
    CHECK(cfg.env.dt == 0.1);
    CHECK(cfg.fqi.gamma == 0.99);
    CHECK(cfg.fqi.alpha == 0.5);
    CHECK(cfg.fqi.beta == 0.2);
    CHECK(cfg.env.alpha0 == 2.0);
    CHECK(cfg.env.alpha1 == 2.0);
    CHECK(cfg.seed == 42);
  }
  SUBCASE("sections override defaults") {
    const std::string text = R"({
      "seed": 7,
      "output_dir": "runs",
      "env": {"dt": 0.05, "horizon": 50,
              "obstacles": [{"center": [1.0, 0.1], "radius": 0.3, "margin": 0.1}]},
      "fqi": {"alpha": 0.25, "beta": 0.0},
      "bounds": {"instances": 17}
    })";
    const ExperimentConfig cfg = config_from_json_text(text);
    CHECK(cfg.seed == 7);
    CHECK(cfg.output_dir == "runs");
    CHECK(cfg.env.dt == 0.05);
    CHECK(cfg.env.horizon == 50);
    REQUIRE(cfg.env.obstacles.size() == 1);
    CHECK(cfg.env.obstacles[0].radius == 0.3);
    CHECK(cfg.fqi.alpha == 0.25);
    CHECK(cfg.bounds.instances == 17);
  }
  SUBCASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(config_from_json_text(R"({"envv": {}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"env": {"dtt": 0.1}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"fqi": {"rho": 1.0}})"), ConfigError);
    CHECK_THROWS_AS(
        config_from_json_text(R"({"env": {"obstacles": [{"center": [0,0], "radius": 1, "r": 2}]}})"),
        ConfigError);
  }
  SUBCASE("type invariants are enforced before any computation") {
    CHECK_THROWS_AS(config_from_json_text(R"({"env": {"dt": -0.1}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"fqi": {"tau": 0.0}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"fqi": {"epsilon": -1.0}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"fqi": {"gamma": 1.0}})"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"simulate": {"w_source": "psychic"}})"),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json_text(R"({"simulate": {"filters": ["euclid"]}})"),
                    ConfigError);
  }
}

TEST_CASE("dotted-path overrides") {
  std::string text = "{}";
  apply_override(text, "env.dt=0.05");
  apply_override(text, "fqi.alpha=0");
  apply_override(text, "env.soft=true");
  apply_override(text, "output_dir=custom");
  const ExperimentConfig cfg = config_from_json_text(text);
  CHECK(cfg.env.dt == 0.05);
  CHECK(cfg.fqi.alpha == 0.0);
  CHECK(cfg.env.soft);
  CHECK(cfg.output_dir == "custom");

  SUBCASE("malformed overrides are rejected") {
    std::string t2 = "{}";
    CHECK_THROWS_AS(apply_override(t2, "no_equals_sign"), ConfigError);
  }
  SUBCASE("overridden unknown keys are still rejected") {
    std::string t2 = "{}";
    apply_override(t2, "env.unheard_of=1");
    CHECK_THROWS_AS(config_from_json_text(t2), ConfigError);
  }
}
