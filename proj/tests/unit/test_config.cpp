#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dbmt/config.hpp"
#include "dbmt/error.hpp"

using namespace dbmt;

TEST_SUITE("config") {

TEST_CASE("parse and typed getters") {
  const auto c = Config::parse(
      "# comment\n"
      "[sampler]\n"
      "T = 64\n"
      "paths=10   \n"
      "\n"
      "[training]\n"
      "hidden = 32, 16\n"
      "learning_rate = 1e-3\n"
      "[gp]\n"
      "allow_truncation = false\n"
      "sizes = 16,32\n");
  CHECK(c.get_int("sampler", "T", 1) == 64);
  CHECK(c.get_int("sampler", "paths", 1) == 10);
  CHECK(c.get_u64("sampler", "seed", 5) == 5);
  CHECK(c.get_ints("training", "hidden", {}) == std::vector<int>{32, 16});
  CHECK(c.get_double("training", "learning_rate", 0.0) == 1e-3);
  CHECK_FALSE(c.get_bool("gp", "allow_truncation", true));
  CHECK(c.get_doubles("gp", "sizes", {}) == std::vector<double>{16.0, 32.0});
  CHECK(c.get_string("sde", "kind", "bm") == "bm");
  CHECK(c.has("sampler", "T"));
  CHECK_FALSE(c.has("sampler", "seed"));
}

TEST_CASE("unknown sections, keys and malformed values are rejected") {
  CHECK_THROWS_AS(Config::parse("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("[sampler]\nTT = 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("T = 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("[sampler\nT = 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::parse("[sampler]\nT\n"), ConfigError);
  const auto c = Config::parse("[sampler]\nT = ten\n[gp]\nallow_truncation = maybe\n");
  CHECK_THROWS_AS(c.get_int("sampler", "T", 1), ConfigError);
  CHECK_THROWS_AS(c.get_bool("gp", "allow_truncation", true), ConfigError);
  Config d;
  CHECK_THROWS_AS(d.set("sampler", "bogus", "1"), ConfigError);
  CHECK_THROWS_AS(Config::load("/nonexistent/dbmt.ini"), ConfigError);
}

TEST_CASE("resolved text re-parses to the same values") {
  auto c = Config::parse("[sampler]\nT = 64\n");
  c.set("sampler", "seed", "9");
  c.get_int("sampler", "T", 1);
  c.get_int("sampler", "paths", 123);
  c.get_double("training", "t_eps", 1e-3);
  const std::string text = c.resolved_text();
  const auto back = Config::parse(text);
  CHECK(back.get_int("sampler", "T", 0) == 64);
  CHECK(back.get_int("sampler", "paths", 0) == 123);
  CHECK(back.get_u64("sampler", "seed", 0) == 9);
  CHECK(back.get_double("training", "t_eps", 0.0) == 1e-3);
  back.get_int("sampler", "T", 0);
  back.get_int("sampler", "paths", 0);
  back.get_u64("sampler", "seed", 0);
  back.get_double("training", "t_eps", 0.0);
  CHECK(back.resolved_text() == text);

  const auto path = std::filesystem::temp_directory_path() / "dbmt_cfg.ini";
  c.write_resolved(path);
  CHECK(Config::load(path).get_int("sampler", "paths", 0) == 123);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
