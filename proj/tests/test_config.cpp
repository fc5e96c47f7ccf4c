#include <catch2/catch_amalgamated.hpp>

#include "facke/config.hpp"

using facke::Config;
using facke::ConfigError;

TEST_CASE("empty config text yields all defaults") {
  auto cfg = Config::from_string("");
  CHECK(cfg.f64("lambda_id") == 30.0);
  CHECK(cfg.f64("lambda_recon") == 10.0);
  CHECK(cfg.f64("lambda_gp") == 1e-5);
  CHECK(cfg.f64("lambda_wfm") == 10.0);
  CHECK(cfg.i64("dataset.batch_size") == 4);
  CHECK(cfg.str("fm_variant") == "wfm");
  CHECK(cfg.i64("fm_split_layer") == 2);
  CHECK(cfg.i64("diffusion.steps") == 100);
  CHECK(cfg == Config());
}

TEST_CASE("set values are echoed") {
  auto cfg = Config::from_string("lambda_id = 30\ncvae.kl_weight = 1e-4\n");
  CHECK(cfg.echo().find("lambda_id = 30") != std::string::npos);
  CHECK(cfg.echo().find("cvae.kl_weight = 1e-4") != std::string::npos);
}

TEST_CASE("unknown keys are rejected with the line number") {
  CHECK_THROWS_WITH(Config::from_string("lambda_idd = 30\n"),
                    Catch::Matchers::ContainsSubstring("line 1") &&
                        Catch::Matchers::ContainsSubstring("lambda_idd"));
  CHECK_THROWS_WITH(Config::from_string("seed = 1\n\n# comment\nbogus.key = 2\n"),
                    Catch::Matchers::ContainsSubstring("line 4"));
}

TEST_CASE("malformed lines are rejected") {
  CHECK_THROWS_AS(Config::from_string("seed 1\n"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("seed = x\n").i64("seed"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("train.lr = abc\n").f64("train.lr"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("train.flip = maybe\n").flag("train.flip"), ConfigError);
  CHECK_THROWS_AS(Config().str("no.such.key"), ConfigError);
  CHECK_THROWS_AS(Config().set("no.such.key", "1"), ConfigError);
}

TEST_CASE("comments and whitespace are ignored") {
  auto cfg = Config::from_string("  seed = 42  # trailing comment\n# full comment\n\n");
  CHECK(cfg.i64("seed") == 42);
}

TEST_CASE("config round-trips through its echo") {
  auto cfg = Config::from_string("seed = 5\nlambda_id = 12.5\nstage = ingest,train\n");
  auto again = Config::from_string(cfg.echo());
  CHECK(cfg == again);
  CHECK(cfg.echo() == again.echo());
}

TEST_CASE("list values split on commas") {
  auto cfg = Config::from_string("ablate.lrs = 1e-4, 5e-5 ,1e-5,5e-6\n");
  auto lrs = cfg.list("ablate.lrs");
  REQUIRE(lrs.size() == 4);
  CHECK(lrs[0] == "1e-4");
  CHECK(lrs[3] == "5e-6");
  CHECK(Config::from_string("stage =\n").list("stage").empty());
}

TEST_CASE("default lr sweep matches the four finetune rates") {
  auto lrs = Config().list("ablate.lrs");
  REQUIRE(lrs == std::vector<std::string>{"1e-4", "5e-5", "1e-5", "5e-6"});
}

TEST_CASE("flags parse boolean spellings") {
  CHECK(Config::from_string("train.flip = true\n").flag("train.flip"));
  CHECK(Config::from_string("train.flip = 1\n").flag("train.flip"));
  CHECK_FALSE(Config::from_string("train.flip = no\n").flag("train.flip"));
}

TEST_CASE("missing config file errors") {
  CHECK_THROWS_AS(Config::from_file("/nonexistent/path/cfg.txt"), ConfigError);
}
