#include <doctest.h>

#include "apm/config.hpp"
#include "helpers.hpp"

using namespace apm;
using apm::test::TempDir;

TEST_CASE("parse_config_text handles the supported value kinds") {
  const auto t = parse_config_text(
      "# leading comment\n"
      "top = 3\n"
      "[hyper]\n"
      "lambda_a = 0.95  # trailing comment\n"
      "diagonal_omega = false\n"
      "name = \"all # not a comment\"\n"
      "grid_vals = [0.9, 0.95, 0.99]\n"
      "names = [\"a\", \"b\"]\n",
      "inline");
  CHECK(t.get_integer("top", -1) == 3);
  CHECK(t.get_number("hyper.lambda_a", 0.0) == 0.95);
  CHECK(t.get_bool("hyper.diagonal_omega", true) == false);
  CHECK(t.get_string("hyper.name", "") == "all # not a comment");
  CHECK(t.get_numbers("hyper.grid_vals") == std::vector<double>{0.9, 0.95, 0.99});
  CHECK(t.get_strings("hyper.names") == std::vector<std::string>{"a", "b"});
  CHECK(t.get_number("hyper.absent", 7.5) == 7.5);
}

TEST_CASE("parse_config_text rejects malformed input with line numbers") {
  auto expect_fail = [](const std::string& body, const std::string& needle) {
    try {
      parse_config_text(body, "cfg");
      FAIL("expected DataError for: ", body);
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_fail("x == 1\n", "cfg:1");
  expect_fail("[unterminated\n", "cfg:1");
  expect_fail("x = [1, \"a\"]\n", "mixed-type");
  expect_fail("x = nonsense\n", "unrecognized");
  expect_fail("x = 1\nx = 2\n", "duplicate");
  expect_fail("x = \"unterminated\n", "unterminated");
}

TEST_CASE("ConfigTable type mismatches are reported by key") {
  const auto t = parse_config_text("x = 1\n", "cfg");
  try {
    t.get_string("x", "");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
  CHECK_THROWS_AS(t.get_bool("x", false), DataError);
}

TEST_CASE("get_integer accepts whole numbers and rejects fractions") {
  const auto t = parse_config_text("a = 5\nb = 5.5\n", "cfg");
  CHECK(t.get_integer("a", 0) == 5);
  CHECK_THROWS_AS(t.get_integer("b", 0), DataError);
}

TEST_CASE("load_run_config maps tables onto typed fields") {
  TempDir dir{"config"};
  const auto path = dir.file("run.toml",
                             "[data]\n"
                             "dir = \"/tmp/data\"\n"
                             "[output]\n"
                             "dir = \"/tmp/out\"\n"
                             "[hyper]\n"
                             "lambda_a = 0.9\n"
                             "active_model = \"momentum\"\n"
                             "universe_size = 40\n"
                             "[grid]\n"
                             "gamma_a = [5.0, 10.0]\n"
                             "active_models = [\"all\", \"value\"]\n"
                             "[split]\n"
                             "is_fraction = 0.7\n"
                             "folds = 4\n"
                             "min_train = 80\n"
                             "[evaluate]\n"
                             "cscv_blocks = 8\n"
                             "[synth]\n"
                             "assets = 25\n"
                             "seed = 99\n");
  const auto cfg = load_run_config(path);
  CHECK(cfg.data_dir == "/tmp/data");
  CHECK(cfg.output_dir == "/tmp/out");
  CHECK(cfg.hyper.lambda_a == 0.9);
  CHECK(cfg.hyper.active_model == ActiveModel::kMomentum);
  CHECK(cfg.hyper.universe_size == 40);
  CHECK(cfg.grid.gamma_a == std::vector<double>{5.0, 10.0});
  REQUIRE(cfg.grid.active_models.size() == 2);
  CHECK(cfg.grid.active_models[1] == ActiveModel::kValue);
  CHECK(cfg.split.is_fraction == 0.7);
  CHECK(cfg.split.n_folds == 4);
  CHECK(cfg.cscv_blocks == 8);
  CHECK(cfg.synth.n_assets == 25);
  CHECK(cfg.synth.seed == 99);
}

TEST_CASE("load_run_config rejects unknown keys and bad domains") {
  TempDir dir{"config_bad"};
  CHECK_THROWS_AS(load_run_config(dir.file("a.toml", "[hyper]\nlambda_typo = 0.9\n")),
                  DataError);
  CHECK_THROWS_AS(load_run_config(dir.file("b.toml", "[hyper]\nlambda_a = 1.5\n")),
                  DataError);
  CHECK_THROWS_AS(load_run_config(dir.file("c.toml", "[split]\nis_fraction = 1.5\n")),
                  DataError);
  CHECK_THROWS_AS(
      load_run_config(dir.file("d.toml", "[hyper]\nactive_model = \"sideways\"\n")),
      DataError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.toml"), DataError);
}
