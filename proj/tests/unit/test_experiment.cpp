#include <cstdlib>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "cellprog/experiment.hpp"
#include "cellprog/synthetic.hpp"
#include "fixtures.hpp"

using namespace cellprog;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticOptions small() {
  SyntheticOptions o;
  o.n_cells = 4;
  o.n_groups = 2;
  o.patterns_per_cell = 12;
  return o;
}

ExperimentConfig quick_config(const std::filesystem::path& manifest, const std::filesystem::path& out) {
  ExperimentConfig c;
  c.manifest = manifest;
  c.output_dir = out;
  c.models = {ModelConfig::preset(2), ModelConfig::preset(4), ModelConfig::preset(6)};
  for (auto& m : c.models) m.gp.restarts = 2;
  return c;
}

}  // namespace

TEST_CASE("experiment JSON resolves paths and shorthand presets") {
  const auto j = nlohmann::json::parse(R"({
    "manifest": "data/manifest.json", "output_dir": "/tmp/out",
    "models": [1, "model5", {"preset": 2, "name": "wide", "lags": 3}],
    "train_cells": ["cell_02"], "test_cells": ["cell_01"], "seed": 7, "threads": 2})");
  const auto c = experiment_from_json(j, "/base");
  CHECK(c.manifest == std::filesystem::path("/base/data/manifest.json"));
  CHECK(c.output_dir == std::filesystem::path("/tmp/out"));
  REQUIRE(c.models.size() == 3);
  CHECK(c.models[1].regressor == Regressor::GBoost);
  CHECK(c.models[2].name == "wide");
  CHECK(c.models[2].features.lags == 3);
  CHECK(c.seed == 7u);
  CHECK(c.threads == 2);
  CHECK(experiment_from_json(nlohmann::json::object()).models.size() == 6);
  CHECK_THROWS_KIND(experiment_from_json(nlohmann::json::parse(R"({"models": [1, 1]})")), ErrorKind::InvalidConfig);
  CHECK_THROWS_KIND(experiment_from_json(nlohmann::json::parse(R"({"train_cells": ["a"]})")),
                    ErrorKind::InvalidConfig);
  CHECK_THROWS_KIND(experiment_from_json(nlohmann::json::parse(R"({"threads": 0})")), ErrorKind::InvalidConfig);
  CHECK_THROWS_KIND(experiment_from_json(nlohmann::json::parse(R"({"train_cells": ["a"], "test_cells": ["a"]})")),
                    ErrorKind::InvalidConfig);
  CHECK_THROWS_KIND(experiment_from_json(nlohmann::json::parse(R"({"seed": "x"})")), ErrorKind::InvalidConfig);
}

TEST_CASE("explicit splits override parity") {
  const auto cells = generate_synthetic(small());
  ExperimentConfig c;
  c.train_cells = {"cell_01", "cell_03"};
  c.test_cells = {"cell_04"};
  const auto split = split_cells(cells, c);
  REQUIRE(split.train.size() == 2);
  REQUIRE(split.test.size() == 1);
  CHECK(split.test[0].cell_id == "cell_04");
  CHECK(split_cells(cells, ExperimentConfig{}).train[0].cell_id == "cell_02");
  c.test_cells = {"cell_99"};
  CHECK_THROWS_KIND(split_cells(cells, c), ErrorKind::InvalidConfig);
}

TEST_CASE("thread cap from the environment") {
  unsetenv("CELLPROG_THREADS");
  CHECK(effective_threads(4) == 4);
  CHECK(effective_threads(0) == 1);
  setenv("CELLPROG_THREADS", "2", 1);
  CHECK(effective_threads(4) == 2);
  CHECK(effective_threads(1) == 1);
  setenv("CELLPROG_THREADS", "zero", 1);
  CHECK_THROWS_KIND(effective_threads(4), ErrorKind::InvalidConfig);
  unsetenv("CELLPROG_THREADS");
}

TEST_CASE("run writes reports, models, forecasts and a table, reproducibly") {
  fixtures::TempDir dir;
  const auto manifest = write_synthetic(dir / "data", small());
  auto config = quick_config(manifest, dir / "serial");
  const auto results = run_experiment(config);
  REQUIRE(results.size() == 3);
  for (const auto& r : results) {
    CHECK(r.forecasts.size() == 2);
    CHECK(r.report.n_points > 0);
    CHECK(std::filesystem::exists(dir / "serial" / "reports" / (r.config.name + ".json")));
    CHECK(std::filesystem::exists(dir / "serial" / "models" / (r.config.name + ".json")));
    CHECK(std::filesystem::exists(dir / "serial" / "forecasts" / r.config.name / "cell_01.csv"));
  }
  const auto table = slurp(dir / "serial" / "table.txt");
  CHECK(table.find("SKGB") != std::string::npos);

  config.output_dir = dir / "parallel";
  config.threads = 3;
  run_experiment(config);
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "serial")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir / "serial");
    CHECK_MESSAGE(slurp(e.path()) == slurp(dir / "parallel" / rel), rel.string());
  }

  const auto files = write_plot_data(manifest, dir / "serial", dir / "plots");
  CHECK(files.size() == 5);
  for (const char* name : {"input_histograms.csv", "pattern_inputs.csv", "capacity_series.csv",
                           "dq_scatter.csv", "trajectories.csv"}) {
    CHECK(std::filesystem::file_size(dir / "plots" / name) > 0);
  }
}

TEST_CASE("failures name the model and plot data needs content") {
  fixtures::TempDir dir;
  const auto manifest = write_synthetic(dir / "data", small());
  auto config = quick_config(manifest, dir / "out");
  config.models = {ModelConfig::preset(2)};
  config.models[0].features.lags = 30;
  try {
    run_experiment(config);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("model2") != std::string::npos);
  }
  std::filesystem::create_directories(dir / "empty");
  CHECK_THROWS_KIND(write_plot_data(std::nullopt, dir / "empty", dir / "plots"), ErrorKind::EmptyOutput);
  CHECK_THROWS_KIND(write_plot_data(std::nullopt, std::nullopt, dir / "plots"), ErrorKind::InvalidConfig);
}
