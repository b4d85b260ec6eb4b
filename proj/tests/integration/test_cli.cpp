#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "cellprog/cli.hpp"
#include "cellprog/features.hpp"
#include "cellprog/synthetic.hpp"
#include "fixtures.hpp"

using namespace cellprog;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cellprog");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int binary(const std::string& args) {
  const std::string cmd = std::string(CELLPROG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("validate reports clean synthetic data") {
  fixtures::TempDir dir;
  const auto r = cli({"validate", "--synthetic", (dir / "data").string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("cell_01: ok") != std::string::npos);
  CHECK(r.out.find("cell_08: ok") != std::string::npos);
  CHECK(binary("validate --manifest " + (dir / "data" / "manifest.json").string()) == 0);
}

TEST_CASE("validate flags decreasing timestamps with the validation exit code") {
  fixtures::TempDir dir;
  SyntheticOptions o;
  o.n_cells = 2;
  o.patterns_per_cell = 3;
  const auto manifest = write_synthetic(dir.path(), o);
  {
    std::ofstream out(dir / "cell_02_telemetry.csv", std::ios::app);
    out << "10,0,3.7,25\n";
  }
  const auto r = cli({"validate", "-m", manifest.string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.out.find("cell_01: ok") != std::string::npos);
  CHECK(r.out.find("cell_02: FAIL") != std::string::npos);
  CHECK(binary("validate -m " + manifest.string()) == 1);
}

TEST_CASE("configuration problems use the config exit code") {
  fixtures::TempDir dir;
  write_file(dir / "bad.json", R"({"models": [1, 1]})");
  CHECK(cli({"run", "--config", (dir / "bad.json").string(), "--synthetic", (dir / "d").string()}).code ==
        kExitConfig);
  write_file(dir / "model.json", R"({"preset": "model1", "lags": -2})");
  CHECK(cli({"train", "--synthetic", (dir / "d").string(), "--model-config", (dir / "model.json").string(),
             "-o", (dir / "m.json").string()})
            .code == kExitConfig);
  CHECK(cli({"train", "-o", (dir / "m.json").string()}).code == kExitConfig);
  CHECK(cli({"no-such-command"}).code == kExitConfig);
  CHECK(binary("run --threads nope") == 2);
  CHECK(binary("--help") == 0);
  const auto missing = cli({"validate", "-m", (dir / "missing.json").string()});
  CHECK(missing.code == kExitRuntime);
  CHECK(missing.err.find("error [") != std::string::npos);
}

TEST_CASE("train, forecast and evaluate round trip") {
  fixtures::TempDir dir;
  const auto data = (dir / "data").string();
  REQUIRE(cli({"featurize", "--synthetic", data, "-p", "2", "-o", (dir / "feat.csv").string()}).code == kExitOk);
  const auto features = read_dataset_csv(dir / "feat.csv");
  CHECK(features.X.cols() == 3);
  CHECK(features.size() == 8 * 30);

  const auto trained =
      cli({"train", "-m", (dir / "data" / "manifest.json").string(), "-p", "model4", "--restarts", "2", "-o",
           (dir / "model.json").string()});
  REQUIRE(trained.code == kExitOk);
  CHECK(trained.out.find("on 120 transitions") != std::string::npos);

  REQUIRE(cli({"forecast", "-m", (dir / "data" / "manifest.json").string(), "--model", (dir / "model.json").string(),
               "-o", (dir / "fc").string()})
              .code == kExitOk);
  CHECK(fs::exists(dir / "fc" / "cell_01.csv"));
  CHECK_FALSE(fs::exists(dir / "fc" / "cell_02.csv"));

  const auto ev = cli({"evaluate", "--forecasts", (dir / "fc").string(), "-o", (dir / "report.json").string()});
  REQUIRE(ev.code == kExitOk);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report.at("n_points") == 120);
  CHECK(report.at("rmse_q_norm").get<double>() < 0.1);
}

TEST_CASE("run pipeline is byte-identical across reruns and thread counts") {
  fixtures::TempDir dir;
  const auto data = (dir / "data").string();
  const auto a = cli({"run", "--synthetic", data, "-o", (dir / "a").string(), "--restarts", "2"});
  REQUIRE(a.code == kExitOk);
  CHECK(a.out.find("SKGB") != std::string::npos);
  for (int k = 1; k <= 6; ++k) {
    CHECK(fs::exists(dir / "a" / "reports" / ("model" + std::to_string(k) + ".json")));
    CHECK(fs::exists(dir / "a" / "forecasts" / ("model" + std::to_string(k)) / "cell_07.csv"));
  }
  REQUIRE(binary("run -m " + (dir / "data" / "manifest.json").string() + " -o " + (dir / "b").string() +
                 " --restarts 2 -j 4") == 0);
  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    CHECK_MESSAGE(slurp(e.path()) == slurp(dir / "b" / rel), rel.string());
    ++compared;
  }
  CHECK(compared == 6 * 2 + 6 * 4 + 1);

  const auto plots = cli({"plot-data", "-m", (dir / "data" / "manifest.json").string(), "--results",
                          (dir / "a").string(), "-o", (dir / "plots").string()});
  REQUIRE(plots.code == kExitOk);
  CHECK(fs::exists(dir / "plots" / "dq_scatter.csv"));
  CHECK(fs::exists(dir / "plots" / "input_histograms.csv"));
  fs::create_directories(dir / "empty");
  CHECK(cli({"plot-data", "--results", (dir / "empty").string(), "-o", (dir / "p2").string()}).code ==
        kExitRuntime);
}

TEST_CASE("run accepts a model subset and diagonal trajectories") {
  fixtures::TempDir dir;
  const auto r = cli({"run", "--synthetic", (dir / "data").string(), "--nonlinear", "--models", "2,model6", "-o",
                      (dir / "out").string(), "--diagonal", "--seed", "3", "--restarts", "1"});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::exists(dir / "out" / "reports" / "model2.json"));
  CHECK_FALSE(fs::exists(dir / "out" / "reports" / "model1.json"));
  const auto report = nlohmann::json::parse(slurp(dir / "out" / "reports" / "model2.json"));
  CHECK(report.at("config").at("diagonal_trajectory") == true);
  CHECK(report.at("config").at("gp").at("seed") == 3);
}
