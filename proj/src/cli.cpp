#include "cellprog/cli.hpp"

#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cellprog/data_ingest.hpp"
#include "cellprog/error.hpp"
#include "cellprog/experiment.hpp"
#include "cellprog/features.hpp"
#include "cellprog/synthetic.hpp"
#include "cellprog/transition.hpp"
#include "cellprog/version.hpp"

namespace cellprog {

namespace {

namespace fs = std::filesystem;

struct DataOptions {
  std::string manifest;
  std::string synthetic_dir;
  bool nonlinear = false;
  std::uint64_t synthetic_seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--manifest,-m", manifest, "Cell manifest (JSON)");
    app->add_option("--synthetic", synthetic_dir,
                    "Generate the built-in synthetic dataset into DIR and use it");
    app->add_flag("--nonlinear", nonlinear, "Synthetic fade is nonlinear in throughput");
    app->add_option("--synthetic-seed", synthetic_seed, "Synthetic dataset seed");
  }

  bool given() const { return !manifest.empty() || !synthetic_dir.empty(); }

  fs::path resolve() const {
    if (!synthetic_dir.empty()) {
      SyntheticOptions o;
      o.nonlinear = nonlinear;
      o.seed = synthetic_seed;
      return write_synthetic(synthetic_dir, o);
    }
    if (manifest.empty()) throw Error(ErrorKind::InvalidConfig, "either --manifest or --synthetic is required");
    return manifest;
  }
};

struct ModelOptions {
  std::string config_file;
  std::string preset;
  std::string kernel;
  std::optional<int> lags;
  std::optional<int> restarts;
  std::optional<std::uint64_t> seed;
  bool diagonal = false;
  bool latent = false;

  void add_to(CLI::App* app) {
    app->add_option("--model-config", config_file, "Model config JSON");
    app->add_option("--preset,-p", preset, "Preset 1-6 (or model1..model6)");
    app->add_option("--kernel", kernel, "Override the GP kernel (matern52, squared_exponential, linear)");
    app->add_option("--lags", lags, "Override the number of lags");
    app->add_option("--restarts", restarts, "Override the GP optimizer restarts");
    app->add_option("--seed", seed, "Override the model seed");
    app->add_flag("--diagonal", diagonal, "Ignore cross-covariances along trajectories");
    app->add_flag("--latent", latent, "Predict the latent function without observation noise");
  }

  ModelConfig build() const {
    nlohmann::json j = nlohmann::json::object();
    if (!config_file.empty()) j = read_json_file(config_file);
    if (!preset.empty()) j["preset"] = preset_json(preset);
    if (!j.contains("preset") && config_file.empty()) j["preset"] = 1;
    auto c = j.get<ModelConfig>();
    apply(c);
    return c;
  }

  void apply(ModelConfig& c) const {
    if (!kernel.empty()) c.kernel = parse_kernel_family(kernel);
    if (lags) c.features.lags = *lags;
    if (restarts) c.gp.restarts = *restarts;
    if (seed) {
      c.gp.seed = *seed;
      c.boost.seed = *seed;
    }
    if (diagonal) c.diagonal_trajectory = true;
    if (latent) c.include_noise = false;
    c.features.validate();
  }

  static nlohmann::json preset_json(const std::string& s) {
    if (s.size() == 1 && s[0] >= '0' && s[0] <= '9') return s[0] - '0';
    return s;
  }

  static nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, fmt::format("cannot read '{}'", path.string()));
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::InvalidConfig, fmt::format("'{}': {}", path.string(), e.what()));
    }
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  out << text;
}

std::vector<CellRecord> select_cells(const fs::path& manifest, const std::string& which) {
  auto cells = load_dataset(manifest);
  if (which == "all") return cells;
  auto split = split_train_test(std::move(cells));
  return which == "train" ? std::move(split.train) : std::move(split.test);
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidRecord:
      return kExitValidation;
    case ErrorKind::InvalidConfig:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

void configure_logging(const std::string& level) {
  auto logger = spdlog::get("cellprog");
  if (!logger) logger = spdlog::stderr_color_mt("cellprog");
  spdlog::set_default_logger(logger);
  const auto parsed = spdlog::level::from_str(level);
  if (parsed == spdlog::level::off && level != "off") {
    throw Error(ErrorKind::InvalidConfig, fmt::format("unknown log level '{}'", level));
  }
  spdlog::set_level(parsed);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Battery capacity-fade prognostics with load-pattern transition models", "cellprog"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  DataOptions validate_data;
  auto* validate = app.add_subcommand("validate", "Check every cell of a dataset");
  validate_data.add_to(validate);

  DataOptions feat_data;
  ModelOptions feat_model;
  std::string feat_out;
  std::string feat_cells = "all";
  auto* featurize = app.add_subcommand("featurize", "Write the transition dataset as CSV");
  feat_data.add_to(featurize);
  feat_model.add_to(featurize);
  featurize->add_option("--out,-o", feat_out, "Output CSV")->required();
  featurize->add_option("--cells", feat_cells, "all, train or test")
      ->check(CLI::IsMember({"all", "train", "test"}));

  DataOptions train_data;
  ModelOptions train_model;
  std::string train_out;
  auto* train = app.add_subcommand("train", "Fit a transition model on the training cells");
  train_data.add_to(train);
  train_model.add_to(train);
  train->add_option("--out,-o", train_out, "Output model JSON")->required();

  DataOptions fc_data;
  std::string fc_model;
  std::string fc_out;
  std::string fc_cells = "test";
  auto* forecast = app.add_subcommand("forecast", "Forecast capacity trajectories of cells");
  fc_data.add_to(forecast);
  forecast->add_option("--model", fc_model, "Trained model JSON")->required();
  forecast->add_option("--out,-o", fc_out, "Output directory for per-cell CSVs")->required();
  forecast->add_option("--cells", fc_cells, "all, train or test")
      ->check(CLI::IsMember({"all", "train", "test"}));

  std::string ev_dir;
  std::string ev_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score forecast CSVs");
  evaluate_cmd->add_option("--forecasts", ev_dir, "Directory of per-cell forecast CSVs")->required();
  evaluate_cmd->add_option("--out,-o", ev_out, "Write the report JSON here too");

  DataOptions run_data;
  std::string run_config;
  std::string run_out;
  std::vector<std::string> run_models;
  std::optional<std::uint64_t> run_seed;
  std::optional<int> run_threads;
  std::optional<int> run_restarts;
  bool run_diagonal = false;
  auto* run = app.add_subcommand("run", "Train, forecast and score every model configuration");
  run_data.add_to(run);
  run->add_option("--config,-c", run_config, "Experiment config JSON");
  run->add_option("--out,-o", run_out, "Results directory");
  run->add_option("--models", run_models, "Presets to run (e.g. 1 3 model5)")->delimiter(',');
  run->add_option("--seed", run_seed, "Seed for every model");
  run->add_option("--threads,-j", run_threads, "Worker threads (capped by CELLPROG_THREADS)");
  run->add_option("--restarts", run_restarts, "GP optimizer restarts for every model");
  run->add_flag("--diagonal", run_diagonal, "Ignore cross-covariances along trajectories");

  DataOptions plot_data;
  std::string plot_results;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot-data", "Emit CSV bundles for plotting");
  plot_data.add_to(plot);
  plot->add_option("--results", plot_results, "Results directory written by run");
  plot->add_option("--out,-o", plot_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    configure_logging(log_level);

    if (validate->parsed()) {
      const auto manifest = validate_data.resolve();
      bool all_ok = true;
      for (const auto& entry : read_manifest(manifest)) {
        const auto loaded = load_cell(entry);
        const auto problems = validate_record(loaded.record);
        if (problems.empty()) {
          out << entry.cell_id << ": ok (" << loaded.record.references.size() << " references, "
              << loaded.record.samples.size() << " samples)\n";
        } else {
          all_ok = false;
          out << entry.cell_id << ": FAIL\n";
          for (const auto& p : problems) out << "  - " << p << "\n";
        }
      }
      return all_ok ? kExitOk : kExitValidation;
    }

    if (featurize->parsed()) {
      const auto config = feat_model.build();
      const auto cells = select_cells(feat_data.resolve(), feat_cells);
      DatasetOptions opts;
      opts.segment = config.segment;
      const auto data = build_dataset(cells, config.features, opts);
      write_dataset_csv(feat_out, data);
      out << fmt::format("{} rows x {} features -> {}\n", data.size(), data.X.cols(), feat_out);
      return kExitOk;
    }

    if (train->parsed()) {
      const auto config = train_model.build();
      const auto cells = select_cells(train_data.resolve(), "train");
      const auto model = TransitionModel::train(cells, config);
      write_text(train_out, model.to_json().dump(2) + "\n");
      out << fmt::format("trained {} on {} transitions -> {}\n", config.name, model.training_rows(),
                         train_out);
      return kExitOk;
    }

    if (forecast->parsed()) {
      const auto model = TransitionModel::from_json(ModelOptions::read_json_file(fc_model));
      const auto cells = select_cells(fc_data.resolve(), fc_cells);
      if (cells.empty()) throw Error(ErrorKind::EmptyDataset, "no cells to forecast");
      fs::create_directories(fc_out);
      std::vector<TrajectoryForecast> forecasts;
      for (const auto& cell : cells) {
        forecasts.push_back(forecast_cell(model, cell));
        const auto path = fs::path(fc_out) / (cell.cell_id + ".csv");
        write_forecast_csv(path, forecasts.back());
        out << fmt::format("{}: {} transitions -> {}\n", cell.cell_id, forecasts.back().dq_mean.size(),
                           path.string());
      }
      return kExitOk;
    }

    if (evaluate_cmd->parsed()) {
      std::vector<TrajectoryForecast> forecasts;
      std::vector<fs::path> files;
      if (!fs::is_directory(ev_dir)) {
        throw Error(ErrorKind::Io, fmt::format("'{}' is not a directory", ev_dir));
      }
      for (const auto& e : fs::directory_iterator(ev_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) forecasts.push_back(read_forecast_csv(f, f.stem().string()));
      const nlohmann::json report = evaluate(forecasts);
      out << report.dump(2) << "\n";
      if (!ev_out.empty()) write_text(ev_out, report.dump(2) + "\n");
      return kExitOk;
    }

    if (run->parsed()) {
      ExperimentConfig config;
      if (!run_config.empty()) {
        const fs::path path(run_config);
        config = experiment_from_json(ModelOptions::read_json_file(path), path.parent_path());
      }
      if (run_data.given()) config.manifest = run_data.resolve();
      if (config.manifest.empty()) {
        throw Error(ErrorKind::InvalidConfig, "no manifest: pass --manifest, --synthetic or a config file");
      }
      if (!run_out.empty()) config.output_dir = run_out;
      if (!run_models.empty()) {
        config.models.clear();
        for (const auto& m : run_models) {
          config.models.push_back(nlohmann::json{{"preset", ModelOptions::preset_json(m)}}.get<ModelConfig>());
        }
      }
      if (run_seed) config.seed = run_seed;
      if (run_threads) config.threads = *run_threads;
      for (auto& m : config.models) {
        if (run_restarts) m.gp.restarts = *run_restarts;
        if (run_diagonal) m.diagonal_trajectory = true;
      }
      const auto results = run_experiment(config);
      std::vector<TableRow> rows;
      for (const auto& r : results) {
        auto row = r.config.describe();
        row.report = r.report;
        rows.push_back(std::move(row));
      }
      out << render_table(rows);
      out << "results written to " << config.output_dir.string() << "\n";
      return kExitOk;
    }

    if (plot->parsed()) {
      std::optional<fs::path> manifest;
      std::optional<fs::path> results;
      if (plot_data.given()) manifest = plot_data.resolve();
      if (!plot_results.empty()) results = fs::path(plot_results);
      for (const auto& p : write_plot_data(manifest, results, plot_out)) out << p.string() << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error [io]: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace cellprog
