#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cellprog/data_ingest.hpp"
#include "cellprog/metrics.hpp"
#include "cellprog/transition.hpp"

namespace cellprog {

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::vector<ModelConfig> models = ModelConfig::table_presets();
  // Explicit cell lists; when both are empty the even/odd rule applies.
  std::vector<std::string> train_cells;
  std::vector<std::string> test_cells;
  std::filesystem::path output_dir = "results";
  std::optional<std::uint64_t> seed;  // overrides every model's seed when set
  int threads = 1;

  /// Throws InvalidConfig on no models, duplicate model names or overlapping splits.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Relative manifest and output paths resolve against `base_dir`.
ExperimentConfig experiment_from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir = {});

/// Applies the configured split to loaded cells.
TrainTestSplit split_cells(std::vector<CellRecord> cells, const ExperimentConfig& config);

/// Worker count: the requested value capped by CELLPROG_THREADS, at least 1.
int effective_threads(int requested);

struct ModelResult {
  ModelConfig config;
  EvaluationReport report;
  std::vector<TrajectoryForecast> forecasts;
};

/// Trains each model on the training cells and forecasts every test cell.
/// Results come back in config order regardless of scheduling.
std::vector<ModelResult> run_models(const std::vector<ModelConfig>& models,
                                    const TrainTestSplit& split, int threads,
                                    std::vector<TransitionModel>* trained = nullptr);

/// Full pipeline: writes reports/<model>.json, forecasts/<model>/<cell>.csv,
/// models/<model>.json and table.txt under config.output_dir.
std::vector<ModelResult> run_experiment(const ExperimentConfig& config);

/// Plot-ready bundles. With a manifest: input_histograms.csv, pattern_inputs.csv
/// and capacity_series.csv. With a results directory: dq_scatter.csv and
/// trajectories.csv. Throws EmptyOutput when the selected inputs hold nothing.
std::vector<std::filesystem::path> write_plot_data(const std::optional<std::filesystem::path>& manifest,
                                                   const std::optional<std::filesystem::path>& results,
                                                   const std::filesystem::path& out_dir);

}  // namespace cellprog
