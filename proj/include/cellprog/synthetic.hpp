#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cellprog/data_ingest.hpp"

namespace cellprog {

/// Built-in dataset: cells in groups with distinct usage regimes, where each
/// capacity change is a known function of the pattern's duration and charge
/// throughput plus Gaussian noise.
struct SyntheticOptions {
  int n_cells = 8;
  int n_groups = 4;
  int patterns_per_cell = 30;
  double initial_capacity = 2.0;  // Ah
  double noise_sd = 0.01;         // Ah, per capacity change
  bool nonlinear = false;
  double sample_interval = 120.0;     // s
  double reference_duration = 3600.0;  // s
  std::uint64_t seed = 0;
};

/// Noise-free capacity change (Ah, negative means fade) for a pattern of
/// `duration` seconds and `q_thru` Ah of charge throughput.
double synthetic_fade(double duration, double q_thru, bool nonlinear);

std::vector<CellRecord> generate_synthetic(const SyntheticOptions& options = {});

/// Writes telemetry and reference CSVs plus manifest.json into `dir` and
/// returns the manifest path.
std::filesystem::path write_synthetic(const std::filesystem::path& dir,
                                      const SyntheticOptions& options = {});

}  // namespace cellprog
