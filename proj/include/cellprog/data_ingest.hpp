#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cellprog {

/// One telemetry sample. Current is signed, positive while charging.
struct Sample {
  double t = 0.0;            // seconds since cell start
  double current = 0.0;      // A
  double voltage = 0.0;      // V
  double temperature = 0.0;  // degC
};

/// A reference (characterisation) test window and the capacity it measured.
struct ReferenceEvent {
  double t_start = 0.0;
  double t_end = 0.0;
  double capacity = 0.0;  // Ah
};

struct CellRecord {
  std::string cell_id;
  std::string group;
  std::vector<Sample> samples;
  std::vector<ReferenceEvent> references;
};

/// Usage between two consecutive capacity measurements.
struct LoadPattern {
  std::string cell_id;
  int index = 1;  // 1-based: pattern i is bracketed by Q_i and Q_{i+1}
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<Sample> series;  // samples with t_start <= t < t_end
  double q_start = 0.0;
  double q_end = 0.0;

  double duration() const { return t_end - t_start; }
  double delta_q() const { return q_end - q_start; }
};

/// Trapezoidal integral of |I| dt, in ampere-hours.
/// Throws MalformedReference for < 2 samples and Ordering for non-increasing times.
double coulomb_count(std::span<const Sample> series);

struct SegmentOptions {
  // When set, a pattern window opens at the start of the preceding reference
  // test instead of its end, so characterisation current counts as usage.
  bool include_reference_samples = false;
};

std::vector<LoadPattern> segment_load_patterns(const CellRecord& record,
                                               const SegmentOptions& options = {});

/// Integer identifier carried by a cell id ("7", "cell_07", "RW7" -> 7).
int parse_cell_number(const std::string& cell_id);

struct TrainTestSplit {
  std::vector<CellRecord> train;
  std::vector<CellRecord> test;
};

/// Even-numbered cells train, odd-numbered cells test.
TrainTestSplit split_train_test(std::vector<CellRecord> records);

/// Lists every violated CellRecord invariant; empty means valid.
std::vector<std::string> validate_record(const CellRecord& record);

/// Throws InvalidRecord listing every problem found by validate_record.
void require_valid(const CellRecord& record);

// --- files -----------------------------------------------------------------

struct ManifestEntry {
  std::string cell_id;
  std::filesystem::path telemetry_path;
  std::filesystem::path reference_path;
  std::string group;
};

/// Reads a manifest (a JSON array, or an object with a "cells" array).
/// Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);

std::vector<Sample> read_telemetry_csv(const std::filesystem::path& path);
void write_telemetry_csv(const std::filesystem::path& path, std::span<const Sample> samples);

struct RawReference {
  double t_start = 0.0;
  double t_end = 0.0;
  std::optional<double> capacity;
};

std::vector<RawReference> read_reference_csv(const std::filesystem::path& path);
void write_reference_csv(const std::filesystem::path& path,
                         std::span<const RawReference> references);

struct LoadedCell {
  CellRecord record;
  std::vector<std::string> warnings;
};

/// Loads one cell. Missing capacities are coulomb-counted from telemetry
/// inside the reference window (with a warning); if that fails the capacity
/// is left NaN for validate_record to report.
LoadedCell load_cell(const ManifestEntry& entry);

/// Loads and validates every cell in a manifest, throwing on the first invalid one.
std::vector<CellRecord> load_dataset(const std::filesystem::path& manifest_path);

}  // namespace cellprog
