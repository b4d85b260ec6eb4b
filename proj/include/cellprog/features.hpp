#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cellprog/data_ingest.hpp"

namespace cellprog {

enum class RangeParameter { Current, Voltage, Temperature };

const char* to_string(RangeParameter p);
RangeParameter parse_range_parameter(const std::string& name);

/// Half-open occupancy range lower <= value < upper. Infinite bounds allowed.
struct RangeBin {
  RangeParameter parameter = RangeParameter::Temperature;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  bool operator==(const RangeBin&) const = default;
};

/// Declarative description of the per-pattern feature block and lag stacking.
///
/// A block is laid out as: present capacity, elapsed time, absolute start
/// time, charge throughput, then one time-in-range entry per bin in the order
/// listed. Disabled entries are omitted. Times are seconds, charge is Ah.
struct FeatureSpec {
  bool use_delta_t = true;
  bool use_q_thru = true;
  bool use_abs_time = false;
  bool use_present_capacity = false;
  std::vector<RangeBin> range_bins;
  int lags = 1;
  bool standardize = true;
  // Current bins compare |I| unless this is false.
  bool absolute_current = true;

  bool operator==(const FeatureSpec&) const = default;

  /// Throws InvalidConfig unless lags >= 1, at least one feature is enabled
  /// and each parameter's bins partition the real line.
  void validate() const;

  std::size_t block_size() const;
  std::size_t dimension() const { return block_size() * static_cast<std::size_t>(lags); }
  std::vector<std::string> block_column_names() const;
  std::vector<std::string> column_names() const;

  /// Temperature {<5, 5-40, >40} degC and current {<2, 2-3, >3} A.
  static std::vector<RangeBin> default_bins();
  /// All four scalar features plus default_bins(), one lag.
  static FeatureSpec full();
  /// Elapsed time and charge throughput over the 6 preceding patterns.
  static FeatureSpec model1();
  /// Elapsed time, charge throughput and absolute time; one lag.
  static FeatureSpec model2();
};

void to_json(nlohmann::json& j, const FeatureSpec& spec);
void from_json(const nlohmann::json& j, FeatureSpec& spec);

struct FeatureVector {
  std::vector<double> values;
  std::string cell_id;
  int pattern_index = 0;
};

/// One feature block for a single load pattern.
///
/// Time-in-range uses a zero-order hold on sample values: each inter-sample
/// interval belongs to the bin of its left endpoint, the gap before the first
/// sample to the first sample and the gap after the last sample to the last.
/// Bin times therefore sum to the pattern duration. Charge throughput is the
/// trapezoidal integral of |I| over the samples inside the window.
FeatureVector extract_features(const LoadPattern& pattern, const FeatureSpec& spec);

/// Row i concatenates blocks i-lags+1..i, oldest first. Patterns without
/// enough history are dropped.
std::vector<FeatureVector> stack_lags(std::span<const FeatureVector> blocks, int lags);

/// Per-column z-score transform (population moments). Zero-variance columns
/// keep unit scale.
struct Scaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Scaler fit(const Eigen::MatrixXd& X);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
  bool operator==(const Scaler& other) const;
};

void to_json(nlohmann::json& j, const Scaler& s);
void from_json(const nlohmann::json& j, Scaler& s);

struct RowProvenance {
  std::string cell_id;
  int pattern_index = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  double q_start = 0.0;
  double q_end = 0.0;
};

struct TransitionDataset {
  Eigen::MatrixXd X_raw;  // unscaled features
  Eigen::MatrixXd X;      // model inputs; equals X_raw unless a scaler is set
  Eigen::VectorXd y;      // delta capacity, Ah
  std::vector<RowProvenance> rows;
  std::vector<std::string> columns;
  std::optional<Scaler> scaler;

  Eigen::Index size() const { return y.size(); }
};

struct DatasetOptions {
  SegmentOptions segment;
  // Reuse these statistics (e.g. the training scaler on test data) instead
  // of fitting new ones when the spec asks for standardization.
  std::optional<Scaler> scaler;
  // Permit a dataset with no rows instead of throwing EmptyDataset.
  bool allow_empty = false;
};

TransitionDataset build_dataset(std::span<const CellRecord> cells, const FeatureSpec& spec,
                                const DatasetOptions& options = {});

/// Columns: cell_id, pattern, feature columns in block order, dq_ah.
void write_dataset_csv(const std::filesystem::path& path, const TransitionDataset& dataset);

/// Reads a dataset written by write_dataset_csv (raw features, no scaler).
TransitionDataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace cellprog
