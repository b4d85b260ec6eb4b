#include "cellprog/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cellprog/csv.hpp"
#include "cellprog/error.hpp"

namespace cellprog {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double parameter_value(const Sample& s, RangeParameter p, bool absolute_current) {
  switch (p) {
    case RangeParameter::Current: return absolute_current ? std::abs(s.current) : s.current;
    case RangeParameter::Voltage: return s.voltage;
    case RangeParameter::Temperature: return s.temperature;
  }
  return 0.0;
}

const char* short_name(RangeParameter p) {
  switch (p) {
    case RangeParameter::Current: return "i";
    case RangeParameter::Voltage: return "v";
    case RangeParameter::Temperature: return "temp";
  }
  return "?";
}

std::string bound_name(double b) {
  if (b == -kInf) return "-inf";
  if (b == kInf) return "inf";
  return csv::format(b);
}

nlohmann::json bound_to_json(double b) {
  if (std::isinf(b)) return nullptr;
  return b;
}

}  // namespace

const char* to_string(RangeParameter p) {
  switch (p) {
    case RangeParameter::Current: return "current";
    case RangeParameter::Voltage: return "voltage";
    case RangeParameter::Temperature: return "temperature";
  }
  return "?";
}

RangeParameter parse_range_parameter(const std::string& name) {
  if (name == "current") return RangeParameter::Current;
  if (name == "voltage") return RangeParameter::Voltage;
  if (name == "temperature") return RangeParameter::Temperature;
  throw Error(ErrorKind::InvalidConfig, fmt::format("unknown range parameter '{}'", name));
}

void FeatureSpec::validate() const {
  if (lags < 1) throw Error(ErrorKind::InvalidConfig, fmt::format("lags must be >= 1, got {}", lags));
  if (block_size() == 0) throw Error(ErrorKind::InvalidConfig, "feature spec enables no features");

  std::map<RangeParameter, std::vector<RangeBin>> by_param;
  for (const auto& b : range_bins) {
    if (std::isnan(b.lower) || std::isnan(b.upper) || !(b.lower < b.upper)) {
      throw Error(ErrorKind::InvalidConfig,
                  fmt::format("{} bin [{}, {}) is empty", to_string(b.parameter), b.lower, b.upper));
    }
    by_param[b.parameter].push_back(b);
  }
  for (auto& [param, bins] : by_param) {
    std::sort(bins.begin(), bins.end(),
              [](const RangeBin& a, const RangeBin& b) { return a.lower < b.lower; });
    if (bins.front().lower != -kInf || bins.back().upper != kInf) {
      throw Error(ErrorKind::InvalidConfig,
                  fmt::format("{} bins must cover the whole real line", to_string(param)));
    }
    for (std::size_t k = 1; k < bins.size(); ++k) {
      if (bins[k].lower != bins[k - 1].upper) {
        throw Error(ErrorKind::InvalidConfig,
                    fmt::format("{} bins must be contiguous and non-overlapping near {}",
                                to_string(param), bins[k - 1].upper));
      }
    }
  }
}

std::size_t FeatureSpec::block_size() const {
  return static_cast<std::size_t>(use_present_capacity) + use_delta_t + use_abs_time + use_q_thru +
         range_bins.size();
}

std::vector<std::string> FeatureSpec::block_column_names() const {
  std::vector<std::string> names;
  if (use_present_capacity) names.emplace_back("q_ah");
  if (use_delta_t) names.emplace_back("dt_s");
  if (use_abs_time) names.emplace_back("t_s");
  if (use_q_thru) names.emplace_back("q_thru_ah");
  for (const auto& b : range_bins) {
    names.push_back(fmt::format("time_{}_{}_{}_s", short_name(b.parameter), bound_name(b.lower),
                                bound_name(b.upper)));
  }
  return names;
}

std::vector<std::string> FeatureSpec::column_names() const {
  const auto block = block_column_names();
  if (lags == 1) return block;
  std::vector<std::string> names;
  for (int lag = lags - 1; lag >= 0; --lag) {
    for (const auto& n : block) names.push_back(fmt::format("{}_lag{}", n, lag));
  }
  return names;
}

std::vector<RangeBin> FeatureSpec::default_bins() {
  using P = RangeParameter;
  return {{P::Temperature, -kInf, 5.0}, {P::Temperature, 5.0, 40.0}, {P::Temperature, 40.0, kInf},
          {P::Current, -kInf, 2.0},     {P::Current, 2.0, 3.0},      {P::Current, 3.0, kInf}};
}

FeatureSpec FeatureSpec::full() {
  FeatureSpec s;
  s.use_abs_time = true;
  s.use_present_capacity = true;
  s.range_bins = default_bins();
  return s;
}

FeatureSpec FeatureSpec::model1() {
  FeatureSpec s;
  s.lags = 6;
  return s;
}

FeatureSpec FeatureSpec::model2() {
  FeatureSpec s;
  s.use_abs_time = true;
  return s;
}

void to_json(nlohmann::json& j, const FeatureSpec& spec) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : spec.range_bins) {
    bins.push_back({{"parameter", to_string(b.parameter)},
                    {"lower", bound_to_json(b.lower)},
                    {"upper", bound_to_json(b.upper)}});
  }
  j = {{"use_delta_t", spec.use_delta_t},
       {"use_q_thru", spec.use_q_thru},
       {"use_abs_time", spec.use_abs_time},
       {"use_present_capacity", spec.use_present_capacity},
       {"range_bins", bins},
       {"lags", spec.lags},
       {"standardize", spec.standardize},
       {"absolute_current", spec.absolute_current}};
}

void from_json(const nlohmann::json& j, FeatureSpec& spec) {
  FeatureSpec s;
  s.use_delta_t = j.value("use_delta_t", s.use_delta_t);
  s.use_q_thru = j.value("use_q_thru", s.use_q_thru);
  s.use_abs_time = j.value("use_abs_time", s.use_abs_time);
  s.use_present_capacity = j.value("use_present_capacity", s.use_present_capacity);
  s.lags = j.value("lags", s.lags);
  s.standardize = j.value("standardize", s.standardize);
  s.absolute_current = j.value("absolute_current", s.absolute_current);
  if (j.contains("range_bins")) {
    for (const auto& b : j.at("range_bins")) {
      RangeBin bin;
      bin.parameter = parse_range_parameter(b.at("parameter").get<std::string>());
      bin.lower = b.contains("lower") && !b.at("lower").is_null() ? b.at("lower").get<double>() : -kInf;
      bin.upper = b.contains("upper") && !b.at("upper").is_null() ? b.at("upper").get<double>() : kInf;
      s.range_bins.push_back(bin);
    }
  }
  s.validate();
  spec = std::move(s);
}

FeatureVector extract_features(const LoadPattern& pattern, const FeatureSpec& spec) {
  const auto& series = pattern.series;
  if (series.empty() && !spec.range_bins.empty()) {
    throw Error(ErrorKind::EmptyPattern,
                fmt::format("cell {} pattern {}: no samples for time-in-range features",
                            pattern.cell_id, pattern.index));
  }
  FeatureVector fv;
  fv.cell_id = pattern.cell_id;
  fv.pattern_index = pattern.index;
  fv.values.reserve(spec.block_size());

  if (spec.use_present_capacity) fv.values.push_back(pattern.q_start);
  if (spec.use_delta_t) fv.values.push_back(pattern.duration());
  if (spec.use_abs_time) fv.values.push_back(pattern.t_start);
  if (spec.use_q_thru) {
    double ampere_seconds = 0.0;
    for (std::size_t k = 1; k < series.size(); ++k) {
      ampere_seconds += 0.5 * (std::abs(series[k].current) + std::abs(series[k - 1].current)) *
                        (series[k].t - series[k - 1].t);
    }
    fv.values.push_back(ampere_seconds / 3600.0);
  }

  if (!spec.range_bins.empty()) {
    const std::size_t first_bin = fv.values.size();
    fv.values.resize(first_bin + spec.range_bins.size(), 0.0);
    const auto accumulate = [&](const Sample& s, double dt) {
      for (std::size_t b = 0; b < spec.range_bins.size(); ++b) {
        const auto& bin = spec.range_bins[b];
        const double v = parameter_value(s, bin.parameter, spec.absolute_current);
        if (v >= bin.lower && v < bin.upper) fv.values[first_bin + b] += dt;
      }
    };
    accumulate(series.front(), series.front().t - pattern.t_start);
    for (std::size_t k = 0; k + 1 < series.size(); ++k) {
      accumulate(series[k], series[k + 1].t - series[k].t);
    }
    accumulate(series.back(), pattern.t_end - series.back().t);
  }

  for (double v : fv.values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::InvalidRecord,
                  fmt::format("cell {} pattern {}: non-finite feature value", pattern.cell_id,
                              pattern.index));
    }
  }
  return fv;
}

std::vector<FeatureVector> stack_lags(std::span<const FeatureVector> blocks, int lags) {
  if (lags < 1) throw Error(ErrorKind::InvalidConfig, fmt::format("lags must be >= 1, got {}", lags));
  std::vector<FeatureVector> rows;
  const auto n = blocks.size();
  const auto l = static_cast<std::size_t>(lags);
  if (n < l) return rows;
  rows.reserve(n - l + 1);
  for (std::size_t i = l - 1; i < n; ++i) {
    FeatureVector row;
    row.cell_id = blocks[i].cell_id;
    row.pattern_index = blocks[i].pattern_index;
    for (std::size_t k = i + 1 - l; k <= i; ++k) {
      row.values.insert(row.values.end(), blocks[k].values.begin(), blocks[k].values.end());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Scaler Scaler::fit(const Eigen::MatrixXd& X) {
  Scaler s;
  const auto n = static_cast<double>(X.rows());
  s.mean = X.colwise().mean().transpose();
  s.scale.resize(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double var = (X.col(c).array() - s.mean(c)).square().sum() / n;
    const double sd = std::sqrt(var);
    s.scale(c) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(c))) ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd Scaler::apply(const Eigen::MatrixXd& X) const {
  if (X.cols() != mean.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("scaler has {} columns, data has {}", mean.size(), X.cols()));
  }
  return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

bool Scaler::operator==(const Scaler& other) const {
  return mean.size() == other.mean.size() && mean == other.mean && scale == other.scale;
}

void to_json(nlohmann::json& j, const Scaler& s) {
  j = {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
       {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}};
}

void from_json(const nlohmann::json& j, Scaler& s) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto scale = j.at("scale").get<std::vector<double>>();
  if (mean.size() != scale.size()) throw Error(ErrorKind::Parse, "scaler mean/scale size mismatch");
  s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
}

TransitionDataset build_dataset(std::span<const CellRecord> cells, const FeatureSpec& spec,
                                const DatasetOptions& options) {
  spec.validate();
  std::vector<std::vector<double>> rows;
  TransitionDataset ds;
  ds.columns = spec.column_names();
  std::vector<double> y;
  for (const auto& cell : cells) {
    const auto patterns = segment_load_patterns(cell, options.segment);
    std::vector<FeatureVector> blocks;
    blocks.reserve(patterns.size());
    for (const auto& p : patterns) blocks.push_back(extract_features(p, spec));
    for (auto& row : stack_lags(blocks, spec.lags)) {
      const auto& p = patterns.at(static_cast<std::size_t>(row.pattern_index - 1));
      ds.rows.push_back({p.cell_id, p.index, p.t_start, p.t_end, p.q_start, p.q_end});
      y.push_back(p.delta_q());
      rows.push_back(std::move(row.values));
    }
  }
  if (rows.empty() && !options.allow_empty) {
    throw Error(ErrorKind::EmptyDataset,
                fmt::format("no usable transitions from {} cell(s) with lags = {}", cells.size(),
                            spec.lags));
  }
  const auto dim = static_cast<Eigen::Index>(spec.dimension());
  ds.X_raw.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ds.X_raw.row(static_cast<Eigen::Index>(r)) =
        Eigen::Map<const Eigen::RowVectorXd>(rows[r].data(), dim);
  }
  ds.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  if (spec.standardize) {
    if (options.scaler) {
      ds.scaler = *options.scaler;
    } else if (!rows.empty()) {
      ds.scaler = Scaler::fit(ds.X_raw);
    }
  }
  ds.X = ds.scaler ? ds.scaler->apply(ds.X_raw) : ds.X_raw;
  return ds;
}

void write_dataset_csv(const std::filesystem::path& path, const TransitionDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  out << "cell_id,pattern";
  for (const auto& c : dataset.columns) out << ',' << c;
  out << ",dq_ah\n";
  for (Eigen::Index r = 0; r < dataset.size(); ++r) {
    const auto& prov = dataset.rows[static_cast<std::size_t>(r)];
    out << prov.cell_id << ',' << prov.pattern_index;
    for (Eigen::Index c = 0; c < dataset.X_raw.cols(); ++c) out << ',' << csv::format(dataset.X_raw(r, c));
    out << ',' << csv::format(dataset.y(r)) << '\n';
  }
}

TransitionDataset read_dataset_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto& h = table.header;
  if (h.size() < 4 || h.front() != "cell_id" || h[1] != "pattern" || h.back() != "dq_ah") {
    throw Error(ErrorKind::Parse,
                fmt::format("{}: not a dataset CSV (need cell_id,pattern,...,dq_ah)", path.string()));
  }
  TransitionDataset ds;
  ds.columns.assign(h.begin() + 2, h.end() - 1);
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto d = static_cast<Eigen::Index>(ds.columns.size());
  ds.X_raw.resize(n, d);
  ds.y.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = static_cast<std::size_t>(r);
    RowProvenance prov;
    prov.cell_id = table.rows[row][0];
    prov.pattern_index = static_cast<int>(table.number(row, 1));
    ds.rows.push_back(prov);
    for (Eigen::Index c = 0; c < d; ++c) ds.X_raw(r, c) = table.number(row, static_cast<std::size_t>(c) + 2);
    ds.y(r) = table.number(row, h.size() - 1);
  }
  ds.X = ds.X_raw;
  return ds;
}

}  // namespace cellprog
