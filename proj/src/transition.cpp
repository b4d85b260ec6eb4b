#include "cellprog/transition.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cellprog/csv.hpp"
#include "cellprog/error.hpp"
#include "cellprog/version.hpp"

namespace cellprog {

namespace {

constexpr double kSecondsPerDay = 86400.0;

Regressor parse_regressor(const std::string& s) {
  if (s == "gp") return Regressor::Gp;
  if (s == "gboost" || s == "skgb") return Regressor::GBoost;
  throw Error(ErrorKind::InvalidConfig, fmt::format("unknown regressor '{}'", s));
}

int preset_number(const nlohmann::json& p) {
  if (p.is_number_integer()) return p.get<int>();
  const auto s = p.get<std::string>();
  if (s.size() == 6 && s.rfind("model", 0) == 0 && s[5] >= '1' && s[5] <= '6') return s[5] - '0';
  throw Error(ErrorKind::InvalidConfig, fmt::format("unknown preset '{}'", s));
}

}  // namespace

const char* to_string(Regressor r) { return r == Regressor::Gp ? "gp" : "gboost"; }

ModelConfig ModelConfig::preset(int number) {
  if (number < 1 || number > 6) {
    throw Error(ErrorKind::InvalidConfig, fmt::format("preset must be 1..6, got {}", number));
  }
  ModelConfig c;
  c.name = fmt::format("model{}", number);
  const bool six_lags = number % 2 == 1;
  if (number <= 4) {
    c.regressor = Regressor::Gp;
    c.kernel = number <= 2 ? KernelFamily::Matern52 : KernelFamily::Linear;
    c.features = six_lags ? FeatureSpec::model1() : FeatureSpec::model2();
  } else {
    c.regressor = Regressor::GBoost;
    c.features.lags = six_lags ? 6 : 1;
    // Gradient boosting rows swap the absolute-time choice relative to the GP rows.
    c.features.use_abs_time = six_lags;
    c.features.standardize = false;
  }
  return c;
}

std::vector<ModelConfig> ModelConfig::table_presets() {
  std::vector<ModelConfig> out;
  for (int k = 1; k <= 6; ++k) out.push_back(preset(k));
  return out;
}

TableRow ModelConfig::describe() const {
  TableRow r;
  r.number = name.rfind("model", 0) == 0 ? name.substr(5) + "." : name;
  r.model = regressor == Regressor::Gp ? "GP" : "SKGB";
  if (regressor == Regressor::Gp) {
    r.kernel = kernel == KernelFamily::Matern52 ? "Ma5"
               : kernel == KernelFamily::Linear ? "Lin"
                                                : "SE";
  } else {
    r.kernel = "n/a";
  }
  r.lags = features.lags;
  r.uses_delta_t = features.use_delta_t;
  r.uses_q_thru = features.use_q_thru;
  r.uses_abs_time = features.use_abs_time;
  return r;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"name", c.name},
       {"regressor", to_string(c.regressor)},
       {"kernel", to_string(c.kernel)},
       {"shared_lengthscale", c.shared_lengthscale},
       {"features", c.features},
       {"gp",
        {{"center_targets", c.gp.center_targets},
         {"scale_targets", c.gp.scale_targets},
         {"restarts", c.gp.restarts},
         {"max_iterations", c.gp.max_iterations},
         {"relative_tolerance", c.gp.relative_tolerance},
         {"gradient_tolerance", c.gp.gradient_tolerance},
         {"seed", c.gp.seed}}},
       {"boost", c.boost},
       {"include_reference_samples", c.segment.include_reference_samples},
       {"include_noise", c.include_noise},
       {"diagonal_trajectory", c.diagonal_trajectory}};
}

void from_json(const nlohmann::json& j, ModelConfig& out) {
  try {
    ModelConfig c;
    if (j.contains("preset")) c = ModelConfig::preset(preset_number(j.at("preset")));
    c.name = j.value("name", c.name);
    if (j.contains("regressor")) c.regressor = parse_regressor(j.at("regressor").get<std::string>());
    if (j.contains("kernel")) c.kernel = parse_kernel_family(j.at("kernel").get<std::string>());
    c.shared_lengthscale = j.value("shared_lengthscale", c.shared_lengthscale);
    if (j.contains("features")) c.features = j.at("features").get<FeatureSpec>();
    if (j.contains("lags")) c.features.lags = j.at("lags").get<int>();
    if (j.contains("gp")) {
      const auto& g = j.at("gp");
      c.gp.center_targets = g.value("center_targets", c.gp.center_targets);
      c.gp.scale_targets = g.value("scale_targets", c.gp.scale_targets);
      c.gp.restarts = g.value("restarts", c.gp.restarts);
      c.gp.max_iterations = g.value("max_iterations", c.gp.max_iterations);
      c.gp.relative_tolerance = g.value("relative_tolerance", c.gp.relative_tolerance);
      c.gp.gradient_tolerance = g.value("gradient_tolerance", c.gp.gradient_tolerance);
      c.gp.seed = g.value("seed", c.gp.seed);
    }
    if (j.contains("boost")) c.boost = j.at("boost").get<BoostConfig>();
    c.segment.include_reference_samples =
        j.value("include_reference_samples", c.segment.include_reference_samples);
    c.include_noise = j.value("include_noise", c.include_noise);
    c.diagonal_trajectory = j.value("diagonal_trajectory", c.diagonal_trajectory);
    c.features.validate();
    c.boost.validate();
    out = std::move(c);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, fmt::format("invalid model config: {}", e.what()));
  }
}

TransitionModel TransitionModel::train(std::span<const CellRecord> train_cells,
                                       const ModelConfig& config) {
  config.features.validate();
  DatasetOptions opts;
  opts.segment = config.segment;
  const auto data = build_dataset(train_cells, config.features, opts);
  TransitionModel m;
  m.config_ = config;
  m.scaler_ = data.scaler;
  m.training_rows_ = static_cast<long>(data.size());
  if (config.regressor == Regressor::Gp) {
    const auto shape =
        KernelConfig::make(config.kernel, static_cast<int>(data.X.cols()), config.shared_lengthscale);
    m.gp_ = fit(data.X, data.y, shape, config.gp);
  } else {
    m.ensemble_ = fit_quantile(data.X, data.y, config.boost);
  }
  return m;
}

TransitionDataset TransitionModel::featurize(std::span<const CellRecord> cells) const {
  DatasetOptions opts;
  opts.segment = config_.segment;
  opts.scaler = scaler_;
  opts.allow_empty = true;
  return build_dataset(cells, config_.features, opts);
}

DeltaPrediction TransitionModel::predict(const TransitionDataset& data) const {
  const auto expected = config_.features.column_names();
  if (data.columns != expected || data.X.cols() != static_cast<Eigen::Index>(expected.size())) {
    throw Error(ErrorKind::Incompatible,
                fmt::format("dataset has {} feature columns, model '{}' expects {} ({} lags)",
                            data.X.cols(), config_.name, expected.size(), config_.features.lags));
  }
  if (config_.features.standardize && scaler_ && !(data.scaler && *data.scaler == *scaler_)) {
    throw Error(ErrorKind::Incompatible, "dataset was not standardized with the training scaler");
  }
  DeltaPrediction p;
  if (gp_) {
    auto post = gp_->predict(data.X, config_.include_noise);
    p.mean = std::move(post.mean);
    p.covariance = std::move(post.covariance);
    p.full_covariance = true;
  } else {
    const auto interval = predict_interval(*ensemble_, data.X, 2.0);
    p.mean = interval.mean;
    p.covariance = interval.sigma.array().square().matrix().asDiagonal();
    p.quantile_crossings = interval.crossings;
  }
  return p;
}

nlohmann::json TransitionModel::to_json() const {
  nlohmann::json doc = {{"format", "cellprog.transition"},
                        {"library_version", kVersion},
                        {"config", config_},
                        {"training_rows", training_rows_}};
  doc["scaler"] = scaler_ ? nlohmann::json(*scaler_) : nlohmann::json(nullptr);
  doc["regressor"] = gp_ ? gp_->to_json() : ensemble_->to_json();
  return doc;
}

TransitionModel TransitionModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "cellprog.transition") {
      throw Error(ErrorKind::Parse, "not a serialized transition model");
    }
    TransitionModel m;
    m.config_ = doc.at("config").get<ModelConfig>();
    m.training_rows_ = doc.value("training_rows", 0L);
    if (!doc.at("scaler").is_null()) m.scaler_ = doc.at("scaler").get<Scaler>();
    if (m.config_.regressor == Regressor::Gp) {
      m.gp_ = GpModel::from_json(doc.at("regressor"));
    } else {
      m.ensemble_ = QuantileEnsemble::from_json(doc.at("regressor"));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, fmt::format("invalid transition model document: {}", e.what()));
  }
}

void integrate_trajectory(TrajectoryForecast& f, bool diagonal) {
  const auto n = f.dq_mean.size();
  if (f.dq_covariance.rows() != n || f.dq_covariance.cols() != n) {
    throw Error(ErrorKind::DimensionMismatch, "capacity-change covariance has the wrong shape");
  }
  f.q_mean.resize(n);
  f.q_sigma.resize(n);
  f.dq_sigma = f.dq_covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  double q = f.q0;
  double var = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    q += f.dq_mean(k);
    f.q_mean(k) = q;
    var += f.dq_covariance(k, k);
    if (!diagonal && k > 0) var += 2.0 * f.dq_covariance.row(k).head(k).sum();
    f.q_sigma(k) = std::sqrt(std::max(var, 0.0));
  }
}

TrajectoryForecast forecast_cell(const TransitionModel& model, const CellRecord& cell,
                                 std::optional<double> q0) {
  const auto data = model.featurize(std::span<const CellRecord>(&cell, 1));
  if (data.size() == 0) {
    throw Error(ErrorKind::EmptyDataset,
                fmt::format("cell {} has no transition with {} preceding load patterns",
                            cell.cell_id, model.config().features.lags));
  }
  const auto pred = model.predict(data);
  TrajectoryForecast f;
  f.cell_id = cell.cell_id;
  f.transitions = data.rows;
  f.dq_mean = pred.mean;
  f.dq_covariance = pred.covariance;
  f.q0 = q0 ? *q0 : data.rows.front().q_start;
  const auto n = data.size();
  f.dq_true = data.y;
  f.q_true.resize(n);
  f.t_end.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    f.q_true(k) = data.rows[static_cast<std::size_t>(k)].q_end;
    f.t_end(k) = data.rows[static_cast<std::size_t>(k)].t_end;
  }
  integrate_trajectory(f, model.config().diagonal_trajectory);
  return f;
}

EvaluationReport evaluate(std::span<const TrajectoryForecast> forecasts) {
  Eigen::Index total = 0;
  for (const auto& f : forecasts) total += f.dq_mean.size();
  if (total == 0) throw Error(ErrorKind::EmptyInput, "no forecast points to evaluate");
  Eigen::VectorXd dq_pred(total), dq_true(total), dq_sigma(total);
  Eigen::VectorXd q_pred(total), q_true(total), q_sigma(total);
  Eigen::Index at = 0;
  for (const auto& f : forecasts) {
    const auto n = f.dq_mean.size();
    dq_pred.segment(at, n) = f.dq_mean;
    dq_true.segment(at, n) = f.dq_true;
    dq_sigma.segment(at, n) = f.dq_sigma;
    q_pred.segment(at, n) = f.q_mean;
    q_true.segment(at, n) = f.q_true;
    q_sigma.segment(at, n) = f.q_sigma;
    at += n;
  }
  EvaluationReport r;
  r.rmse_dq = rmse_dq(dq_pred, dq_true);
  r.rmse_q = rmse_q(q_pred, q_true);
  r.rmse_q_norm = rmse_q_norm(q_pred, q_true);
  r.cs2_dq = calibration_2sigma(dq_pred, dq_sigma, dq_true);
  r.cs2_q = calibration_2sigma(q_pred, q_sigma, q_true);
  r.n_points = static_cast<long>(total);
  return r;
}

void write_forecast_csv(const std::filesystem::path& path, const TrajectoryForecast& f) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", path.string()));
  out << "t_days,q_true_ah,q_pred_ah,q_sigma_ah,dq_true_ah,dq_pred_ah,dq_sigma_ah\n";
  for (Eigen::Index k = 0; k < f.dq_mean.size(); ++k) {
    out << csv::join({f.t_end(k) / kSecondsPerDay, f.q_true(k), f.q_mean(k), f.q_sigma(k),
                      f.dq_true(k), f.dq_mean(k), f.dq_sigma(k)})
        << '\n';
  }
}

TrajectoryForecast read_forecast_csv(const std::filesystem::path& path, const std::string& cell_id) {
  const auto table = csv::read(path, {"t_days", "q_true_ah", "q_pred_ah", "q_sigma_ah", "dq_true_ah",
                                      "dq_pred_ah", "dq_sigma_ah"});
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  TrajectoryForecast f;
  f.cell_id = cell_id;
  f.t_end.resize(n);
  f.q_true.resize(n);
  f.q_mean.resize(n);
  f.q_sigma.resize(n);
  f.dq_true.resize(n);
  f.dq_mean.resize(n);
  f.dq_sigma.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto r = static_cast<std::size_t>(k);
    f.t_end(k) = table.number(r, 0) * kSecondsPerDay;
    f.q_true(k) = table.number(r, 1);
    f.q_mean(k) = table.number(r, 2);
    f.q_sigma(k) = table.number(r, 3);
    f.dq_true(k) = table.number(r, 4);
    f.dq_mean(k) = table.number(r, 5);
    f.dq_sigma(k) = table.number(r, 6);
  }
  f.dq_covariance = f.dq_sigma.array().square().matrix().asDiagonal();
  f.q0 = n > 0 ? f.q_mean(0) - f.dq_mean(0) : 0.0;
  return f;
}

}  // namespace cellprog
