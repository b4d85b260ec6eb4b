#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cellprog/data_ingest.hpp"
#include "cellprog/features.hpp"
#include "cellprog/gboost.hpp"
#include "cellprog/gp_core.hpp"
#include "cellprog/kernels.hpp"
#include "cellprog/metrics.hpp"

namespace cellprog {

enum class Regressor { Gp, GBoost };

const char* to_string(Regressor r);

struct ModelConfig {
  std::string name = "custom";
  Regressor regressor = Regressor::Gp;
  KernelFamily kernel = KernelFamily::Matern52;
  bool shared_lengthscale = false;
  FeatureSpec features;
  GpFitOptions gp;
  BoostConfig boost;
  SegmentOptions segment;
  // Predict observed capacity changes (latent + noise) rather than the latent function.
  bool include_noise = true;
  // Accumulate only per-step variances along the trajectory, ignoring cross-covariances.
  bool diagonal_trajectory = false;

  /// Standard model rows 1-6: GP Matern-5/2 and linear kernels
  /// and gradient boosting, each with 6 lags or 1 lag plus absolute time.
  static ModelConfig preset(int number);
  static std::vector<ModelConfig> table_presets();

  TableRow describe() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Accepts {"preset": "model1".."model6"} (or 1..6) with optional overrides.
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Capacity-change predictions for a batch of transitions.
struct DeltaPrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // full for GP, diagonal sigma^2 for gradient boosting
  bool full_covariance = false;
  int quantile_crossings = 0;
};

class TransitionModel {
 public:
  /// Pools transitions from all training cells into one regression problem.
  static TransitionModel train(std::span<const CellRecord> train_cells, const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const std::optional<Scaler>& scaler() const { return scaler_; }
  const std::optional<GpModel>& gp() const { return gp_; }
  const std::optional<QuantileEnsemble>& ensemble() const { return ensemble_; }
  long training_rows() const { return training_rows_; }

  /// Features for `cells` under this model's spec and training scaler.
  TransitionDataset featurize(std::span<const CellRecord> cells) const;

  /// Joint prediction for a dataset. Throws Incompatible when its columns or
  /// width differ from the model's feature spec.
  DeltaPrediction predict(const TransitionDataset& data) const;

  nlohmann::json to_json() const;
  static TransitionModel from_json(const nlohmann::json& doc);

 private:
  ModelConfig config_;
  std::optional<Scaler> scaler_;
  std::optional<GpModel> gp_;
  std::optional<QuantileEnsemble> ensemble_;
  long training_rows_ = 0;
};

struct TrajectoryForecast {
  std::string cell_id;
  std::vector<RowProvenance> transitions;
  Eigen::VectorXd dq_mean;
  Eigen::MatrixXd dq_covariance;
  Eigen::VectorXd dq_sigma;
  double q0 = 0.0;
  Eigen::VectorXd q_mean;   // q0 + cumulative dq_mean
  Eigen::VectorXd q_sigma;  // sqrt(1' Sigma_{1..k,1..k} 1)
  Eigen::VectorXd dq_true;
  Eigen::VectorXd q_true;
  Eigen::VectorXd t_end;  // seconds, end of each transition
};

/// Integrates capacity changes from q0. With `diagonal` set, cross-covariances
/// are ignored. Cumulative variances are clamped at 0 from below.
void integrate_trajectory(TrajectoryForecast& forecast, bool diagonal);

/// Forecasts every predictable transition of a test cell jointly. q0 defaults
/// to the measured capacity at the start of the first predictable transition.
TrajectoryForecast forecast_cell(const TransitionModel& model, const CellRecord& cell,
                                 std::optional<double> q0 = std::nullopt);

/// Pools all transitions of the given forecasts.
EvaluationReport evaluate(std::span<const TrajectoryForecast> forecasts);

/// Columns: t_days,q_true_ah,q_pred_ah,q_sigma_ah,dq_true_ah,dq_pred_ah,dq_sigma_ah.
void write_forecast_csv(const std::filesystem::path& path, const TrajectoryForecast& forecast);
/// Reads the columns back; the covariance becomes diagonal dq_sigma^2.
TrajectoryForecast read_forecast_csv(const std::filesystem::path& path, const std::string& cell_id);

}  // namespace cellprog
