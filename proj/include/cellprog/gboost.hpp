#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace cellprog {

// Quantile pair matching a +-2 sigma Gaussian interval.
inline constexpr double kLowerTwoSigmaQuantile = 0.02275;
inline constexpr double kUpperTwoSigmaQuantile = 0.97725;

struct BoostConfig {
  int n_stages = 100;
  double learning_rate = 0.1;
  int max_depth = 3;
  int min_samples_leaf = 5;
  std::vector<double> quantiles{kLowerTwoSigmaQuantile, 0.5, kUpperTwoSigmaQuantile};
  double subsample = 1.0;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig on out-of-range values, unsorted quantiles or a
  /// missing median.
  void validate() const;
};

void to_json(nlohmann::json& j, const BoostConfig& c);
void from_json(const nlohmann::json& j, BoostConfig& c);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

/// Binary regression tree; rows with x[feature] <= threshold go left.
struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(const Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>& x) const;
};

struct QuantileBooster {
  double tau = 0.5;
  double init = 0.0;
  std::vector<RegressionTree> trees;
  // Mean pinball loss on the training data after 0, 1, ..., trees.size() stages.
  std::vector<double> train_loss;

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

struct QuantileEnsemble {
  BoostConfig config;
  int input_dim = 0;
  std::vector<QuantileBooster> boosters;  // one per configured quantile, same order

  /// rows x quantiles matrix of raw (unrepaired) quantile predictions.
  Eigen::MatrixXd predict_quantiles(const Eigen::MatrixXd& X) const;
  const QuantileBooster& booster(double tau) const;

  nlohmann::json to_json() const;
  static QuantileEnsemble from_json(const nlohmann::json& doc);
};

/// Mean pinball loss rho_tau(y - pred).
double pinball_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& pred, double tau);

/// tau-quantile as a minimizing order statistic of the pinball loss.
double quantile_of(std::vector<double> values, double tau);

/// Gradient boosting on the pinball loss, one booster per quantile.
/// Constant targets yield a constant predictor.
QuantileEnsemble fit_quantile(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const BoostConfig& config);

struct IntervalPrediction {
  Eigen::VectorXd mean;       // median prediction
  Eigen::VectorXd lower;      // mean - level * sigma
  Eigen::VectorXd upper;      // mean + level * sigma
  Eigen::VectorXd sigma;      // (q_upper - q_lower) / (2 level)
  Eigen::VectorXd raw_lower;  // repaired quantile predictions before re-centering
  Eigen::VectorXd raw_upper;
  std::vector<bool> crossed;  // row needed a quantile-crossing repair
  int crossings = 0;
};

/// Gaussian interval from the symmetric quantile pair at +-sigma_level.
/// Quantile predictions are sorted per row first, so they are monotone in tau.
/// Throws InvalidConfig when the ensemble lacks the required quantiles.
IntervalPrediction predict_interval(const QuantileEnsemble& ensemble, const Eigen::MatrixXd& X,
                                    double sigma_level = 2.0);

}  // namespace cellprog
