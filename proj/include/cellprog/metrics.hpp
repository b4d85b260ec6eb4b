#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace cellprog {

/// Root-mean-square error of predicted capacity changes.
double rmse_dq(const Eigen::VectorXd& predicted, const Eigen::VectorXd& measured);

/// Root-mean-square error of predicted capacities.
double rmse_q(const Eigen::VectorXd& predicted, const Eigen::VectorXd& measured);

/// sqrt(mean(((Q_hat - Q) / Q)^2)). Each error is normalized by its own
/// measured capacity before squaring; throws DivisionByZero on Q == 0.
double rmse_q_norm(const Eigen::VectorXd& predicted, const Eigen::VectorXd& measured);

/// Fraction of points with |predicted - measured| < 2 sigma (strict).
double calibration_2sigma(const Eigen::VectorXd& predicted, const Eigen::VectorXd& sigma,
                          const Eigen::VectorXd& measured);

struct EvaluationReport {
  double rmse_dq = 0.0;
  double rmse_q = 0.0;
  double rmse_q_norm = 0.0;
  double cs2_dq = 0.0;
  double cs2_q = 0.0;
  long n_points = 0;
};

void to_json(nlohmann::json& j, const EvaluationReport& r);
void from_json(const nlohmann::json& j, EvaluationReport& r);

struct TableRow {
  std::string number;
  std::string model;   // "GP" or "SKGB"
  std::string kernel;  // "Ma5", "Lin", "n/a"
  int lags = 1;
  bool uses_delta_t = true;
  bool uses_q_thru = true;
  bool uses_abs_time = false;
  EvaluationReport report;
};

/// Fixed-width text table: model description columns, then the five scores.
std::string render_table(const std::vector<TableRow>& rows);

}  // namespace cellprog
