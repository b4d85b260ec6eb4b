#include "cellprog/metrics.hpp"

#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

void check_pair(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::LengthMismatch,
                fmt::format("{}: {} predictions vs {} measurements", what, a.size(), b.size()));
  }
  if (a.size() == 0) throw Error(ErrorKind::EmptyInput, fmt::format("{}: no points", what));
}

}  // namespace

double rmse_dq(const Eigen::VectorXd& predicted, const Eigen::VectorXd& measured) {
  check_pair(predicted, measured, "rmse_dq");
  return std::sqrt((predicted - measured).squaredNorm() / static_cast<double>(predicted.size()));
}

double rmse_q(const Eigen::VectorXd& predicted, const Eigen::VectorXd& measured) {
  check_pair(predicted, measured, "rmse_q");
  return std::sqrt((predicted - measured).squaredNorm() / static_cast<double>(predicted.size()));
}

double rmse_q_norm(const Eigen::VectorXd& predicted, const Eigen::VectorXd& measured) {
  check_pair(predicted, measured, "rmse_q_norm");
  double total = 0.0;
  for (Eigen::Index i = 0; i < measured.size(); ++i) {
    if (measured(i) == 0.0) {
      throw Error(ErrorKind::DivisionByZero,
                  fmt::format("rmse_q_norm: measured capacity at index {} is zero", i));
    }
    const double e = (predicted(i) - measured(i)) / measured(i);
    total += e * e;
  }
  return std::sqrt(total / static_cast<double>(measured.size()));
}

double calibration_2sigma(const Eigen::VectorXd& predicted, const Eigen::VectorXd& sigma,
                          const Eigen::VectorXd& measured) {
  check_pair(predicted, measured, "calibration_2sigma");
  if (sigma.size() != predicted.size()) {
    throw Error(ErrorKind::LengthMismatch, "calibration_2sigma: sigma length mismatch");
  }
  long inside = 0;
  for (Eigen::Index i = 0; i < predicted.size(); ++i) {
    if (!(sigma(i) >= 0.0)) {
      throw Error(ErrorKind::Contract,
                  fmt::format("calibration_2sigma: sigma at index {} is {}", i, sigma(i)));
    }
    if (std::abs(predicted(i) - measured(i)) < 2.0 * sigma(i)) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(predicted.size());
}

void to_json(nlohmann::json& j, const EvaluationReport& r) {
  j = {{"rmse_dq", r.rmse_dq},         {"rmse_q", r.rmse_q}, {"rmse_q_norm", r.rmse_q_norm},
       {"cs2_dq", r.cs2_dq},           {"cs2_q", r.cs2_q},   {"n_points", r.n_points}};
}

void from_json(const nlohmann::json& j, EvaluationReport& r) {
  r.rmse_dq = j.at("rmse_dq").get<double>();
  r.rmse_q = j.at("rmse_q").get<double>();
  r.rmse_q_norm = j.at("rmse_q_norm").get<double>();
  r.cs2_dq = j.at("cs2_dq").get<double>();
  r.cs2_q = j.at("cs2_q").get<double>();
  r.n_points = j.at("n_points").get<long>();
}

std::string render_table(const std::vector<TableRow>& rows) {
  const auto mark = [](bool b) { return b ? "yes" : "no"; };
  std::string out = fmt::format("{:<4} {:<6} {:<7} {:>4} {:>4} {:>6} {:>4} | {:>9} {:>7} | {:>9} {:>9} {:>7}\n",
                                "No.", "Model", "Kernel", "Lags", "dt", "Qthru", "t", "dQ RMSE",
                                "dQ CS", "Q RMSE", "Q RMSEn", "Q CS");
  out += std::string(out.size() - 1, '-') + '\n';
  for (const auto& r : rows) {
    out += fmt::format(
        "{:<4} {:<6} {:<7} {:>4} {:>4} {:>6} {:>4} | {:>9.4f} {:>7.3f} | {:>9.3f} {:>9.3f} {:>7.3f}\n",
        r.number, r.model, r.kernel, r.lags, mark(r.uses_delta_t), mark(r.uses_q_thru),
        mark(r.uses_abs_time), r.report.rmse_dq, r.report.cs2_dq, r.report.rmse_q,
        r.report.rmse_q_norm, r.report.cs2_q);
  }
  return out;
}

}  // namespace cellprog
