#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cellprog/kernels.hpp"

namespace cellprog {

/// Affine map between user targets and the zero-mean scale the GP works on:
/// y_model = (y - mean) / scale.
struct TargetTransform {
  double mean = 0.0;
  double scale = 1.0;
};

struct PosteriorPrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // full joint covariance
  bool includes_noise = false;

  Eigen::VectorXd stddev() const { return covariance.diagonal().cwiseSqrt(); }
};

/// Jitter ladder, relative to the mean diagonal of K + noise*I.
inline constexpr double kJitterLadder[] = {1e-10, 1e-8, 1e-6, 1e-4};

struct NlmlResult {
  double value = 0.0;
  Eigen::VectorXd gradient;  // w.r.t. KernelConfig::pack()
  double jitter = 0.0;       // absolute jitter added to the diagonal
};

/// Negative log marginal likelihood of zero-mean targets and its analytic
/// gradient in packed log-hyperparameter space. Throws Conditioning when no
/// rung of the jitter ladder yields a Cholesky factor.
NlmlResult nlml_grad(const KernelConfig& config, const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& y);

struct GpFitOptions {
  bool center_targets = true;
  bool scale_targets = true;
  int restarts = 5;  // total starts, the first from the data heuristic
  int max_iterations = 500;
  double relative_tolerance = 1e-8;
  double gradient_tolerance = 1e-6;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct RestartSummary {
  Eigen::VectorXd start;
  Eigen::VectorXd theta;
  double nlml = 0.0;
  int iterations = 0;
  bool finite = false;
  bool converged = false;
  std::vector<double> trace;
};

struct FitReport {
  std::vector<RestartSummary> restarts;
  std::size_t best = 0;
};

/// Exact GP regression model conditioned on its training data.
/// Immutable once built; predict() is safe to call concurrently.
class GpModel {
 public:
  /// Conditions at fixed hyperparameters. X may have zero rows, giving the prior.
  static GpModel condition(KernelConfig kernel, Eigen::MatrixXd X, Eigen::VectorXd y,
                           TargetTransform transform = {});

  PosteriorPrediction predict(const Eigen::MatrixXd& X_star, bool include_noise) const;

  const KernelConfig& kernel() const { return kernel_; }
  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::VectorXd& y() const { return y_; }
  const TargetTransform& transform() const { return transform_; }
  const Eigen::MatrixXd& cholesky_factor() const { return L_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  double nlml() const { return nlml_; }
  double jitter() const { return jitter_; }

  /// Kernel, log-hyperparameters, training data, transform, version and the
  /// NLML checksum.
  nlohmann::json to_json() const;
  /// Rebuilds the Cholesky factor and verifies the stored NLML (abs 1e-6).
  static GpModel from_json(const nlohmann::json& doc);

 private:
  KernelConfig kernel_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  TargetTransform transform_;
  Eigen::MatrixXd L_;
  Eigen::VectorXd alpha_;
  double nlml_ = 0.0;
  double jitter_ = 0.0;
};

/// Heuristic starting hyperparameters from (already transformed) data.
KernelConfig initial_hyperparameters(const KernelConfig& shape, const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& y_model);

/// Fits hyperparameters by minimizing the NLML with L-BFGS from several
/// starts and conditions on the best. `shape` supplies the family, input
/// dimension and lengthscale sharing; its values are ignored.
GpModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelConfig& shape,
            const GpFitOptions& options = {}, FitReport* report = nullptr);

}  // namespace cellprog
