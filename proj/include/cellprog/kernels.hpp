#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace cellprog {

enum class KernelFamily { Matern52, SquaredExponential, Linear };

const char* to_string(KernelFamily family);
KernelFamily parse_kernel_family(const std::string& name);

/// Covariance function plus Gaussian noise level.
///
/// Positive hyperparameters live in log space so that any real parameter
/// vector is valid. The packed layout used by the optimizer is
///   [log sf2, log rho_1..log rho_m, log noise]   (Matern52, SquaredExponential)
///   [log sf2, c_1..c_d, log noise]                (Linear)
/// with m = 1 when lengthscales are shared and m = d otherwise.
struct KernelConfig {
  KernelFamily family = KernelFamily::Matern52;
  int input_dim = 1;
  bool shared_lengthscale = false;
  double log_output_scale = 0.0;         // log sigma_f^2
  std::vector<double> log_lengthscales;  // stationary kernels only
  std::vector<double> offsets;           // linear kernel only
  double log_noise_variance = std::log(0.1);

  /// Unit hyperparameters and zero offsets for `input_dim` inputs.
  static KernelConfig make(KernelFamily family, int input_dim, bool shared_lengthscale = false);

  double output_scale() const { return std::exp(log_output_scale); }
  double noise_variance() const { return std::exp(log_noise_variance); }
  double lengthscale(int dim) const;

  Eigen::Index num_params() const;
  Eigen::VectorXd pack() const;
  void unpack(const Eigen::VectorXd& theta);

  /// Throws InvalidConfig when vector sizes disagree with family/input_dim.
  void validate() const;
};

void to_json(nlohmann::json& j, const KernelConfig& k);
void from_json(const nlohmann::json& j, KernelConfig& k);

/// Noise-free cross covariance K(A, B). Throws DimensionMismatch.
Eigen::MatrixXd kernel_eval(const KernelConfig& config, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B);

/// Prior variance k(x, x) for every row of A.
Eigen::VectorXd kernel_diag(const KernelConfig& config, const Eigen::MatrixXd& A);

/// Contracts a symmetric weight matrix W with the partial derivatives of
/// K(X, X): out_p = sum_ij W_ij dK_ij / dtheta_p for every packed parameter
/// except the trailing noise entry.
Eigen::VectorXd kernel_gradient_contract(const KernelConfig& config, const Eigen::MatrixXd& X,
                                         const Eigen::MatrixXd& W);

}  // namespace cellprog
