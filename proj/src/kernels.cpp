#include "cellprog/kernels.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

const double kSqrt5 = std::sqrt(5.0);

void check_dim(const KernelConfig& c, const Eigen::MatrixXd& M, const char* what) {
  if (M.cols() != c.input_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("{} has {} columns, kernel expects {}", what, M.cols(), c.input_dim));
  }
}

Eigen::ArrayXd inverse_lengthscales(const KernelConfig& c) {
  Eigen::ArrayXd inv(c.input_dim);
  for (int k = 0; k < c.input_dim; ++k) inv(k) = 1.0 / c.lengthscale(k);
  return inv;
}

}  // namespace

const char* to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::Matern52: return "matern52";
    case KernelFamily::SquaredExponential: return "squared_exponential";
    case KernelFamily::Linear: return "linear";
  }
  return "?";
}

KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "matern52" || name == "Ma5") return KernelFamily::Matern52;
  if (name == "squared_exponential" || name == "se" || name == "rbf") {
    return KernelFamily::SquaredExponential;
  }
  if (name == "linear" || name == "Lin") return KernelFamily::Linear;
  throw Error(ErrorKind::InvalidConfig, fmt::format("unknown kernel family '{}'", name));
}

KernelConfig KernelConfig::make(KernelFamily family, int input_dim, bool shared_lengthscale) {
  KernelConfig c;
  c.family = family;
  c.input_dim = input_dim;
  c.shared_lengthscale = shared_lengthscale;
  if (family == KernelFamily::Linear) {
    c.offsets.assign(static_cast<std::size_t>(input_dim), 0.0);
  } else {
    c.log_lengthscales.assign(shared_lengthscale ? 1 : static_cast<std::size_t>(input_dim), 0.0);
  }
  return c;
}

double KernelConfig::lengthscale(int dim) const {
  return std::exp(shared_lengthscale ? log_lengthscales.at(0)
                                     : log_lengthscales.at(static_cast<std::size_t>(dim)));
}

Eigen::Index KernelConfig::num_params() const {
  return 2 + static_cast<Eigen::Index>(family == KernelFamily::Linear ? offsets.size()
                                                                       : log_lengthscales.size());
}

Eigen::VectorXd KernelConfig::pack() const {
  Eigen::VectorXd theta(num_params());
  theta(0) = log_output_scale;
  const auto& middle = family == KernelFamily::Linear ? offsets : log_lengthscales;
  for (std::size_t k = 0; k < middle.size(); ++k) theta(static_cast<Eigen::Index>(k) + 1) = middle[k];
  theta(theta.size() - 1) = log_noise_variance;
  return theta;
}

void KernelConfig::unpack(const Eigen::VectorXd& theta) {
  if (theta.size() != num_params()) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("expected {} hyperparameters, got {}", num_params(), theta.size()));
  }
  log_output_scale = theta(0);
  auto& middle = family == KernelFamily::Linear ? offsets : log_lengthscales;
  for (std::size_t k = 0; k < middle.size(); ++k) middle[k] = theta(static_cast<Eigen::Index>(k) + 1);
  log_noise_variance = theta(theta.size() - 1);
}

void KernelConfig::validate() const {
  if (input_dim < 1) throw Error(ErrorKind::InvalidConfig, "kernel input_dim must be >= 1");
  const auto d = static_cast<std::size_t>(input_dim);
  if (family == KernelFamily::Linear) {
    if (offsets.size() != d || !log_lengthscales.empty()) {
      throw Error(ErrorKind::InvalidConfig,
                  fmt::format("linear kernel needs {} offsets and no lengthscales", d));
    }
  } else {
    const auto want = shared_lengthscale ? 1 : d;
    if (log_lengthscales.size() != want || !offsets.empty()) {
      throw Error(ErrorKind::InvalidConfig,
                  fmt::format("{} kernel needs {} lengthscale(s) and no offsets", to_string(family),
                              want));
    }
  }
}

void to_json(nlohmann::json& j, const KernelConfig& k) {
  j = {{"family", to_string(k.family)},
       {"input_dim", k.input_dim},
       {"shared_lengthscale", k.shared_lengthscale},
       {"log_output_scale", k.log_output_scale},
       {"log_lengthscales", k.log_lengthscales},
       {"offsets", k.offsets},
       {"log_noise_variance", k.log_noise_variance}};
}

void from_json(const nlohmann::json& j, KernelConfig& k) {
  KernelConfig c;
  c.family = parse_kernel_family(j.at("family").get<std::string>());
  c.input_dim = j.at("input_dim").get<int>();
  c.shared_lengthscale = j.value("shared_lengthscale", false);
  c.log_output_scale = j.at("log_output_scale").get<double>();
  c.log_lengthscales = j.value("log_lengthscales", std::vector<double>{});
  c.offsets = j.value("offsets", std::vector<double>{});
  c.log_noise_variance = j.at("log_noise_variance").get<double>();
  c.validate();
  k = std::move(c);
}

Eigen::MatrixXd kernel_eval(const KernelConfig& config, const Eigen::MatrixXd& A,
                            const Eigen::MatrixXd& B) {
  check_dim(config, A, "A");
  check_dim(config, B, "B");
  const double sf2 = config.output_scale();
  Eigen::MatrixXd K(A.rows(), B.rows());
  if (config.family == KernelFamily::Linear) {
    const Eigen::RowVectorXd c =
        Eigen::Map<const Eigen::RowVectorXd>(config.offsets.data(), config.input_dim);
    K = sf2 * (A.rowwise() - c) * (B.rowwise() - c).transpose();
    return K;
  }
  const Eigen::ArrayXd inv = inverse_lengthscales(config);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      const double r2 = ((A.row(i) - B.row(j)).transpose().array() * inv).square().sum();
      if (config.family == KernelFamily::SquaredExponential) {
        K(i, j) = sf2 * std::exp(-0.5 * r2);
      } else {
        const double r = std::sqrt(r2);
        K(i, j) = sf2 * (1.0 + kSqrt5 * r + 5.0 * r2 / 3.0) * std::exp(-kSqrt5 * r);
      }
    }
  }
  return K;
}

Eigen::VectorXd kernel_diag(const KernelConfig& config, const Eigen::MatrixXd& A) {
  check_dim(config, A, "A");
  if (config.family != KernelFamily::Linear) {
    return Eigen::VectorXd::Constant(A.rows(), config.output_scale());
  }
  const Eigen::RowVectorXd c =
      Eigen::Map<const Eigen::RowVectorXd>(config.offsets.data(), config.input_dim);
  return config.output_scale() * (A.rowwise() - c).rowwise().squaredNorm();
}

Eigen::VectorXd kernel_gradient_contract(const KernelConfig& config, const Eigen::MatrixXd& X,
                                         const Eigen::MatrixXd& W) {
  check_dim(config, X, "X");
  const Eigen::Index n = X.rows();
  const int d = config.input_dim;
  const double sf2 = config.output_scale();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(config.num_params() - 1);

  if (config.family == KernelFamily::Linear) {
    const Eigen::RowVectorXd c = Eigen::Map<const Eigen::RowVectorXd>(config.offsets.data(), d);
    const Eigen::MatrixXd Xc = X.rowwise() - c;
    const Eigen::MatrixXd K = sf2 * Xc * Xc.transpose();
    out(0) = (W.array() * K.array()).sum();
    // dK_ij/dc_m = -sf2 (xc_im + xc_jm); with W symmetric the sum collapses
    // to -2 sf2 sum_i (W 1)_i xc_im.
    const Eigen::VectorXd w_rows = W.rowwise().sum();
    out.segment(1, d) = -2.0 * sf2 * (Xc.transpose() * w_rows);
    return out;
  }

  const Eigen::ArrayXd inv = inverse_lengthscales(config);
  const bool se = config.family == KernelFamily::SquaredExponential;
  Eigen::ArrayXd u2(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double w = (i == j ? 1.0 : 2.0) * W(i, j);
      u2 = ((X.row(i) - X.row(j)).transpose().array() * inv).square();
      const double r2 = u2.sum();
      double k = 0.0;
      double dk_du2 = 0.0;  // dk/dlog rho_m = dk_du2 * u_m^2
      if (se) {
        k = sf2 * std::exp(-0.5 * r2);
        dk_du2 = k;
      } else {
        const double r = std::sqrt(r2);
        const double e = std::exp(-kSqrt5 * r);
        k = sf2 * (1.0 + kSqrt5 * r + 5.0 * r2 / 3.0) * e;
        dk_du2 = sf2 * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * e;
      }
      out(0) += w * k;
      if (config.shared_lengthscale) {
        out(1) += w * dk_du2 * r2;
      } else {
        out.segment(1, d).array() += w * dk_du2 * u2;
      }
    }
  }
  return out;
}

}  // namespace cellprog
