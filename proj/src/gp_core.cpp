#include "cellprog/gp_core.hpp"

#include <cmath>
#include <future>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cellprog/error.hpp"
#include "cellprog/optimize.hpp"
#include "cellprog/version.hpp"

namespace cellprog {

namespace {

struct Factor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

Factor factorize(const Eigen::MatrixXd& Ky, bool log_escalations) {
  const double mean_diag = Ky.diagonal().mean();
  if (!std::isfinite(mean_diag) || !(mean_diag > 0.0) || !Ky.allFinite()) {
    throw Error(ErrorKind::Conditioning,
                fmt::format("covariance matrix is not usable (mean diagonal {})", mean_diag));
  }
  Factor f;
  for (std::size_t rung = 0; rung < std::size(kJitterLadder); ++rung) {
    f.jitter = kJitterLadder[rung] * mean_diag;
    Eigen::MatrixXd M = Ky;
    M.diagonal().array() += f.jitter;
    f.llt.compute(M);
    if (f.llt.info() == Eigen::Success) {
      const auto d = f.llt.matrixLLT().diagonal();
      if (d.allFinite() && (d.array() > 0.0).all()) return f;
    }
    if (log_escalations && rung + 1 < std::size(kJitterLadder)) {
      spdlog::warn("Cholesky failed with jitter {:.0e} x mean diagonal; escalating to {:.0e}",
                   kJitterLadder[rung], kJitterLadder[rung + 1]);
    }
  }
  throw Error(ErrorKind::Conditioning,
              fmt::format("Cholesky failed at every jitter level up to {:.0e} x mean diagonal",
                          kJitterLadder[std::size(kJitterLadder) - 1]));
}

Eigen::MatrixXd noisy_gram(const KernelConfig& config, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd K = kernel_eval(config, X, X);
  K.diagonal().array() += config.noise_variance();
  return K;
}

double nlml_from_factor(const Factor& f, const Eigen::VectorXd& y, const Eigen::VectorXd& alpha) {
  const double n = static_cast<double>(y.size());
  const double log_det_half = f.llt.matrixLLT().diagonal().array().log().sum();
  return 0.5 * y.dot(alpha) + log_det_half + 0.5 * n * std::log(2.0 * std::numbers::pi);
}

double population_std(const Eigen::VectorXd& v) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().mean());
}

}  // namespace

NlmlResult nlml_grad(const KernelConfig& config, const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("X has {} rows but y has {} entries", X.rows(), y.size()));
  }
  const Factor f = factorize(noisy_gram(config, X), false);
  const Eigen::VectorXd alpha = f.llt.solve(y);
  NlmlResult res;
  res.jitter = f.jitter;
  res.value = nlml_from_factor(f, y, alpha);

  const Eigen::MatrixXd Kinv = f.llt.solve(Eigen::MatrixXd::Identity(X.rows(), X.rows()));
  const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;
  res.gradient.resize(config.num_params());
  res.gradient.head(config.num_params() - 1) = -0.5 * kernel_gradient_contract(config, X, W);
  res.gradient(config.num_params() - 1) = -0.5 * config.noise_variance() * W.trace();
  return res;
}

GpModel GpModel::condition(KernelConfig kernel, Eigen::MatrixXd X, Eigen::VectorXd y,
                           TargetTransform transform) {
  kernel.validate();
  if (X.cols() != kernel.input_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("X has {} columns, kernel expects {}", X.cols(), kernel.input_dim));
  }
  if (X.rows() != y.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("X has {} rows but y has {} entries", X.rows(), y.size()));
  }
  if (!(transform.scale > 0.0)) throw Error(ErrorKind::InvalidConfig, "target scale must be > 0");
  GpModel m;
  m.kernel_ = std::move(kernel);
  m.X_ = std::move(X);
  m.y_ = std::move(y);
  m.transform_ = transform;
  if (m.X_.rows() == 0) {
    m.L_.resize(0, 0);
    m.alpha_.resize(0);
    m.nlml_ = 0.0;
    return m;
  }
  const Eigen::VectorXd y_model = (m.y_.array() - transform.mean) / transform.scale;
  const Factor f = factorize(noisy_gram(m.kernel_, m.X_), true);
  m.jitter_ = f.jitter;
  m.L_ = f.llt.matrixL();
  m.alpha_ = f.llt.solve(y_model);
  m.nlml_ = nlml_from_factor(f, y_model, m.alpha_);
  return m;
}

PosteriorPrediction GpModel::predict(const Eigen::MatrixXd& X_star, bool include_noise) const {
  if (X_star.cols() != kernel_.input_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("test inputs have {} columns, model expects {}", X_star.cols(),
                            kernel_.input_dim));
  }
  PosteriorPrediction p;
  p.includes_noise = include_noise;
  Eigen::MatrixXd cov = kernel_eval(kernel_, X_star, X_star);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(X_star.rows());
  if (X_.rows() > 0) {
    const Eigen::MatrixXd Ks = kernel_eval(kernel_, X_, X_star);
    mean = Ks.transpose() * alpha_;
    const Eigen::MatrixXd V = L_.triangularView<Eigen::Lower>().solve(Ks);
    cov.noalias() -= V.transpose() * V;
  }
  cov = 0.5 * (cov + cov.transpose()).eval();
  if (include_noise) cov.diagonal().array() += kernel_.noise_variance();

  double worst = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    if (cov(i, i) < 0.0) {
      worst = std::min(worst, cov(i, i));
      cov(i, i) = 0.0;
    }
  }
  if (worst < -1e-10) spdlog::warn("posterior variance clamped from {} to 0", worst);

  const double s = transform_.scale;
  p.mean = (mean.array() * s + transform_.mean).matrix();
  p.covariance = cov * (s * s);
  return p;
}

nlohmann::json GpModel::to_json() const {
  nlohmann::json X = nlohmann::json::array();
  for (Eigen::Index r = 0; r < X_.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(X_.cols()));
    for (Eigen::Index c = 0; c < X_.cols(); ++c) row[static_cast<std::size_t>(c)] = X_(r, c);
    X.push_back(std::move(row));
  }
  return {{"format", "cellprog.gp"},
          {"library_version", kVersion},
          {"kernel", kernel_},
          {"target_transform", {{"mean", transform_.mean}, {"scale", transform_.scale}}},
          {"X", X},
          {"y", std::vector<double>(y_.data(), y_.data() + y_.size())},
          {"nlml", nlml_}};
}

GpModel GpModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "cellprog.gp") {
      throw Error(ErrorKind::Parse, "not a serialized GP model");
    }
    const auto kernel = doc.at("kernel").get<KernelConfig>();
    TargetTransform t{doc.at("target_transform").at("mean").get<double>(),
                      doc.at("target_transform").at("scale").get<double>()};
    const auto& jx = doc.at("X");
    const auto y = doc.at("y").get<std::vector<double>>();
    Eigen::MatrixXd X(static_cast<Eigen::Index>(jx.size()), kernel.input_dim);
    for (std::size_t r = 0; r < jx.size(); ++r) {
      const auto row = jx[r].get<std::vector<double>>();
      if (row.size() != static_cast<std::size_t>(kernel.input_dim)) {
        throw Error(ErrorKind::Parse, fmt::format("GP training row {} has wrong width", r));
      }
      for (std::size_t c = 0; c < row.size(); ++c) {
        X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
      }
    }
    auto model = condition(kernel, std::move(X),
                           Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())),
                           t);
    const double stored = doc.at("nlml").get<double>();
    if (!(std::abs(model.nlml() - stored) <= 1e-6)) {
      throw Error(ErrorKind::Parse,
                  fmt::format("GP model checksum mismatch: stored NLML {} but recomputed {}", stored,
                              model.nlml()));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, fmt::format("invalid GP model document: {}", e.what()));
  }
}

KernelConfig initial_hyperparameters(const KernelConfig& shape, const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& y_model) {
  KernelConfig c = KernelConfig::make(shape.family, shape.input_dim, shape.shared_lengthscale);
  const double var_y = std::max(population_std(y_model) * population_std(y_model), 1e-8);
  c.log_output_scale = std::log(var_y);
  c.log_noise_variance = std::log(0.1 * var_y);
  if (c.family == KernelFamily::Linear) {
    for (int k = 0; k < c.input_dim; ++k) c.offsets[static_cast<std::size_t>(k)] = X.col(k).mean();
  } else {
    double mean_log_sd = 0.0;
    for (int k = 0; k < c.input_dim; ++k) {
      const double sd = population_std(X.col(k));
      const double log_sd = sd > 0.0 ? std::log(sd) : 0.0;
      mean_log_sd += log_sd / c.input_dim;
      if (!c.shared_lengthscale) c.log_lengthscales[static_cast<std::size_t>(k)] = log_sd;
    }
    if (c.shared_lengthscale) c.log_lengthscales[0] = mean_log_sd;
  }
  return c;
}

GpModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelConfig& shape,
            const GpFitOptions& options, FitReport* report) {
  if (X.rows() < 2) {
    throw Error(ErrorKind::EmptyInput,
                fmt::format("GP fit needs at least 2 training rows, got {}", X.rows()));
  }
  if (X.rows() != y.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("X has {} rows but y has {} entries", X.rows(), y.size()));
  }
  if (X.cols() != shape.input_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                fmt::format("X has {} columns, kernel expects {}", X.cols(), shape.input_dim));
  }
  if (!y.allFinite() || !X.allFinite()) {
    throw Error(ErrorKind::InvalidConfig, "GP training data must be finite");
  }
  if (options.restarts < 1) throw Error(ErrorKind::InvalidConfig, "restarts must be >= 1");

  TargetTransform t;
  if (options.center_targets) t.mean = y.mean();
  if (options.scale_targets) {
    const double sd = population_std(y);
    if (sd > 0.0) t.scale = sd;
  }
  const Eigen::VectorXd y_model = (y.array() - t.mean) / t.scale;

  const KernelConfig init = initial_hyperparameters(shape, X, y_model);
  const Eigen::VectorXd theta0 = init.pack();

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<Eigen::VectorXd> starts{theta0};
  for (int r = 1; r < options.restarts; ++r) {
    Eigen::VectorXd th = theta0;
    for (Eigen::Index p = 0; p < th.size(); ++p) {
      const bool is_offset = init.family == KernelFamily::Linear && p > 0 && p < th.size() - 1;
      if (is_offset) {
        const double sd = population_std(X.col(p - 1));
        th(p) += unit(rng) * (sd > 0.0 ? sd : 1.0);
      } else {
        th(p) += 2.0 * unit(rng);
      }
    }
    starts.push_back(std::move(th));
  }

  MinimizeOptions mo;
  mo.max_iterations = options.max_iterations;
  mo.relative_tolerance = options.relative_tolerance;
  mo.gradient_tolerance = options.gradient_tolerance;

  const auto run = [&](const Eigen::VectorXd& start) {
    KernelConfig work = init;
    const Objective objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
      work.unpack(theta);
      auto r = nlml_grad(work, X, y_model);
      grad = std::move(r.gradient);
      return r.value;
    };
    const auto res = minimize_lbfgs(objective, start, mo);
    RestartSummary s;
    s.start = start;
    s.theta = res.x;
    s.nlml = res.value;
    s.iterations = res.iterations;
    s.finite = std::isfinite(res.value);
    s.converged = res.converged;
    s.trace = res.trace;
    return s;
  };

  std::vector<RestartSummary> summaries(starts.size());
  const std::size_t workers = static_cast<std::size_t>(std::max(1, options.threads));
  for (std::size_t begin = 0; begin < starts.size(); begin += workers) {
    const std::size_t end = std::min(starts.size(), begin + workers);
    if (workers == 1) {
      summaries[begin] = run(starts[begin]);
      continue;
    }
    std::vector<std::future<RestartSummary>> jobs;
    for (std::size_t i = begin; i < end; ++i) {
      jobs.push_back(std::async(std::launch::async, run, std::cref(starts[i])));
    }
    for (std::size_t i = begin; i < end; ++i) summaries[i] = jobs[i - begin].get();
  }

  std::size_t best = summaries.size();
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    if (!summaries[i].finite) {
      spdlog::debug("GP restart {} discarded: NLML not finite", i);
      continue;
    }
    if (best == summaries.size() || summaries[i].nlml < summaries[best].nlml) best = i;
  }
  if (best == summaries.size()) {
    throw Error(ErrorKind::Optimization,
                fmt::format("all {} GP restarts produced a non-finite NLML", summaries.size()));
  }
  KernelConfig fitted = init;
  fitted.unpack(summaries[best].theta);
  if (report) {
    report->restarts = summaries;
    report->best = best;
  }
  return GpModel::condition(std::move(fitted), X, y, t);
}

}  // namespace cellprog
