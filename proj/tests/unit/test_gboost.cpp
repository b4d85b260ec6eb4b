#include <algorithm>
#include <cmath>
#include <random>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "cellprog/gboost.hpp"
#include "fixtures.hpp"

using namespace cellprog;

namespace {

Eigen::MatrixXd uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

// Ensemble whose boosters are bare constants, for exercising interval logic.
QuantileEnsemble constant_ensemble(double lower, double median, double upper) {
  QuantileEnsemble e;
  e.input_dim = 1;
  const double values[] = {lower, median, upper};
  for (std::size_t q = 0; q < 3; ++q) {
    QuantileBooster b;
    b.tau = e.config.quantiles[q];
    b.init = values[q];
    e.boosters.push_back(b);
  }
  return e;
}

double empirical_quantile(std::vector<double> v, double tau) {
  std::sort(v.begin(), v.end());
  const double pos = tau * static_cast<double>(v.size() - 1);
  const auto k = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(k);
  return k + 1 < v.size() ? v[k] * (1 - frac) + v[k + 1] * frac : v[k];
}

}  // namespace

TEST_SUITE("fit_quantile") {
  TEST_CASE("constant target gives a constant predictor") {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd X = uniform_matrix(rng, 50, 2);
    const auto e = fit_quantile(X, Eigen::VectorXd::Constant(50, 3.0), BoostConfig{});
    const Eigen::MatrixXd Q = e.predict_quantiles(uniform_matrix(rng, 10, 2));
    CHECK((Q.array() == 3.0).all());
  }

  TEST_CASE("upper quantile of an uninformative Gaussian sample") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 1.0);
    const int n = 10000;
    const Eigen::MatrixXd X = uniform_matrix(rng, n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = g(rng);
    BoostConfig c;
    c.quantiles = {0.5, 0.977};
    const auto e = fit_quantile(X, y, c);
    const double oracle = empirical_quantile(std::vector<double>(y.data(), y.data() + n), 0.977);
    const Eigen::VectorXd pred = e.booster(0.977).predict(uniform_matrix(rng, 2000, 1));
    CHECK(std::abs(pred.mean() - 2.0) < 0.15);
    CHECK(std::abs(pred.mean() - oracle) < 0.15);
  }

  TEST_CASE("training pinball loss never increases across stages") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.3);
    const Eigen::MatrixXd X = uniform_matrix(rng, 300, 3);
    Eigen::VectorXd y(300);
    for (int i = 0; i < 300; ++i) y(i) = std::sin(6 * X(i, 0)) + X(i, 1) * X(i, 2) + g(rng);
    const auto e = fit_quantile(X, y, BoostConfig{});
    for (const auto& b : e.boosters) {
      REQUIRE(b.train_loss.size() == 101);
      for (std::size_t s = 1; s < b.train_loss.size(); ++s) CHECK(b.train_loss[s] <= b.train_loss[s - 1]);
      CHECK(b.train_loss.back() < b.train_loss.front());
      // Recorded losses agree with the public predictor.
      CHECK(pinball_loss(y, b.predict(X), b.tau) == doctest::Approx(b.train_loss.back()).epsilon(1e-12));
    }
  }

  TEST_CASE("halving the learning rate with twice the stages is stable") {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd X = uniform_matrix(rng, 400, 2);
    Eigen::VectorXd y(400);
    for (int i = 0; i < 400; ++i) y(i) = std::sin(3 * X(i, 0)) + 0.5 * X(i, 1);
    BoostConfig a;
    BoostConfig b;
    b.learning_rate = 0.05;
    b.n_stages = 200;
    const Eigen::MatrixXd Xs = uniform_matrix(rng, 200, 2);
    const Eigen::VectorXd pa = fit_quantile(X, y, a).booster(0.5).predict(Xs);
    const Eigen::VectorXd pb = fit_quantile(X, y, b).booster(0.5).predict(Xs);
    const double sd = std::sqrt((y.array() - y.mean()).square().mean());
    // Typical (root-mean-square) change; single points near split edges move more.
    const double rms_change = std::sqrt((pa - pb).squaredNorm() / static_cast<double>(pa.size()));
    CHECK(rms_change < sd / 10.0);
  }

  TEST_CASE("deterministic under a fixed seed") {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd X = uniform_matrix(rng, 200, 2);
    const Eigen::VectorXd y = X.col(0) + 0.1 * uniform_matrix(rng, 200, 1).col(0);
    BoostConfig c;
    c.subsample = 0.7;
    c.seed = 42;
    const auto a = fit_quantile(X, y, c);
    const auto b = fit_quantile(X, y, c);
    CHECK(a.to_json().dump() == b.to_json().dump());
    c.seed = 43;
    CHECK(fit_quantile(X, y, c).to_json().dump() != a.to_json().dump());
  }

  TEST_CASE("JSON round trip") {
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd X = uniform_matrix(rng, 80, 2);
    const Eigen::VectorXd y = X.col(0) - X.col(1);
    const auto e = fit_quantile(X, y, BoostConfig{});
    const auto doc = nlohmann::json::parse(e.to_json().dump());
    CHECK(doc.at("format") == "cellprog.gboost");
    const auto back = QuantileEnsemble::from_json(doc);
    CHECK(back.predict_quantiles(X) == e.predict_quantiles(X));
  }

  TEST_CASE("configuration and input errors") {
    BoostConfig c;
    c.quantiles = {0.1, 0.9};
    CHECK_THROWS_KIND(c.validate(), ErrorKind::InvalidConfig);
    c.quantiles = {0.5, 0.4};
    CHECK_THROWS_KIND(c.validate(), ErrorKind::InvalidConfig);
    c = BoostConfig{};
    c.learning_rate = 0.0;
    CHECK_THROWS_KIND(c.validate(), ErrorKind::InvalidConfig);
    CHECK_THROWS_KIND(fit_quantile(Eigen::MatrixXd::Zero(3, 1), Eigen::VectorXd::Zero(3), BoostConfig{}),
                      ErrorKind::EmptyInput);
    CHECK(quantile_of({3.0, 1.0, 2.0, 4.0}, 0.5) == 2.0);
    CHECK(quantile_of({3.0, 1.0, 2.0, 4.0}, 0.75) == 3.0);
  }
}

TEST_SUITE("predict_interval") {
  TEST_CASE("symmetric case") {
    const auto p = predict_interval(constant_ensemble(-2.0, 0.0, 2.0), Eigen::MatrixXd::Zero(1, 1));
    CHECK(p.sigma(0) == 1.0);
    CHECK(p.lower(0) == -2.0);
    CHECK(p.upper(0) == 2.0);
    CHECK(p.crossings == 0);
  }

  TEST_CASE("crossed quantiles are repaired by sorting") {
    const auto p = predict_interval(constant_ensemble(2.0, 0.0, -2.0), Eigen::MatrixXd::Zero(3, 1));
    CHECK(p.crossings == 3);
    CHECK(p.crossed[0]);
    CHECK(p.raw_lower(0) == -2.0);
    CHECK(p.raw_upper(0) == 2.0);
    CHECK(p.sigma(0) == 1.0);
    const auto q = predict_interval(constant_ensemble(-1.0, 3.0, 2.0), Eigen::MatrixXd::Zero(1, 1));
    CHECK(q.mean(0) == 2.0);  // sorted median
    CHECK(q.raw_upper(0) == 3.0);
  }

  TEST_CASE("skewed data: asymmetric before centering, symmetric after") {
    std::mt19937_64 rng(7);
    std::lognormal_distribution<double> ln(0.0, 0.6);
    const int n = 5000;
    const Eigen::MatrixXd X = uniform_matrix(rng, n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = ln(rng);
    const auto e = fit_quantile(X, y, BoostConfig{});
    const auto p = predict_interval(e, uniform_matrix(rng, 100, 1));
    const std::vector<double> sample(y.data(), y.data() + n);
    const double lo = empirical_quantile(sample, kLowerTwoSigmaQuantile);
    const double med = empirical_quantile(sample, 0.5);
    const double hi = empirical_quantile(sample, kUpperTwoSigmaQuantile);
    CHECK(std::abs(p.raw_lower.mean() - lo) < 0.1);
    CHECK(std::abs(p.mean.mean() - med) < 0.1);
    CHECK(std::abs(p.raw_upper.mean() - hi) < 0.5);
    const double above = (p.raw_upper - p.mean).mean();
    const double below = (p.mean - p.raw_lower).mean();
    CHECK(above > 1.5 * below);
    CHECK(((p.upper - p.mean) - (p.mean - p.lower)).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("repaired quantiles are monotone for every row") {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd X = uniform_matrix(rng, 60, 2);
    Eigen::VectorXd y(60);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 60; ++i) y(i) = g(rng);
    BoostConfig c;
    c.min_samples_leaf = 1;
    c.learning_rate = 1.0;
    const auto e = fit_quantile(X, y, c);
    const auto p = predict_interval(e, uniform_matrix(rng, 500, 2));
    CHECK(((p.raw_lower.array() <= p.mean.array()) && (p.mean.array() <= p.raw_upper.array())).all());
    CHECK((p.sigma.array() >= 0.0).all());
  }

  TEST_CASE("missing quantiles are a configuration error") {
    auto e = constant_ensemble(-1.0, 0.0, 1.0);
    e.boosters[0].tau = 0.1;
    CHECK_THROWS_KIND(predict_interval(e, Eigen::MatrixXd::Zero(1, 1)), ErrorKind::InvalidConfig);
  }
}
