#include <cmath>

#include <doctest.h>

#include "cellprog/optimize.hpp"
#include "fixtures.hpp"

using namespace cellprog;

namespace {

double rosenbrock(const Eigen::VectorXd& x, Eigen::VectorXd& g) {
  g.resize(2);
  const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
  g(0) = -2.0 * a - 400.0 * x(0) * b;
  g(1) = 200.0 * b;
  return a * a + 100.0 * b * b;
}

}  // namespace

TEST_CASE("Rosenbrock reaches the minimum") {
  MinimizeOptions opts;
  opts.relative_tolerance = 0.0;
  opts.gradient_tolerance = 1e-8;
  const auto r = minimize_lbfgs(rosenbrock, Eigen::Vector2d(-1.2, 1.0), opts);
  CHECK(r.converged);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("accepted steps strictly decrease the objective") {
  const auto r = minimize_lbfgs(rosenbrock, Eigen::Vector2d(-1.2, 1.0));
  REQUIRE(r.trace.size() >= 2);
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] < r.trace[k - 1]);
  CHECK(r.value == r.trace.back());
}

TEST_CASE("ill-conditioned quadratic") {
  const Eigen::VectorXd d = (Eigen::VectorXd(4) << 1.0, 10.0, 100.0, 1000.0).finished();
  const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = d.cwiseProduct(x - Eigen::VectorXd::Ones(4));
    return 0.5 * (x - Eigen::VectorXd::Ones(4)).dot(g);
  };
  const auto r = minimize_lbfgs(f, Eigen::VectorXd::Zero(4));
  CHECK(r.converged);
  CHECK((r.x - Eigen::VectorXd::Ones(4)).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("infeasible regions are backed away from") {
  // log barrier: undefined for x <= 0; the unconstrained quadratic pulls below zero.
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(1);
    if (x(0) <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    g(0) = 2.0 * (x(0) + 1.0) - 0.1 / x(0);
    return (x(0) + 1.0) * (x(0) + 1.0) - 0.1 * std::log(x(0));
  };
  const auto r = minimize_lbfgs(f, Eigen::VectorXd::Constant(1, 3.0));
  CHECK(std::isfinite(r.value));
  // Stationary point of the barrier problem: 2x^2 + 2x - 0.1 = 0.
  CHECK(r.x(0) == doctest::Approx((-2.0 + std::sqrt(4.0 + 0.8)) / 4.0).epsilon(1e-4));
}

TEST_CASE("thrown library errors count as infeasible") {
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    if (std::abs(x(0)) > 2.0) throw Error(ErrorKind::Conditioning, "out of range");
    g = 2.0 * x;
    return x.squaredNorm();
  };
  const auto r = minimize_lbfgs(f, Eigen::VectorXd::Constant(1, 1.5));
  CHECK(std::abs(r.x(0)) < 1e-4);
}

TEST_CASE("non-finite start and iteration limit are reported") {
  const Objective bad = [](const Eigen::VectorXd&, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Zero(1);
    return std::numeric_limits<double>::infinity();
  };
  const auto r = minimize_lbfgs(bad, Eigen::VectorXd::Zero(1));
  CHECK_FALSE(r.converged);
  CHECK_FALSE(std::isfinite(r.value));

  MinimizeOptions opts;
  opts.max_iterations = 3;
  opts.relative_tolerance = 0.0;
  opts.gradient_tolerance = 0.0;
  const auto s = minimize_lbfgs(rosenbrock, Eigen::Vector2d(-1.2, 1.0), opts);
  CHECK(s.iterations == 3);
  CHECK_FALSE(s.converged);
  CHECK(s.reason == "iteration limit");
}
