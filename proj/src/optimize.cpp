#include "cellprog/optimize.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "cellprog/error.hpp"

namespace cellprog {

namespace {

double safe_eval(const Objective& f, const Eigen::VectorXd& x, Eigen::VectorXd& g) {
  try {
    const double v = f(x, g);
    if (!std::isfinite(v) || !g.allFinite()) return std::numeric_limits<double>::infinity();
    return v;
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

MinimizeResult minimize_lbfgs(const Objective& objective, Eigen::VectorXd x0,
                              const MinimizeOptions& options) {
  MinimizeResult res;
  res.x = std::move(x0);
  res.gradient = Eigen::VectorXd::Zero(res.x.size());
  res.value = safe_eval(objective, res.x, res.gradient);
  if (!std::isfinite(res.value)) {
    res.reason = "objective not finite at starting point";
    return res;
  }
  res.trace.push_back(res.value);

  struct Pair {
    Eigen::VectorXd s, y;
    double rho;
  };
  std::deque<Pair> memory;
  Eigen::VectorXd g_new(res.x.size());

  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    if (res.gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      res.converged = true;
      res.reason = "gradient tolerance";
      return res;
    }

    // Two-loop recursion.
    Eigen::VectorXd q = res.gradient;
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      alpha[k] = memory[k].rho * memory[k].s.dot(q);
      q -= alpha[k] * memory[k].y;
    }
    if (!memory.empty()) {
      const auto& last = memory.back();
      q *= last.s.dot(last.y) / last.y.squaredNorm();
    } else {
      q /= std::max(1.0, res.gradient.norm());
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const double beta = memory[k].rho * memory[k].y.dot(q);
      q += (alpha[k] - beta) * memory[k].s;
    }
    Eigen::VectorXd direction = -q;
    double slope = direction.dot(res.gradient);
    if (!(slope < 0.0)) {
      memory.clear();
      direction = -res.gradient / std::max(1.0, res.gradient.norm());
      slope = direction.dot(res.gradient);
    }

    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      x_new = res.x + step * direction;
      f_new = safe_eval(objective, x_new, g_new);
      if (f_new < res.value && f_new <= res.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!memory.empty()) {
        // Retry from steepest descent before giving up.
        memory.clear();
        continue;
      }
      res.reason = "line search failed";
      res.converged = res.gradient.lpNorm<Eigen::Infinity>() < 1e3 * options.gradient_tolerance;
      return res;
    }

    Pair p{x_new - res.x, g_new - res.gradient, 0.0};
    const double sy = p.s.dot(p.y);
    if (sy > 1e-12 * p.s.norm() * p.y.norm()) {
      p.rho = 1.0 / sy;
      memory.push_back(std::move(p));
      if (static_cast<int>(memory.size()) > options.history) memory.pop_front();
    }

    const double f_old = res.value;
    res.x = std::move(x_new);
    res.value = f_new;
    res.gradient = g_new;
    res.trace.push_back(f_new);
    if (std::abs(f_old - f_new) / std::max(std::abs(f_old), 1.0) < options.relative_tolerance) {
      ++res.iterations;
      res.converged = true;
      res.reason = "relative tolerance";
      return res;
    }
  }
  res.reason = "iteration limit";
  return res;
}

}  // namespace cellprog
