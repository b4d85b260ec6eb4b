#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cellprog {

/// Returns f(x) and writes the gradient. A non-finite return value (or a
/// thrown cellprog::Error) marks x as infeasible; the line search backs off.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct MinimizeOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-8;  // on |f_k - f_{k+1}| / max(|f_k|, 1)
  double gradient_tolerance = 1e-6;  // infinity norm
  int history = 10;
  int max_backtracks = 50;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  bool converged = false;
  std::string reason;
  std::vector<double> trace;  // objective after every accepted step, starting with f(x0)
};

/// Limited-memory BFGS with a backtracking Armijo line search. Every accepted
/// step strictly decreases the objective.
MinimizeResult minimize_lbfgs(const Objective& objective, Eigen::VectorXd x0,
                              const MinimizeOptions& options = {});

}  // namespace cellprog
