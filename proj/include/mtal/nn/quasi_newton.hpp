#pragma once

#include <functional>

#include <Eigen/Core>

namespace mtal::nn {

/// Objective value at x; writes the gradient into *grad when non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct QuasiNewtonOptions {
  int iterations = 10;
  int history = 10;
  int max_backtracks = 40;
  double armijo = 1e-4;
  double wolfe = 0.9;  // curvature constant
  double gradient_tolerance = 1e-12;
};

struct QuasiNewtonResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

/// Limited-memory BFGS with a weak Wolfe line search from a unit step. Returns the best
/// iterate seen; non-finite trial values are treated as rejections.
QuasiNewtonResult quasi_newton_minimize(const Objective& f, const Eigen::VectorXd& x0,
                                        const QuasiNewtonOptions& options = {});

}  // namespace mtal::nn
