#include "mtal/nn/quasi_newton.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "mtal/common.hpp"

namespace mtal::nn {

QuasiNewtonResult quasi_newton_minimize(const Objective& f, const Eigen::VectorXd& x0,
                                        const QuasiNewtonOptions& options) {
  QuasiNewtonResult best;
  Eigen::VectorXd g(x0.size());
  best.x = x0;
  best.value = f(x0, &g);
  best.evaluations = 1;
  if (!std::isfinite(best.value)) throw Error("quasi_newton_minimize: objective is not finite at x0");

  struct Pair {
    Eigen::VectorXd s, y;
    double rho;
  };
  std::deque<Pair> memory;
  Eigen::VectorXd x = x0, x_new, g_new(x0.size());
  double fx = best.value;

  for (int it = 0; it < options.iterations; ++it) {
    if (!g.allFinite() || g.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) break;

    // two-loop recursion
    Eigen::VectorXd q = g;
    std::vector<double> alpha(memory.size());
    for (std::size_t i = memory.size(); i-- > 0;) {
      alpha[i] = memory[i].rho * memory[i].s.dot(q);
      q -= alpha[i] * memory[i].y;
    }
    if (!memory.empty()) q *= memory.back().s.dot(memory.back().y) / memory.back().y.squaredNorm();
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const double beta = memory[i].rho * memory[i].y.dot(q);
      q += (alpha[i] - beta) * memory[i].s;
    }
    Eigen::VectorXd d = -q;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      memory.clear();
      d = -g;
      slope = -g.squaredNorm();
    }

    // weak Wolfe bisection: shrink on an Armijo failure, grow while the
    // slope is still steep; fall back to the last Armijo point
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), step = 1.0;
    bool accepted = false;
    double f_new = 0.0;
    Eigen::VectorXd x_ok, g_ok;
    double f_ok = 0.0;
    for (int bt = 0; bt <= options.max_backtracks; ++bt) {
      x_new = x + step * d;
      f_new = f(x_new, &g_new);
      ++best.evaluations;
      if (!std::isfinite(f_new) || f_new > fx + options.armijo * step * slope) {
        hi = step;
      } else {
        x_ok = x_new;
        g_ok = g_new;
        f_ok = f_new;
        accepted = true;
        if (g_new.dot(d) >= options.wolfe * slope) break;
        lo = step;
      }
      step = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * lo;
    }
    if (!accepted) break;
    x_new = std::move(x_ok);
    g_new = std::move(g_ok);
    f_new = f_ok;

    Eigen::VectorXd s = x_new - x, y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      memory.push_back({std::move(s), std::move(y), 1.0 / sy});
      if (static_cast<int>(memory.size()) > options.history) memory.pop_front();
    }
    x = x_new;
    g = g_new;
    fx = f_new;
    best.iterations = it + 1;
    if (fx < best.value) {
      best.value = fx;
      best.x = x;
    }
  }
  return best;
}

}  // namespace mtal::nn
