#pragma once

#include <functional>

#include <Eigen/Dense>

namespace hmghgm {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimisation. Non-finite objective values are
/// treated as +inf, so box constraints can be expressed by returning +inf.
/// Stops when the spread of simplex values falls below ftol * (1 + |f|) or
/// the simplex diameter below xtol, or when max_evals is exhausted.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& fn,
                             const Eigen::VectorXd& x0, const Eigen::VectorXd& step,
                             int max_evals, double ftol = 1e-10, double xtol = 1e-7);

}  // namespace hmghgm
