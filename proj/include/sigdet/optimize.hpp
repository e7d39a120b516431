#pragma once

#include <functional>

#include <Eigen/Dense>

namespace sigdet {

struct ScalarOptimum {
  double x = 0.0;
  double value = 0.0;
  int iterations = 0;
};

/// Golden-section search for the maximum of a unimodal function on [lo, hi].
/// Non-finite values are treated as -infinity.
ScalarOptimum golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                 double x_tol, int max_iterations = 200);

struct SimplexOptions {
  double initial_step = 0.1;  // fraction of the box width
  double f_tol = 1e-12;
  double x_tol = 1e-10;
  int max_iterations = 5000;
};

struct VectorOptimum {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Nelder-Mead maximization with every trial point projected onto the box.
VectorOptimum nelder_mead_max(const std::function<double(const Eigen::VectorXd&)>& f,
                              const Eigen::VectorXd& start, const Eigen::VectorXd& lo,
                              const Eigen::VectorXd& hi, const SimplexOptions& opts = {});

}  // namespace sigdet
