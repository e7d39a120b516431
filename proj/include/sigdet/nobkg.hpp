#pragma once

#include <optional>
#include <span>
#include <vector>

#include "sigdet/compensator.hpp"
#include "sigdet/parametric.hpp"

namespace sigdet {

/// Symmetric interval around the signal mode carrying 1 - epsilon of its mass.
struct SignalRegion {
  double mu_s = 0.0;
  double d_eps = 0.0;
  double epsilon = 0.0;

  double lo() const { return mu_s - d_eps; }
  double hi() const { return mu_s + d_eps; }
};

/// The mode is located by a 10^4-point grid plus golden-section refinement
/// unless supplied.
SignalRegion signal_region(const DensityModel& signal, double epsilon,
                           std::optional<double> mode = std::nullopt);

/// Centers and common width of the two truncated Gaussians of the dominating bump.
struct BumpParams {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double sigma0 = 1.0;
};

struct Theta0Estimate {
  double theta0_hat = 0.0;
  double sigma2_theta0 = 0.0;
  Vector alpha_hat;
  double lambda_star = 0.0;
  std::size_t n = 0;
  double s_norm = 0.0;
  double theta_hat = 0.0;     // mean of S-dagger at beta_hat
  double sigma2_theta = 0.0;  // its sample variance
  Vector D_hat;
  Matrix J_hat;
  Matrix V_hat;
  Vector C_hat;
};

/// g_(alpha, lambda): the bump mixture built on q_alpha.
DensityModel bump_proposal(const ParametricProposal& q_family, const Vector& alpha, double lambda,
                           const BumpParams& bump, const QuadratureSpec& quad = {});

/// Fits alpha on the physics sample, then evaluates theta0 and its plug-in
/// variance at (alpha_hat, lambda_star).
Theta0Estimate estimate_theta0(const DensityModel& signal, const ParametricProposal& q_family,
                               double lambda_star, const BumpParams& bump,
                               std::span<const double> physics);

/// Same, with alpha already fitted on this physics sample.
Theta0Estimate estimate_theta0(const DensityModel& signal, const ParametricProposal& q_family,
                               const Vector& alpha_hat, double lambda_star,
                               const BumpParams& bump, std::span<const double> physics);

InferenceReport test_z3(const Theta0Estimate& estimate, double level = 0.05);

struct SensitivityGrid {
  std::vector<double> lambdas;
  Vector alpha_hat;
  std::vector<double> x_grid;
  std::vector<std::vector<double>> curves;  // one per lambda, tabulated on x_grid
  std::vector<Theta0Estimate> estimates;
  std::vector<InferenceReport> reports;
};

SensitivityGrid sensitivity_scan(const DensityModel& signal, const ParametricProposal& q_family,
                                 const BumpParams& bump, std::span<const double> lambdas,
                                 std::span<const double> physics,
                                 std::span<const double> x_grid, double level = 0.05);

/// 1 - Phi(z_level - delta sqrt(n) / sigma): the large-sample rejection rate
/// of the test when the compensator at beta* equals delta.
double theoretical_type1(double delta_beta_star, double sigma_theta, std::size_t n,
                         double level = 0.05);

}  // namespace sigdet
