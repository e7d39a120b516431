#include "sigdet/nobkg.hpp"

#include <algorithm>
#include <cmath>

#include "sigdet/error.hpp"
#include "sigdet/normal.hpp"
#include "sigdet/optimize.hpp"

namespace sigdet {

namespace {

constexpr int kModeGrid = 10000;

double locate_mode(const DensityModel& signal) {
  const auto& r = signal.region();
  const double step = r.width() / (kModeGrid - 1);
  int best = 0;
  double best_val = -1.0;
  for (int i = 0; i < kModeGrid; ++i) {
    const double v = signal.pdf(r.lo + step * i);
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  const double a = std::max(r.lo, r.lo + step * (best - 1));
  const double b = std::min(r.hi, r.lo + step * (best + 1));
  return golden_section_max([&](double x) { return signal.pdf(x); }, a, b, 1e-12 * r.width()).x;
}

}  // namespace

SignalRegion signal_region(const DensityModel& signal, double epsilon,
                           std::optional<double> mode) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    fail(ErrorCode::InvalidArgument, "epsilon must lie in (0, 1)");
  }
  const auto& r = signal.region();
  const double mu = mode ? *mode : locate_mode(signal);
  if (!r.contains(mu)) fail(ErrorCode::InvalidArgument, "signal mode lies outside the region");

  auto mass = [&](double d) { return signal.cdf(mu + d) - signal.cdf(mu - d); };
  const double target = 1.0 - epsilon;
  double lo = 0.0, hi = std::min(mu - r.lo, r.hi - mu);
  if (mass(hi) < target) {
    fail(ErrorCode::RegionExceedsSupport,
         "an interval symmetric about the mode with mass 1 - epsilon would leave the region");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(mu)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) < target ? lo : hi) = mid;
  }
  return {mu, 0.5 * (lo + hi), epsilon};
}

DensityModel bump_proposal(const ParametricProposal& q_family, const Vector& alpha, double lambda,
                           const BumpParams& bump, const QuadratureSpec& quad) {
  return make_bump_mixture(q_family.density(alpha, quad), lambda, bump.mu1, bump.mu2,
                           bump.sigma0, q_family.region(), quad);
}

Theta0Estimate estimate_theta0(const DensityModel& signal, const ParametricProposal& q_family,
                               double lambda_star, const BumpParams& bump,
                               std::span<const double> physics) {
  if (physics.empty()) fail(ErrorCode::EmptySample, "theta0 estimation needs a physics sample");
  if (!(lambda_star >= 0.0 && lambda_star < 0.5)) {
    fail(ErrorCode::LambdaOutOfRange, "lambda must lie in [0, 1/2)");
  }
  const auto fit = fit_mle(q_family, physics);
  return estimate_theta0(signal, q_family, fit.beta_hat, lambda_star, bump, physics);
}

Theta0Estimate estimate_theta0(const DensityModel& signal, const ParametricProposal& q_family,
                               const Vector& alpha_hat, double lambda_star,
                               const BumpParams& bump, std::span<const double> physics) {
  if (physics.size() < 2) fail(ErrorCode::EmptySample, "theta0 estimation needs n >= 2");
  if (!(lambda_star >= 0.0 && lambda_star < 0.5)) {
    fail(ErrorCode::LambdaOutOfRange, "lambda must lie in [0, 1/2)");
  }
  const auto xs = checked_sample(physics, q_family.region(), "physics");
  const auto geom = score_geometry(signal, bump_proposal(q_family, alpha_hat, lambda_star, bump));
  const double s = geom.s_norm();

  Theta0Estimate est;
  est.alpha_hat = alpha_hat;
  est.lambda_star = lambda_star;
  est.n = xs.size();
  est.s_norm = s;

  std::vector<double> s0(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) s0[i] = geom.score0(xs[i]);
  const auto dag = mean_var(score_dagger_values(geom, xs));
  est.theta_hat = dag.mean;
  est.sigma2_theta = dag.var;
  est.theta0_hat = mean_var(s0).mean;
  est.sigma2_theta0 = dag.var / (s * s);

  if (q_family.frozen()) {
    est.D_hat = Vector(0);
    est.C_hat = Vector(0);
    est.J_hat = Matrix(0, 0);
    est.V_hat = Matrix(0, 0);
    return est;
  }

  // lambda stays fixed: only alpha is differentiated.
  const auto tight = QuadratureSpec::tight();
  auto build = [&](const Vector& a) { return bump_proposal(q_family, a, lambda_star, bump, tight); };
  const Matrix d = score0_beta_gradient(q_family, signal, alpha_hat, xs, build);
  est.D_hat = d.colwise().mean().transpose();

  const Matrix grads = q_family.grad_log_density(xs, alpha_hat);
  const Eigen::Map<const Vector> s0_vec(s0.data(), static_cast<Eigen::Index>(s0.size()));
  const double n = static_cast<double>(xs.size());
  est.J_hat = -q_family.mean_hess_log_density(xs, alpha_hat);
  est.V_hat = grads.transpose() * grads / n;
  est.C_hat = grads.transpose() * s0_vec / n;

  const Vector a = checked_inverse(est.J_hat) * est.D_hat;
  est.sigma2_theta0 += a.dot(est.V_hat * a) + 2.0 * a.dot(est.C_hat);
  return est;
}

InferenceReport test_z3(const Theta0Estimate& estimate, double level) {
  if (!(estimate.sigma2_theta0 > 0.0)) fail(ErrorCode::ZeroVariance, "theta0 variance is not positive");
  return wald_report(Method::Z3, estimate.theta0_hat,
                     std::sqrt(estimate.sigma2_theta0 / static_cast<double>(estimate.n)), level);
}

SensitivityGrid sensitivity_scan(const DensityModel& signal, const ParametricProposal& q_family,
                                 const BumpParams& bump, std::span<const double> lambdas,
                                 std::span<const double> physics,
                                 std::span<const double> x_grid, double level) {
  if (lambdas.empty()) fail(ErrorCode::InvalidArgument, "sensitivity scan needs at least one lambda");
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!(lambdas[k] >= 0.0 && lambdas[k] < 0.5)) {
      fail(ErrorCode::LambdaOutOfRange, "lambda must lie in [0, 1/2)");
    }
    if (k > 0 && !(lambdas[k] > lambdas[k - 1])) {
      fail(ErrorCode::InvalidArgument, "lambdas must be strictly increasing");
    }
  }
  if (physics.empty()) fail(ErrorCode::EmptySample, "sensitivity scan needs a physics sample");

  SensitivityGrid grid;
  grid.lambdas.assign(lambdas.begin(), lambdas.end());
  grid.x_grid.assign(x_grid.begin(), x_grid.end());
  grid.alpha_hat = fit_mle(q_family, physics).beta_hat;
  for (double lambda : lambdas) {
    grid.curves.push_back(bump_proposal(q_family, grid.alpha_hat, lambda, bump).tabulate(x_grid));
    grid.estimates.push_back(
        estimate_theta0(signal, q_family, grid.alpha_hat, lambda, bump, physics));
    grid.reports.push_back(test_z3(grid.estimates.back(), level));
  }
  return grid;
}

double theoretical_type1(double delta_beta_star, double sigma_theta, std::size_t n, double level) {
  if (!(sigma_theta > 0.0)) fail(ErrorCode::InvalidArgument, "sigma must be positive");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorCode::InvalidArgument, "level must lie in (0, 1)");
  const double z = normal_quantile(1.0 - level);
  return normal_upper_tail(z - delta_beta_star * std::sqrt(static_cast<double>(n)) / sigma_theta);
}

}  // namespace sigdet
