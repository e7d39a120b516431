#include "sigdet/lrt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sigdet/compensator.hpp"
#include "sigdet/error.hpp"
#include "sigdet/normal.hpp"
#include "sigdet/optimize.hpp"

namespace sigdet {

namespace {

constexpr double kEdge = 1e-9;
constexpr double kFlatScore = 1e-12;
constexpr double kGoldenTol = 1e-7;
constexpr double kBoundaryTol = 1e-6;

double loglik(std::span<const double> scores, double eta) {
  double sum = 0.0;
  for (double s : scores) {
    const double a = eta * s;
    if (!(a > -1.0)) return -std::numeric_limits<double>::infinity();
    sum += std::log1p(a);
  }
  return sum;
}

}  // namespace

LrtFit fit_lrt_scores(std::span<const double> scores) {
  if (scores.empty()) fail(ErrorCode::EmptySample, "LRT needs a nonempty physics sample");
  double smax = -std::numeric_limits<double>::infinity();
  double amax = 0.0;
  for (double s : scores) {
    if (!std::isfinite(s)) fail(ErrorCode::NonFiniteLogLik, "score is not finite");
    smax = std::max(smax, s);
    amax = std::max(amax, std::abs(s));
  }
  if (amax <= kFlatScore) {
    fail(ErrorCode::FlatLikelihood, "signal and background model coincide on the sample");
  }

  // 1 + eta S > 0 is automatic for eta < 1 because S >= -1; below zero it
  // requires eta > -1 / max S.
  double lo = -1.0 + kEdge;
  const double hi = 1.0 - kEdge;
  if (smax > 1.0) lo = std::max(lo, -1.0 / smax);

  auto f = [&](double eta) { return loglik(scores, eta); };
  double eta = golden_section_max(f, lo, hi, kGoldenTol, 400).x;

  // Newton polish on the concave log-likelihood, bisecting toward the edge
  // whenever a step would leave the interval.
  for (int it = 0; it < 60; ++it) {
    double g = 0.0, h = 0.0;
    for (double s : scores) {
      const double d = 1.0 + eta * s;
      g += s / d;
      h -= s * s / (d * d);
    }
    if (!(h < 0.0)) break;
    double next = eta - g / h;
    if (next <= lo) next = 0.5 * (eta + lo);
    if (next >= hi) next = 0.5 * (eta + hi);
    if (!(f(next) >= f(eta) - 1e-12 * (1.0 + std::abs(f(eta))))) break;
    const double step = std::abs(next - eta);
    eta = next;
    if (step <= 1e-15) break;
  }

  LrtFit fit;
  fit.eta_tilde_hat = eta;
  fit.eta_tilde_hat_c = eta > 0.0 ? eta : 0.0;
  fit.boundary_flag = (eta - lo) <= kBoundaryTol || (hi - eta) <= kBoundaryTol;
  fit.loglik_at_0 = 0.0;
  fit.loglik_at_c = fit.eta_tilde_hat_c > 0.0 ? f(fit.eta_tilde_hat_c) : 0.0;
  if (!std::isfinite(fit.loglik_at_c)) {
    fail(ErrorCode::NonFiniteLogLik, "log-likelihood is not finite at the constrained MLE");
  }
  fit.lrt_stat = std::max(0.0, 2.0 * (fit.loglik_at_c - fit.loglik_at_0));
  return fit;
}

LrtFit fit_lrt(const DensityModel& signal, const DensityModel& g_tilde,
               std::span<const double> physics) {
  if (!same_support(signal.region(), g_tilde.region())) {
    fail(ErrorCode::SupportMismatch, "signal and background model live on different regions");
  }
  if (physics.empty()) fail(ErrorCode::EmptySample, "LRT needs a nonempty physics sample");
  const auto xs = checked_sample(physics, g_tilde.region(), "physics");
  std::vector<double> scores;
  scores.reserve(xs.size());
  for (double x : xs) {
    const double g = g_tilde.pdf(x);
    if (!(g > 0.0)) fail(ErrorCode::NonFiniteLogLik, "background model vanishes at an observation");
    scores.push_back(signal.pdf(x) / g - 1.0);
  }
  return fit_lrt_scores(scores);
}

double chi2bar01_cdf(double t) {
  if (!(t >= 0.0)) fail(ErrorCode::DomainError, "chi-bar-square cdf needs t >= 0");
  // 1/2 + 1/2 P(chi2_1 <= t) = 1/2 + 1/2 (2 Phi(sqrt t) - 1)
  return normal_cdf(std::sqrt(t));
}

double chi2bar01_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::DomainError, "chi-bar-square quantile needs p in (0, 1)");
  if (p <= 0.5) return 0.0;
  const double z = normal_quantile(p);
  return z * z;
}

double delta_tilde(const DensityModel& signal, const DensityModel& g_tilde,
                   const DensityModel& f_b, const QuadratureSpec& quad) {
  return compensator_delta(score_geometry(signal, g_tilde, quad), f_b, quad);
}

}  // namespace sigdet
