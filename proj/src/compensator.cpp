#include "sigdet/compensator.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "sigdet/error.hpp"
#include "sigdet/normal.hpp"

namespace sigdet {

namespace {

constexpr double kMinScoreNorm = 1e-8;
constexpr double kRegionSlack = 1e-12;
constexpr double kMinDenominator = 1e-12;

std::vector<double> merged_features(const DensityModel& a, const DensityModel& b) {
  std::vector<double> out(a.features().begin(), a.features().end());
  out.insert(out.end(), b.features().begin(), b.features().end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

ScoreGeometry score_geometry(const DensityModel& signal, const DensityModel& proposal,
                             const QuadratureSpec& quad) {
  if (!same_support(signal.region(), proposal.region())) {
    fail(ErrorCode::SupportMismatch, "signal and proposal live on different regions");
  }
  const auto& region = proposal.region();
  const auto breaks = merged_features(signal, proposal);
  // ||S||^2 = int (f_s - g)^2 / g, which avoids the cancellation in int f_s^2/g - 1.
  auto integrand = [&](double x) {
    const double g = proposal.pdf(x);
    if (!(g > 0.0) || !std::isfinite(g)) {
      fail(ErrorCode::NonFiniteKernel, "proposal density must be positive on the region");
    }
    const double d = signal.pdf(x) - g;
    return d * d / g;
  };
  const double norm2 = integrate(integrand, region.lo, region.hi, quad, breaks).value;
  const double s_norm = std::sqrt(std::max(norm2, 0.0));
  if (!(s_norm >= kMinScoreNorm)) {
    fail(ErrorCode::DegenerateSignal, "signal is indistinguishable from the proposal (||S|| = " +
                                          std::to_string(s_norm) + ")");
  }
  return ScoreGeometry(signal, proposal, s_norm);
}

double compensator_delta(const ScoreGeometry& geometry, const DensityModel& background,
                         const QuadratureSpec& quad) {
  if (!same_support(background.region(), geometry.proposal().region())) {
    fail(ErrorCode::SupportMismatch, "background lives on a different region");
  }
  auto breaks = merged_features(geometry.signal(), geometry.proposal());
  breaks.insert(breaks.end(), background.features().begin(), background.features().end());
  const auto& region = background.region();
  auto integrand = [&](double x) {
    const double fb = background.pdf(x);
    return fb == 0.0 ? 0.0 : geometry.score_dagger(x) * fb;
  };
  return integrate(integrand, region.lo, region.hi, quad, breaks).value;
}

std::vector<double> checked_sample(std::span<const double> xs, const SearchRegion& region,
                                   std::string_view label) {
  std::vector<double> out(xs.begin(), xs.end());
  const double slack = kRegionSlack * std::max(1.0, std::max(std::abs(region.lo), std::abs(region.hi)));
  for (double& x : out) {
    if (!std::isfinite(x) || !region.contains(x, slack)) {
      fail(ErrorCode::ObservationOutsideRegion,
           std::string(label) + " observation " + std::to_string(x) + " lies outside [" +
               std::to_string(region.lo) + ", " + std::to_string(region.hi) + "]");
    }
    x = std::clamp(x, region.lo, region.hi);
  }
  return out;
}

std::vector<double> score_dagger_values(const ScoreGeometry& geometry,
                                        std::span<const double> xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(geometry.score_dagger(x));
  return out;
}

MeanVar mean_var(std::span<const double> v) {
  if (v.empty()) return {};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, ss / static_cast<double>(v.size())};
}

double TwoSampleEstimate::eta_clipped() const {
  return std::clamp(eta_hat, 0.0, std::nextafter(1.0, 0.0));
}

TwoSampleEstimate estimate_two_sample(const ScoreGeometry& geometry,
                                      std::span<const double> physics,
                                      std::span<const double> background_only) {
  if (physics.size() < 2 || background_only.size() < 2) {
    fail(ErrorCode::EmptySample, "two-sample estimation needs n >= 2 and m >= 2");
  }
  const auto& region = geometry.proposal().region();
  const auto xs = checked_sample(physics, region, "physics");
  const auto ys = checked_sample(background_only, region, "background-only");

  const auto th = mean_var(score_dagger_values(geometry, xs));
  const auto de = mean_var(score_dagger_values(geometry, ys));

  TwoSampleEstimate est;
  est.n = xs.size();
  est.m = ys.size();
  est.s_norm = geometry.s_norm();
  est.theta_hat = th.mean;
  est.delta_hat = de.mean;
  est.sigma2_theta = th.var;
  est.sigma2_delta = de.var;
  est.pi_hat = static_cast<double>(est.n) / static_cast<double>(est.n + est.m);

  const double denom = est.s_norm - est.delta_hat;
  if (std::abs(denom) < kMinDenominator) {
    fail(ErrorCode::DegenerateDenominator, "||S|| - delta_hat is numerically zero");
  }
  est.denominator_flipped = denom < 0.0;
  est.eta_hat = (est.theta_hat - est.delta_hat) / denom;
  const double d2 = denom * denom;
  const double lead = est.theta_hat - est.s_norm;
  est.sigma2_eta = (1.0 - est.pi_hat) * est.sigma2_theta / d2 +
                   est.pi_hat * est.sigma2_delta * lead * lead / (d2 * d2);
  return est;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Z1: return "Z1";
    case Method::Z2: return "Z2";
    case Method::Z3: return "Z3";
    case Method::LRT: return "LRT";
  }
  return "Z1";
}

Method method_from_string(std::string_view name) {
  for (auto m : {Method::Z1, Method::Z2, Method::Z3, Method::LRT}) {
    if (to_string(m) == name) return m;
  }
  fail(ErrorCode::ConfigError, "unknown method '" + std::string(name) + "'");
}

InferenceReport wald_report(Method method, double estimate, double std_error, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    fail(ErrorCode::InvalidArgument, "significance level must lie in (0, 1)");
  }
  if (!(std_error > 0.0) || !std::isfinite(std_error)) {
    fail(ErrorCode::ZeroVariance, "plug-in variance is not positive");
  }
  InferenceReport r;
  r.method = method;
  r.level = level;
  r.estimate = estimate;
  r.estimate_clipped = std::max(estimate, 0.0);
  r.std_error = std_error;
  r.statistic = estimate / std_error;
  r.p_value = normal_upper_tail(r.statistic);
  const double z = normal_quantile(1.0 - 0.5 * level);
  r.ci_lo = estimate - z * std_error;
  r.ci_hi = estimate + z * std_error;
  return r;
}

InferenceReport test_z1(const TwoSampleEstimate& estimate, double level) {
  if (!(estimate.sigma2_eta > 0.0)) fail(ErrorCode::ZeroVariance, "sigma2_eta is zero");
  auto r = wald_report(Method::Z1, estimate.eta_hat,
                       std::sqrt(estimate.sigma2_eta / estimate.effective_size()), level);
  r.estimate_clipped = estimate.eta_clipped();
  if (estimate.denominator_flipped) r.diagnostics.emplace_back("denominator_flipped");
  return r;
}

}  // namespace sigdet
