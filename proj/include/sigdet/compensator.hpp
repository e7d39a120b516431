#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sigdet/density.hpp"

namespace sigdet {

/// Score direction of a signal relative to a proposal background g:
/// S = f_s / g - 1, its G-norm, S-dagger = S / ||S||, and S0 = S / ||S||^2.
class ScoreGeometry {
 public:
  ScoreGeometry(DensityModel signal, DensityModel proposal, double s_norm)
      : signal_(std::move(signal)), proposal_(std::move(proposal)), s_norm_(s_norm) {}

  const DensityModel& signal() const { return signal_; }
  const DensityModel& proposal() const { return proposal_; }
  double s_norm() const { return s_norm_; }

  double score(double x) const { return signal_.pdf(x) / proposal_.pdf(x) - 1.0; }
  double score_dagger(double x) const { return score(x) / s_norm_; }
  double score0(double x) const { return score(x) / (s_norm_ * s_norm_); }

 private:
  DensityModel signal_;
  DensityModel proposal_;
  double s_norm_;
};

ScoreGeometry score_geometry(const DensityModel& signal, const DensityModel& proposal,
                             const QuadratureSpec& quad = {});

/// Population compensator: the integral of S-dagger against f_b.
double compensator_delta(const ScoreGeometry& geometry, const DensityModel& background,
                         const QuadratureSpec& quad = {});

/// Throws ObservationOutsideRegion for points more than 1e-12 outside the
/// region; returns the sample with boundary round-off clamped.
std::vector<double> checked_sample(std::span<const double> xs, const SearchRegion& region,
                                   std::string_view label);

/// Applies S-dagger to every observation.
std::vector<double> score_dagger_values(const ScoreGeometry& geometry, std::span<const double> xs);

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // biased (divide by count) second central moment
};
MeanVar mean_var(std::span<const double> v);

struct TwoSampleEstimate {
  double theta_hat = 0.0;
  double delta_hat = 0.0;
  double eta_hat = 0.0;  // unclipped
  double sigma2_theta = 0.0;
  double sigma2_delta = 0.0;
  double sigma2_eta = 0.0;
  double pi_hat = 0.0;
  std::size_t n = 0;
  std::size_t m = 0;
  double s_norm = 0.0;
  /// delta_hat exceeded ||S||: the estimator denominator changed sign.
  bool denominator_flipped = false;

  double eta_clipped() const;
  /// mn / (m + n), the square of the root-n scaling used by Z1 and Z2.
  double effective_size() const {
    return static_cast<double>(m) * static_cast<double>(n) / static_cast<double>(m + n);
  }
};

TwoSampleEstimate estimate_two_sample(const ScoreGeometry& geometry,
                                      std::span<const double> physics,
                                      std::span<const double> background_only);

enum class Method { Z1, Z2, Z3, LRT };
std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

struct InferenceReport {
  double estimate = 0.0;
  double estimate_clipped = 0.0;
  double std_error = 0.0;
  double statistic = 0.0;
  double p_value = 0.5;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double level = 0.05;
  Method method = Method::Z1;
  std::vector<std::string> diagnostics;
};

/// One-sided Wald report: statistic = estimate / std_error, p = 1 - Phi,
/// two-sided (1 - level) interval.
InferenceReport wald_report(Method method, double estimate, double std_error, double level);

InferenceReport test_z1(const TwoSampleEstimate& estimate, double level = 0.05);

}  // namespace sigdet
