#pragma once

#include <span>

#include "sigdet/density.hpp"

namespace sigdet {

/// Fit of the one-parameter mixture eta f_s + (1 - eta) g_tilde, where g_tilde
/// is a (possibly misspecified) background model.
struct LrtFit {
  double eta_tilde_hat = 0.0;    // maximizer over (-1, 1)
  double eta_tilde_hat_c = 0.0;  // max(eta_tilde_hat, 0)
  double loglik_at_0 = 0.0;      // always 0: log-likelihoods are relative to eta = 0
  double loglik_at_c = 0.0;
  double lrt_stat = 0.0;
  /// The maximizer sits on an edge of the search interval.
  bool boundary_flag = false;
};

LrtFit fit_lrt(const DensityModel& signal, const DensityModel& g_tilde,
               std::span<const double> physics);

/// Same fit from precomputed S_tilde(x_i) = f_s(x_i) / g_tilde(x_i) - 1.
LrtFit fit_lrt_scores(std::span<const double> scores);

/// Half point mass at zero plus half chi-square with one degree of freedom.
double chi2bar01_cdf(double t);
double chi2bar01_quantile(double p);

/// Compensator of g_tilde: integral of S_tilde-dagger against f_b.
double delta_tilde(const DensityModel& signal, const DensityModel& g_tilde,
                   const DensityModel& f_b, const QuadratureSpec& quad = {});

}  // namespace sigdet
