#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "sigdet/nobkg.hpp"

using namespace sigdet;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const SearchRegion kSim(1.0, 2.0);
const BumpParams kBump{1.25, 1.31, 0.08};

DensityModel sim_signal() { return truncated_gaussian(kSim, 1.28, 0.02); }
ParametricProposal pareto() { return pareto_family(kSim, {0.05, 20.0, 3.0}); }
Vector vec1(double v) { return Vector::Constant(1, v); }

// Closed-form bump proposal on the Pareto baseline.
struct BumpOracle {
  double lambda;
  double tn(double x, double mu) const {
    const double s = kBump.sigma0;
    const double z = std::erf((2.0 - mu) / (s * std::sqrt(2.0))) - std::erf((1.0 - mu) / (s * std::sqrt(2.0)));
    return std::exp(-0.5 * (x - mu) * (x - mu) / (s * s)) / (s * std::sqrt(2.0 * M_PI)) / (0.5 * z);
  }
  double q(double x, double a) const { return a * std::pow(x, -a - 1.0) / (1.0 - std::pow(2.0, -a)); }
  double g(double x, double a) const {
    return (1.0 - 2.0 * lambda) * q(x, a) + lambda * (tn(x, kBump.mu1) + tn(x, kBump.mu2));
  }
  double fs(double x) const {
    const double s = 0.02;
    return std::exp(-0.5 * (x - 1.28) * (x - 1.28) / (s * s)) / (s * std::sqrt(2.0 * M_PI));
  }
  double s_norm(double a) const {
    return std::sqrt(oracle::simpson([&](double x) {
      const double d = fs(x) - g(x, a);
      return d * d / g(x, a);
    }, 1.0, 2.0, 200000));
  }
  double score0(double x, double a, double s) const { return (fs(x) / g(x, a) - 1.0) / (s * s); }
};

}  // namespace

TEST_CASE("signal region of the narrow Gaussian signal") {
  const auto fs = sim_signal();
  const auto sr = signal_region(fs, 0.001);
  const double z = 3.2905267314918945;  // Phi^-1(1 - 0.0005)
  CHECK_THAT(sr.mu_s, WithinAbs(1.28, 1e-8));
  CHECK_THAT(sr.d_eps, WithinRel(z * 0.02, 1e-6));
  CHECK_THAT(sr.lo(), WithinAbs(1.214, 5e-4));
  CHECK_THAT(sr.hi(), WithinAbs(1.346, 5e-4));
  CHECK_THAT(fs.cdf(sr.hi()) - fs.cdf(sr.lo()), WithinAbs(0.999, 1e-9));

  CHECK(signal_region(fs, 0.999999).d_eps < 1e-4);
  CHECK_THROWS_AS(signal_region(truncated_gaussian(kSim, 1.05, 0.2), 0.001), Error);
  CHECK_THROWS_AS(signal_region(fs, 0.0), Error);
}

TEST_CASE("theoretical type I error") {
  CHECK_THAT(theoretical_type1(0.0, 1.0, 500, 0.05), WithinAbs(0.05, 1e-12));
  const double ref = 1.0 - oracle::phi_cdf(1.6448536269514722 - 0.01 * std::sqrt(2000.0));
  CHECK_THAT(theoretical_type1(0.01, 1.0, 2000, 0.05), WithinAbs(ref, 1e-10));
  CHECK_THAT(theoretical_type1(0.01, 1.0, 2000, 0.05), WithinAbs(0.1155, 1e-4));
  double prev = 1.0;
  for (std::size_t n : {50u, 100u, 250u, 500u, 1000u, 1500u, 2000u}) {
    const double t = theoretical_type1(-0.01, 0.3, n, 0.05);
    CHECK(t < prev);
    prev = t;
  }
  CHECK(prev < 0.05);
}

TEST_CASE("Z3 pieces match the closed-form oracle") {
  const auto fs = sim_signal();
  const double alpha = 3.5, lambda = 0.02;
  const std::vector<double> xs = {1.05, 1.2, 1.27, 1.3, 1.5, 1.9};
  const auto est = estimate_theta0(fs, pareto(), vec1(alpha), lambda, kBump, xs);

  const BumpOracle o{lambda};
  const double s = o.s_norm(alpha);
  CHECK_THAT(est.s_norm, WithinRel(s, 1e-7));
  std::vector<double> s0, sd;
  for (double x : xs) {
    s0.push_back(o.score0(x, alpha, s));
    sd.push_back(s0.back() * s);
  }
  CHECK_THAT(est.theta0_hat, WithinAbs(oracle::mean(s0), 1e-7));
  CHECK_THAT(est.theta0_hat, WithinAbs(est.theta_hat / est.s_norm, 1e-10));

  const double h = 1e-4;
  const double sp = o.s_norm(alpha + h), sm = o.s_norm(alpha - h);
  double D = 0.0, V = 0.0, C = 0.0;
  const double l2 = std::log(2.0), t = std::pow(2.0, -alpha);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    D += (o.score0(xs[i], alpha + h, sp) - o.score0(xs[i], alpha - h, sm)) / (2.0 * h);
    const double grad = 1.0 / alpha - std::log(xs[i]) - t * l2 / (1.0 - t);
    V += grad * grad;
    C += s0[i] * grad;
  }
  const double n = static_cast<double>(xs.size());
  D /= n;
  V /= n;
  C /= n;
  const double J = 1.0 / (alpha * alpha) - l2 * l2 * t / ((1.0 - t) * (1.0 - t));
  CHECK_THAT(est.D_hat(0), WithinRel(D, 1e-5));
  CHECK_THAT(est.J_hat(0, 0), WithinRel(J, 1e-8));
  CHECK_THAT(est.V_hat(0, 0), WithinRel(V, 1e-8));
  CHECK_THAT(est.C_hat(0), WithinRel(C, 1e-6));
  const double sig2 = oracle::var_biased(sd) / (s * s) + D * D * V / (J * J) + 2.0 * D * C / J;
  CHECK_THAT(est.sigma2_theta0, WithinRel(sig2, 1e-5));
}

TEST_CASE("a frozen baseline leaves only the sampling variance") {
  const auto fs = sim_signal();
  const auto xs = pareto1(kSim, 3.9).sample(300, 4);
  const auto est = estimate_theta0(fs, frozen_family(pareto1(kSim, 3.9)), 0.01, kBump, xs);
  CHECK_THAT(est.sigma2_theta0, WithinRel(est.sigma2_theta / (est.s_norm * est.s_norm), 1e-12));
}

TEST_CASE("Z3 report") {
  Theta0Estimate e;
  e.theta0_hat = 0.0;
  e.sigma2_theta0 = 2.0;
  e.n = 50;
  const auto r = test_z3(e, 0.05);
  CHECK(r.p_value == 0.5);
  CHECK_THAT(r.std_error, WithinRel(std::sqrt(2.0 / 50.0), 1e-14));
  e.sigma2_theta0 = 0.0;
  CHECK_THROWS_AS(test_z3(e, 0.05), Error);
}

TEST_CASE("null self-consistency when the baseline is correct") {
  const auto fs = sim_signal();
  const auto truth = pareto1(kSim, 3.0);
  int inside = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    RandomStream rng(8, r);
    const auto xs = truth.sample(2000, rng);
    const auto est = estimate_theta0(fs, pareto(), 0.0, kBump, xs);
    inside += std::abs(est.theta0_hat) <= 3.0 * std::sqrt(est.sigma2_theta0 / 2000.0);
  }
  CHECK(inside >= 0.97 * reps);
}

TEST_CASE("theta0 is conservative when the compensator is negative") {
  const auto fs = sim_signal();
  const auto fb = truncated_gamma(kSim, 3.3, 0.5);
  const double lambda = 0.02, eta = 0.03;
  const auto g_star = bump_proposal(pareto(), vec1(3.92), lambda, kBump);
  REQUIRE(compensator_delta(score_geometry(fs, g_star), fb) < 0.0);
  const auto truth = make_mixture({{eta, fs}, {1.0 - eta, fb}});
  std::vector<double> th;
  for (int r = 0; r < 2000; ++r) {
    RandomStream rng(9, r);
    th.push_back(estimate_theta0(fs, pareto(), lambda, kBump, truth.sample(2000, rng)).theta0_hat);
  }
  const double mc_se = std::sqrt(oracle::var_biased(th) / th.size());
  CHECK(oracle::mean(th) < eta - 2.0 * mc_se);
}

TEST_CASE("sensitivity scan") {
  const auto fs = sim_signal();
  const auto xs = truncated_gamma(kSim, 3.3, 0.5).sample(1000, 3);
  const std::vector<double> grid = {1.0, 1.25, 1.5, 2.0};
  const std::vector<double> zero = {0.0};
  const auto s0 = sensitivity_scan(fs, pareto(), kBump, zero, xs, grid, 0.05);
  const auto q = pareto().density(s0.alpha_hat);
  REQUIRE(s0.curves.size() == 1);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK_THAT(s0.curves[0][i], WithinRel(q.pdf(grid[i]), 1e-12));

  const std::vector<double> lams = {0.0, 0.01, 0.02, 0.03};
  const auto s = sensitivity_scan(fs, pareto(), kBump, lams, xs, grid, 0.05);
  REQUIRE(s.reports.size() == 4);
  for (std::size_t k = 1; k < 4; ++k) CHECK(s.estimates[k].theta0_hat < s.estimates[k - 1].theta0_hat);

  const std::vector<double> bad_order = {0.02, 0.01}, too_big = {0.5};
  CHECK_THROWS_AS(sensitivity_scan(fs, pareto(), kBump, bad_order, xs, grid, 0.05), Error);
  try {
    sensitivity_scan(fs, pareto(), kBump, too_big, xs, grid, 0.05);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LambdaOutOfRange);
  }
}
