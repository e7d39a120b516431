#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "sigdet/compensator.hpp"
#include "sigdet/normal.hpp"

using namespace sigdet;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const SearchRegion kUnit(0.0, 1.0);
const SearchRegion kSim(1.0, 2.0);

DensityModel linear_up() { return normalize([](double x) { return x; }, kUnit); }
DensityModel linear_down() { return normalize([](double x) { return 1.0 - x; }, kUnit); }

DensityModel sim_signal() { return truncated_gaussian(kSim, 1.28, 0.02); }
DensityModel sim_background() { return truncated_gamma(kSim, 3.3, 0.5); }
DensityModel spurious(double eps) { return spurious_signal_proposal(sim_signal(), pareto1(kSim, 4.0), eps); }

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("closed-form score geometry") {
  const auto geom = score_geometry(linear_up(), uniform_density(kUnit));
  CHECK_THAT(geom.s_norm(), WithinAbs(1.0 / std::sqrt(3.0), 1e-10));
  CHECK_THAT(geom.score(0.8), WithinAbs(0.6, 1e-12));
  CHECK_THAT(geom.score_dagger(0.8), WithinAbs(0.6 * std::sqrt(3.0), 1e-10));
  CHECK_THAT(geom.score0(0.8), WithinAbs(1.8, 1e-9));
  CHECK(code_of([] { score_geometry(uniform_density(kUnit), uniform_density(kUnit)); }) ==
        ErrorCode::DegenerateSignal);
}

TEST_CASE("score norm of the spurious-signal proposal matches Simpson") {
  const auto fs = sim_signal();
  const auto g = spurious(0.0);
  const double ref = std::sqrt(oracle::simpson(
      [&](double x) {
        const double d = fs.pdf(x) - g.pdf(x);
        return d * d / g.pdf(x);
      },
      1.0, 2.0));
  CHECK_THAT(score_geometry(fs, g).s_norm(), WithinAbs(ref, 1e-6));
}

TEST_CASE("compensator values") {
  const auto geom = score_geometry(linear_up(), uniform_density(kUnit));
  CHECK_THAT(compensator_delta(geom, uniform_density(kUnit)), WithinAbs(0.0, 1e-8));
  // int sqrt(3)(2x - 1) 2(1 - x) dx = -1/sqrt(3)
  const double hand = -1.0 / std::sqrt(3.0);
  const double simpson = oracle::simpson(
      [](double x) { return std::sqrt(3.0) * (2 * x - 1) * 2 * (1 - x); }, 0.0, 1.0, 1000);
  CHECK_THAT(simpson, WithinAbs(hand, 1e-12));
  CHECK_THAT(compensator_delta(geom, linear_down()), WithinAbs(hand, 1e-8));

  const auto fs = sim_signal();
  const auto fb = sim_background();
  CHECK(compensator_delta(score_geometry(fs, spurious(0.01)), fb) < 0.0);
  CHECK(compensator_delta(score_geometry(fs, spurious(0.0)), fb) > 0.0);
}

TEST_CASE("orthogonality of the normalized score") {
  const auto fs = sim_signal();
  const std::vector<DensityModel> proposals = {uniform_density(kSim), pareto1(kSim, 2.0),
                                               pareto1(kSim, 3.92), spurious(0.0), spurious(0.01),
                                               make_bump_mixture(pareto1(kSim, 4.0), 0.03, 1.25,
                                                                 1.31, 0.08, kSim)};
  for (const auto& g : proposals) {
    const auto geom = score_geometry(fs, g);
    const auto tight = QuadratureSpec::tight();
    const double bp[] = {1.28};
    const double first =
        integrate([&](double x) { return geom.score_dagger(x) * g.pdf(x); }, 1.0, 2.0, tight, bp).value;
    const double second = integrate(
        [&](double x) { return geom.score_dagger(x) * geom.score_dagger(x) * g.pdf(x); }, 1.0, 2.0,
        tight, bp).value;
    CHECK(std::abs(first) <= 1e-8);
    CHECK(std::abs(second - 1.0) <= 1e-6);
  }
}

TEST_CASE("two-sample toy estimate and its Z1 test") {
  const auto geom = score_geometry(linear_up(), uniform_density(kUnit));
  const std::vector<double> xs = {0.5, 0.75, 1.0}, ys = {0.25, 0.5};
  const auto est = estimate_two_sample(geom, xs, ys);
  CHECK_THAT(est.theta_hat, WithinAbs(std::sqrt(3.0) / 2.0, 1e-9));
  CHECK_THAT(est.delta_hat, WithinAbs(-std::sqrt(3.0) / 4.0, 1e-9));
  CHECK_THAT(est.sigma2_theta, WithinAbs(0.5, 1e-9));
  CHECK_THAT(est.sigma2_delta, WithinAbs(0.1875, 1e-9));
  CHECK_THAT(est.eta_hat, WithinAbs(1.28572, 1e-5));
  // Estimator identity on its own fields.
  CHECK(est.eta_hat == (est.theta_hat - est.delta_hat) / (est.s_norm - est.delta_hat));

  // Hand arithmetic for the variance and statistic.
  const double s = 1.0 / std::sqrt(3.0), th = std::sqrt(3.0) / 2.0, de = -std::sqrt(3.0) / 4.0;
  const double d = s - de, pi = 3.0 / 5.0;
  const double var = (1 - pi) * 0.5 / (d * d) + pi * 0.1875 * (th - s) * (th - s) / (d * d * d * d);
  const double se = std::sqrt(var * 5.0 / 6.0);
  const auto r = test_z1(est);
  CHECK_THAT(r.std_error, WithinRel(se, 1e-9));
  CHECK_THAT(r.statistic, WithinAbs(3.111, 1e-3));
  CHECK_THAT(r.p_value, WithinRel(9.3e-4, 0.01));
  CHECK_THAT(r.p_value, WithinRel(1.0 - oracle::phi_cdf(r.statistic), 1e-9));
  const double z = 1.959963984540054;
  CHECK_THAT(r.ci_lo, WithinAbs(est.eta_hat - z * se, 1e-9));
  CHECK_THAT(r.ci_hi, WithinAbs(est.eta_hat + z * se, 1e-9));
  CHECK(r.estimate_clipped < 1.0);
}

TEST_CASE("identical samples give a zero estimate") {
  const auto geom = score_geometry(linear_up(), uniform_density(kUnit));
  const std::vector<double> xs = {0.1, 0.4, 0.8};
  const auto est = estimate_two_sample(geom, xs, xs);
  CHECK(est.eta_hat == 0.0);
  const auto r = test_z1(est);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 0.5);
}

TEST_CASE("sample errors") {
  const auto geom = score_geometry(linear_up(), uniform_density(kUnit));
  const std::vector<double> ok = {0.1, 0.2}, bad = {0.1, 1.5}, one = {0.3};
  CHECK(code_of([&] { estimate_two_sample(geom, ok, bad); }) == ErrorCode::ObservationOutsideRegion);
  CHECK(code_of([&] { estimate_two_sample(geom, one, ok); }) == ErrorCode::EmptySample);
  CHECK(code_of([&] { score_geometry(linear_up(), uniform_density(kSim)); }) == ErrorCode::SupportMismatch);
}

TEST_CASE("plug-in estimates converge at the root-n rate") {
  const auto fs = sim_signal();
  const auto fb = sim_background();
  const auto geom = score_geometry(fs, uniform_density(kSim));
  const double delta = compensator_delta(geom, fb);
  std::vector<double> rmse;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    double ss = 0.0;
    const int reps = 40;
    for (int r = 0; r < reps; ++r) {
      RandomStream rng(17, n + r);
      const auto ys = fb.sample(n, rng);
      const double d = mean_var(score_dagger_values(geom, ys)).mean;
      ss += (d - delta) * (d - delta);
    }
    rmse.push_back(std::sqrt(ss / reps));
  }
  for (std::size_t k = 1; k < rmse.size(); ++k) {
    const double ratio = rmse[k - 1] / rmse[k];
    CHECK(ratio > std::sqrt(10.0) / 2.0);
    CHECK(ratio < std::sqrt(10.0) * 2.0);
  }
}

TEST_CASE("standardized estimate is close to normal under the null") {
  const auto fs = sim_signal();
  const auto fb = sim_background();
  const auto geom = score_geometry(fs, uniform_density(kSim));
  std::vector<double> z;
  double var_sum = 0.0;
  std::vector<double> etas;
  for (int r = 0; r < 2000; ++r) {
    RandomStream rng(3, r);
    const auto xs = fb.sample(5000, rng);
    const auto ys = fb.sample(5000, rng);
    const auto est = estimate_two_sample(geom, xs, ys);
    z.push_back(test_z1(est).statistic);
    etas.push_back(est.eta_hat);
    var_sum += est.sigma2_eta / est.effective_size();
  }
  CHECK(oracle::ks_distance(z, oracle::phi_cdf) < 1.63 / std::sqrt(2000.0));
  const double emp = oracle::var_biased(etas) * 2000.0 / 1999.0;
  CHECK_THAT(emp, WithinRel(var_sum / 2000.0, 0.10));
}
