#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "sigdet/density.hpp"

using namespace sigdet;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const SearchRegion kUnit(0.0, 1.0);
const SearchRegion kSim(1.0, 2.0);
const SearchRegion kFermi(0.0, std::log(35.0));

std::vector<DensityModel> catalog() {
  const auto fs = truncated_gaussian(kSim, 1.28, 0.02);
  const auto q = pareto1(kSim, 4.0);
  return {uniform_density(kUnit),
          truncated_gamma(kSim, 3.3, 0.5),
          q,
          fs,
          power_law_shifted(kFermi, 1.59),
          exponential_logscale(kFermi, 1.4),
          gaussian_signal_logscale(kFermi, 3.5),
          gaussian_tail(kFermi, 0.8),
          spurious_signal_proposal(fs, q, 0.01),
          make_bump_mixture(q, 0.03, 1.25, 1.31, 0.08, kSim),
          make_bump_mixture(power_law_shifted(kFermi, 1.59), 0.03, 1.07, 1.44, 0.31, kFermi)};
}

}  // namespace

TEST_CASE("constant kernel normalizes to the uniform density") {
  const auto d = normalize([](double) { return 1.0; }, kUnit);
  CHECK_THAT(d.normalizer(), WithinAbs(1.0, 1e-14));
  CHECK_THAT(d.pdf(0.3), WithinAbs(1.0, 1e-14));
  CHECK(d.pdf(1.5) == 0.0);
}

TEST_CASE("truncated gamma normalizer matches the Simpson oracle") {
  auto k = [](double x) { return std::exp(-3.3 * x) / std::sqrt(x); };
  const double ref = oracle::simpson(k, 1.0, 2.0);
  CHECK_THAT(normalize(k, kSim).normalizer(), WithinAbs(ref, 1e-10));
}

TEST_CASE("power-law normalizer has the closed form") {
  const auto d = normalize([](double x) { return std::pow(x, -5.0); }, kSim);
  CHECK_THAT(d.normalizer(), WithinAbs(0.234375, 1e-12));
  CHECK_THAT(d.pdf(1.0), WithinRel(1.0 / 0.234375, 1e-12));
  CHECK_THAT(pareto1(kSim, 4.0).pdf(1.0), WithinRel(1.0 / 0.234375, 1e-12));
}

TEST_CASE("cdf values") {
  CHECK_THAT(uniform_density(kUnit).cdf(0.25), WithinAbs(0.25, 1e-14));
  const auto fb = truncated_gamma(kSim, 3.3, 0.5);
  auto k = [](double x) { return std::exp(-3.3 * x) / std::sqrt(x); };
  const double ref = oracle::simpson(k, 1.0, 1.5) / oracle::simpson(k, 1.0, 2.0);
  CHECK_THAT(fb.cdf(1.5), WithinAbs(ref, 1e-8));
  for (const auto& d : catalog()) {
    CHECK_THAT(d.cdf(d.region().hi), WithinAbs(1.0, 1e-10));
    CHECK(d.cdf(d.region().lo) == 0.0);
  }
}

TEST_CASE("every catalog density integrates to one and is non-negative") {
  for (const auto& d : catalog()) {
    const auto& r = d.region();
    const double mass = oracle::simpson([&](double x) { return d.pdf(x); }, r.lo, r.hi, 200000);
    CHECK_THAT(mass, WithinAbs(1.0, 1e-8));
    for (int i = 0; i < 10000; ++i) REQUIRE(d.pdf(r.lo + r.width() * i / 9999.0) >= 0.0);
  }
}

TEST_CASE("cdf of quantile is the identity") {
  for (const auto& d : catalog()) {
    for (int k = 1; k <= 99; ++k) {
      const double p = k / 100.0;
      REQUIRE_THAT(d.cdf(d.quantile(p)), WithinAbs(p, 1e-8));
    }
  }
}

TEST_CASE("sampling") {
  const auto u = uniform_density(kUnit);
  CHECK(u.sample(0, 1).empty());
  const auto xs = u.sample(100000, 99);
  CHECK(oracle::ks_distance(xs, [](double x) { return x; }) < 1.63 / std::sqrt(1e5));
  CHECK(xs == u.sample(100000, 99));

  const auto fb = truncated_gamma(kSim, 3.3, 0.5);
  const auto ys = fb.sample(20000, 5);
  CHECK(oracle::ks_distance(ys, [&](double x) { return fb.cdf(x); }) < 1.63 / std::sqrt(2e4));

  const auto bump = make_bump_mixture(pareto1(kSim, 4.0), 0.2, 1.25, 1.31, 0.08, kSim);
  const auto zs = bump.sample(20000, 6);
  CHECK(oracle::ks_distance(zs, [&](double x) { return bump.cdf(x); }) < 1.63 / std::sqrt(2e4));
}

TEST_CASE("bump mixture") {
  const auto q = pareto1(kSim, 4.0);
  const auto zero = make_bump_mixture(q, 0.0, 1.25, 1.31, 0.08, kSim);
  for (int i = 0; i <= 100; ++i) {
    const double x = 1.0 + i / 100.0;
    REQUIRE_THAT(zero.pdf(x), WithinRel(q.pdf(x), 1e-14));
  }
  const auto sim = make_bump_mixture(q, 0.03, 1.25, 1.31, 0.08, kSim);
  CHECK_THAT(oracle::simpson([&](double x) { return sim.pdf(x); }, 1.0, 2.0, 100000),
             WithinAbs(1.0, 1e-10));
  const auto fermi = make_bump_mixture(power_law_shifted(kFermi, 1.59), 0.03, 1.07, 1.44, 0.31, kFermi);
  CHECK_THAT(oracle::simpson([&](double x) { return fermi.pdf(x); }, kFermi.lo, kFermi.hi, 100000),
             WithinAbs(1.0, 1e-10));

  // Mass one across the lambda range and density continuous in lambda.
  for (int k = 0; k <= 49; ++k) {
    const double lambda = k / 100.0;
    const auto b = make_bump_mixture(q, lambda, 1.25, 1.31, 0.08, kSim);
    REQUIRE_THAT(oracle::simpson([&](double x) { return b.pdf(x); }, 1.0, 2.0, 20000),
                 WithinAbs(1.0, 1e-9));
    const auto b2 = make_bump_mixture(q, lambda + 1e-6, 1.25, 1.31, 0.08, kSim);
    for (double x : {1.0, 1.25, 1.3, 1.7, 2.0}) REQUIRE(std::abs(b2.pdf(x) - b.pdf(x)) < 1e-5);
  }
}

TEST_CASE("error paths") {
  auto code_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  const auto q = pareto1(kSim, 4.0);
  CHECK(code_of([&] { make_bump_mixture(q, 0.5, 1.25, 1.31, 0.08, kSim); }) ==
        ErrorCode::LambdaOutOfRange);
  CHECK(code_of([&] { make_bump_mixture(q, 0.1, 2.5, 1.31, 0.08, kSim); }) ==
        ErrorCode::BumpCenterOutsideRegion);
  CHECK(code_of([&] { normalize([](double) { return 0.0; }, kUnit); }) == ErrorCode::ZeroMass);
  CHECK(code_of([&] { normalize([](double) { return NAN; }, kUnit); }) == ErrorCode::NonFiniteKernel);
  CHECK(code_of([&] { make_mixture({{0.5, q}, {0.5, uniform_density(kUnit)}}); }) ==
        ErrorCode::SupportMismatch);
  CHECK_THROWS_AS(SearchRegion(2.0, 1.0), Error);
}

TEST_CASE("family tags round-trip through their names") {
  for (const auto& d : catalog()) CHECK(family_from_string(to_string(d.family())) == d.family());
}
