#include "sigdet/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "sigdet/lrt.hpp"
#include "sigdet/rng.hpp"

namespace sigdet {

namespace {

constexpr double kQuantileProbs[] = {0.5, 0.9, 0.95, 0.99};

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

Method McScenario::method() const {
  return std::visit(overloaded{[](const Z1Config&) { return Method::Z1; },
                               [](const Z2Config&) { return Method::Z2; },
                               [](const Z3Config&) { return Method::Z3; },
                               [](const LrtConfig&) { return Method::LRT; }},
                    config);
}

void McScenario::validate() const {
  if (replicates < 1) fail(ErrorCode::InvalidArgument, label + ": replicates must be >= 1");
  if (!(eta >= 0.0 && eta < 1.0)) fail(ErrorCode::InvalidArgument, label + ": eta must lie in [0, 1)");
  if (n < 2) fail(ErrorCode::InvalidArgument, label + ": n must be >= 2");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorCode::InvalidArgument, label + ": level must lie in (0, 1)");
  const auto meth = method();
  if ((meth == Method::Z1 || meth == Method::Z2) && (!m || *m < 2)) {
    fail(ErrorCode::InvalidArgument, label + ": Z1 and Z2 need a background-only sample size m >= 2");
  }
  if (!same_support(signal.region(), background.region())) {
    fail(ErrorCode::SupportMismatch, label + ": signal and background regions differ");
  }
}

ReplicateData draw_replicate(const McScenario& sc, std::size_t index, bool with_background) {
  RandomStream rng(sc.seed, index);
  ReplicateData d;
  d.physics.resize(sc.n);
  for (double& x : d.physics) {
    const bool from_signal = sc.eta > 0.0 && rng.uniform() < sc.eta;
    x = from_signal ? sc.signal.draw(rng) : sc.background.draw(rng);
  }
  // Physics comes first from the stream, so it does not depend on whether a
  // background-only sample follows.
  if (sc.m && (with_background || sc.method() == Method::Z1 || sc.method() == Method::Z2)) {
    d.background.resize(*sc.m);
    sc.background.sample_into(d.background, rng);
  }
  return d;
}

ReplicateOutcome analyze_replicate(const McScenario& sc, const ReplicateData& data) {
  ReplicateOutcome out;
  try {
    std::visit(
        overloaded{
            [&](const Z1Config& c) {
              const auto geom = score_geometry(sc.signal, c.proposal);
              const auto est = estimate_two_sample(geom, data.physics, data.background);
              const auto r = test_z1(est, sc.level);
              out.estimate = r.estimate;
              out.plugin_variance = r.std_error * r.std_error;
              out.statistic = r.statistic;
              out.reject = r.p_value < sc.level;
            },
            [&](const Z2Config& c) {
              const auto a = analyze_z2(sc.signal, c.family, data.physics, data.background, sc.level);
              out.estimate = a.report.estimate;
              out.plugin_variance = a.report.std_error * a.report.std_error;
              out.statistic = a.report.statistic;
              out.reject = a.report.p_value < sc.level;
            },
            [&](const Z3Config& c) {
              const auto est = estimate_theta0(sc.signal, c.q_family, c.lambda, c.bump, data.physics);
              const auto r = test_z3(est, sc.level);
              out.estimate = r.estimate;
              out.plugin_variance = r.std_error * r.std_error;
              out.statistic = r.statistic;
              out.reject = r.p_value < sc.level;
            },
            [&](const LrtConfig& c) {
              const auto fit = fit_lrt(sc.signal, c.g_tilde, data.physics);
              out.estimate = fit.eta_tilde_hat;
              out.statistic = fit.lrt_stat;
              out.reject = fit.lrt_stat > chi2bar01_quantile(1.0 - sc.level);
            }},
        sc.config);
    out.ok = std::isfinite(out.estimate) && std::isfinite(out.statistic);
    if (!out.ok) out.error = ErrorCode::NonFiniteLogLik;
  } catch (const Error& e) {
    out.ok = false;
    out.error = e.code();
  }
  return out;
}

ReplicateOutcome run_replicate(const McScenario& sc, std::size_t index) {
  return analyze_replicate(sc, draw_replicate(sc, index));
}

double sample_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) return std::nan("");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

McSummary summarize(const McScenario& sc, std::span<const ReplicateOutcome> outcomes) {
  McSummary s;
  s.label = sc.label;
  s.replicates = outcomes.size();
  std::vector<double> stats;
  double rejections = 0.0, sum = 0.0, sum_var = 0.0;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++s.failures;
      ++s.failure_codes[std::string(to_string(o.error))];
      continue;
    }
    ++s.successes;
    rejections += o.reject ? 1.0 : 0.0;
    sum += o.estimate;
    sum_var += o.plugin_variance;
    stats.push_back(o.statistic);
  }
  if (2 * s.failures > s.replicates) {
    fail(ErrorCode::CampaignDegenerate,
         sc.label + ": " + std::to_string(s.failures) + " of " + std::to_string(s.replicates) +
             " replicates failed");
  }
  const double k = static_cast<double>(s.successes);
  s.rejection_rate = rejections / k;
  s.mc_se = std::sqrt(s.rejection_rate * (1.0 - s.rejection_rate) / k);
  s.mean_estimate = sum / k;
  s.mean_plugin_variance = sum_var / k;
  double ss = 0.0;
  for (const auto& o : outcomes) {
    if (o.ok) ss += (o.estimate - s.mean_estimate) * (o.estimate - s.mean_estimate);
  }
  s.var_estimate = s.successes > 1 ? ss / (k - 1.0) : 0.0;
  if (sc.keep_statistics) s.statistics = stats;
  std::sort(stats.begin(), stats.end());
  for (double p : kQuantileProbs) s.statistic_quantiles[p] = sample_quantile(stats, p);
  return s;
}

McSummary run_campaign(const McScenario& sc, std::size_t workers) {
  sc.validate();
  workers = std::clamp<std::size_t>(workers, 1, sc.replicates);
  std::vector<ReplicateOutcome> outcomes(sc.replicates);
  auto work = [&](std::size_t w) {
    for (std::size_t r = w; r < sc.replicates; r += workers) outcomes[r] = run_replicate(sc, r);
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  return summarize(sc, outcomes);
}

std::vector<McSummary> run_campaign_shared(const McScenario& base,
                                           std::span<const LabeledConfig> configs,
                                           std::size_t workers) {
  std::vector<McScenario> scenarios;
  for (const auto& c : configs) {
    McScenario sc = base;
    sc.label = c.label;
    sc.config = c.config;
    sc.validate();
    scenarios.push_back(std::move(sc));
  }
  if (scenarios.empty()) return {};
  const std::size_t reps = base.replicates;
  workers = std::clamp<std::size_t>(workers, 1, reps);
  std::vector<std::vector<ReplicateOutcome>> outcomes(scenarios.size(),
                                                      std::vector<ReplicateOutcome>(reps));
  auto work = [&](std::size_t w) {
    for (std::size_t r = w; r < reps; r += workers) {
      const auto data = draw_replicate(base, r, true);
      for (std::size_t k = 0; k < scenarios.size(); ++k) {
        outcomes[k][r] = analyze_replicate(scenarios[k], data);
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  std::vector<McSummary> out;
  for (std::size_t k = 0; k < scenarios.size(); ++k) out.push_back(summarize(scenarios[k], outcomes[k]));
  return out;
}

std::vector<McSummary> run_grid(std::span<const McScenario> scenarios, std::size_t workers) {
  std::vector<McSummary> out;
  out.reserve(scenarios.size());
  for (const auto& sc : scenarios) out.push_back(run_campaign(sc, workers));
  return out;
}

}  // namespace sigdet
