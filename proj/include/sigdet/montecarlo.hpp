#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sigdet/compensator.hpp"
#include "sigdet/error.hpp"
#include "sigdet/nobkg.hpp"
#include "sigdet/parametric.hpp"

namespace sigdet {

/// Fixed proposal, background-only sample required.
struct Z1Config {
  DensityModel proposal;
};
/// Proposal family fitted on the background-only sample.
struct Z2Config {
  ParametricProposal family;
};
/// Bump proposal on q_alpha, alpha fitted on the physics sample.
struct Z3Config {
  ParametricProposal q_family;
  BumpParams bump;
  double lambda = 0.0;
};
/// LRT against chi-bar-square(0,1) with a fixed background model.
struct LrtConfig {
  DensityModel g_tilde;
};

using MethodConfig = std::variant<Z1Config, Z2Config, Z3Config, LrtConfig>;

struct McScenario {
  std::string label;
  DensityModel signal;
  DensityModel background;
  double eta = 0.0;
  std::size_t n = 0;
  std::optional<std::size_t> m;
  MethodConfig config;
  std::size_t replicates = 10000;
  double level = 0.05;
  std::uint64_t seed = 0;
  bool keep_statistics = false;

  Method method() const;
  void validate() const;
};

/// Physics sample of size n from eta f_s + (1 - eta) f_b followed by the
/// background-only sample, both from the stream of replicate `index`.
struct ReplicateData {
  std::vector<double> physics;
  std::vector<double> background;
};
ReplicateData draw_replicate(const McScenario& scenario, std::size_t index,
                             bool with_background = false);

struct ReplicateOutcome {
  bool ok = false;
  ErrorCode error = ErrorCode::InvalidArgument;
  double estimate = 0.0;
  double plugin_variance = 0.0;  // squared standard error; 0 for LRT
  double statistic = 0.0;
  bool reject = false;
};

/// Runs the configured method on one replicate. Errors are captured.
ReplicateOutcome run_replicate(const McScenario& scenario, std::size_t index);
ReplicateOutcome analyze_replicate(const McScenario& scenario, const ReplicateData& data);

struct McSummary {
  std::string label;
  std::size_t replicates = 0;
  std::size_t successes = 0;
  std::size_t failures = 0;
  double rejection_rate = 0.0;
  double mc_se = 0.0;
  double mean_estimate = 0.0;
  double var_estimate = 0.0;
  double mean_plugin_variance = 0.0;
  std::map<double, double> statistic_quantiles;
  std::map<std::string, std::size_t> failure_codes;
  /// Per successful replicate, in replicate order, when requested.
  std::vector<double> statistics;
};

/// Replicates run on `workers` threads; the summary does not depend on the
/// number of workers. Throws CampaignDegenerate when more than half fail.
McSummary run_campaign(const McScenario& scenario, std::size_t workers = 1);

/// Several methods applied to the same replicate data: every entry of the
/// result equals run_campaign on `base` with that config and label, but each
/// replicate's samples are drawn once.
struct LabeledConfig {
  std::string label;
  MethodConfig config;
};
std::vector<McSummary> run_campaign_shared(const McScenario& base,
                                           std::span<const LabeledConfig> configs,
                                           std::size_t workers = 1);

std::vector<McSummary> run_grid(std::span<const McScenario> scenarios, std::size_t workers = 1);

/// Builds the summary from per-replicate outcomes in replicate order.
McSummary summarize(const McScenario& scenario, std::span<const ReplicateOutcome> outcomes);

/// Type-7 sample quantile of sorted data.
double sample_quantile(std::span<const double> sorted, double p);

}  // namespace sigdet
