#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigdet/density.hpp"
#include "sigdet/parametric.hpp"

namespace sigdet::cli {

enum class Transform { identity, log };

Transform transform_from_string(const std::string& name);

/// One value per line; blank lines and lines starting with '#' are skipped.
/// With a region, values outside it abort with ValueOutsideRegion.
std::vector<double> read_events(const std::filesystem::path& path, Transform transform,
                                const std::optional<SearchRegion>& region = std::nullopt);

enum class Mode { with_background, no_background, lrt, simulate, sensitivity };

struct AnalysisConfig {
  nlohmann::json raw;  // the parsed file, echoed into reports
  SearchRegion region;
  Transform transform = Transform::identity;
  Mode mode = Mode::with_background;
  double level = 0.05;
  std::uint64_t seed = 0;
};

/// Parses and validates the top-level fields; mode blocks are checked when run.
AnalysisConfig parse_config(const nlohmann::json& doc);
AnalysisConfig load_config(const std::filesystem::path& path);

/// Density declaration: {"family": name, "params": {...}}, or the composite
/// forms "mixture", "spurious_signal" and "bump_mixture" (see README).
DensityModel build_density(const nlohmann::json& decl, const SearchRegion& region,
                           const DensityModel* signal = nullptr);

/// Parametric declaration: {"family": name, "free": {param: {lo, hi, initial}},
/// "params": {fixed extras}, "grad_mode": "analytic" | "central_fd"}.
ParametricProposal build_family(const nlohmann::json& decl, const SearchRegion& region);

bool is_parametric(const nlohmann::json& decl);

struct Options {
  std::filesystem::path config;
  std::optional<std::filesystem::path> physics;
  std::optional<std::filesystem::path> background;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::filesystem::path out = ".";
};

/// Executes the configured analysis and writes every output under opts.out.
/// Throws sigdet::Error on failure.
void run(const Options& opts);

/// Command-line entry point: parses flags, calls run, maps errors to exit codes.
int main(int argc, char** argv);

/// Exit code reported for an error code.
int exit_code_for(ErrorCode code);

/// Four significant digits in scientific notation, as printed in reports.
std::string format_p_value(double p);

}  // namespace sigdet::cli
