#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sigdet/quadrature.hpp"
#include "sigdet/rng.hpp"

namespace sigdet {

/// Compact search interval [lo, hi] over which all observations lie.
struct SearchRegion {
  double lo = 0.0;
  double hi = 1.0;

  SearchRegion() = default;
  SearchRegion(double lo_, double hi_);

  double width() const { return hi - lo; }
  bool contains(double x, double tol = 0.0) const { return x >= lo - tol && x <= hi + tol; }
  bool operator==(const SearchRegion&) const = default;
};

/// Tolerance used to decide whether two regions describe the same support.
bool same_support(const SearchRegion& a, const SearchRegion& b);

enum class FamilyTag {
  uniform,
  truncated_gamma,
  pareto1,
  truncated_gaussian,
  power_law_shifted,
  exponential_logscale,
  gaussian_signal_logscale,
  gaussian_tail,
  mixture,
  bump_mixture,
  custom,
};

std::string_view to_string(FamilyTag tag);
FamilyTag family_from_string(std::string_view name);

using Kernel = std::function<double(double)>;

struct MixtureComponent;

namespace detail {
struct DensityImpl;
}

/// Normalized density on a SearchRegion. Immutable and cheap to copy; the
/// CDF table used by `cdf`, `quantile` and `sample` is built on first use.
class DensityModel {
 public:
  double pdf(double x) const;
  double operator()(double x) const { return pdf(x); }
  double log_pdf(double x) const;

  /// Clamps to 0 below the region and 1 above it.
  double cdf(double x) const;
  double quantile(double p) const;

  double draw(RandomStream& rng) const;
  void sample_into(std::span<double> out, RandomStream& rng) const;
  std::vector<double> sample(std::size_t n, RandomStream& rng) const;
  std::vector<double> sample(std::size_t n, std::uint64_t seed) const;

  std::vector<double> tabulate(std::span<const double> xs) const;

  const SearchRegion& region() const;
  FamilyTag family() const;
  /// Integral of the raw kernel over the region.
  double normalizer() const;
  /// Locations of narrow features (modes) used as quadrature breakpoints.
  std::span<const double> features() const;
  /// Non-empty only for mixture and bump_mixture families.
  const std::vector<MixtureComponent>& components() const;

 private:
  friend DensityModel normalize(Kernel, const SearchRegion&, const QuadratureSpec&, FamilyTag,
                                std::vector<double>);
  friend DensityModel make_mixture(std::vector<MixtureComponent>, FamilyTag);

  explicit DensityModel(std::shared_ptr<const detail::DensityImpl> impl)
      : impl_(std::move(impl)) {}

  std::shared_ptr<const detail::DensityImpl> impl_;
};

struct MixtureComponent {
  double weight;
  DensityModel density;
};

/// Builds a density from a non-negative kernel by quadrature normalization.
DensityModel normalize(Kernel kernel, const SearchRegion& region,
                       const QuadratureSpec& quad = {}, FamilyTag tag = FamilyTag::custom,
                       std::vector<double> features = {});

/// Convex combination of already-normalized densities on a common region.
DensityModel make_mixture(std::vector<MixtureComponent> components,
                          FamilyTag tag = FamilyTag::mixture);

// Catalog ------------------------------------------------------------------

DensityModel uniform_density(const SearchRegion& region);
/// exp(-rate x) x^(shape - 1)
DensityModel truncated_gamma(const SearchRegion& region, double rate, double shape,
                             const QuadratureSpec& quad = {});
/// x^-(beta + 1); requires region.lo > 0.
DensityModel pareto1(const SearchRegion& region, double beta, const QuadratureSpec& quad = {});
/// Gaussian renormalized by its own mass on the region.
DensityModel truncated_gaussian(const SearchRegion& region, double mu, double sigma,
                                const QuadratureSpec& quad = {});
/// (x + shift)^-(alpha + 1)
DensityModel power_law_shifted(const SearchRegion& region, double alpha, double shift = 1.0,
                               const QuadratureSpec& quad = {});
/// exp(-psi x): a power law in energy seen on the log scale.
DensityModel exponential_logscale(const SearchRegion& region, double psi,
                                  const QuadratureSpec& quad = {});
/// Gaussian in energy (mean kappa, sd rel_width * kappa) seen on the log scale.
DensityModel gaussian_signal_logscale(const SearchRegion& region, double kappa,
                                      double rel_width = 0.1, const QuadratureSpec& quad = {});
/// exp(-(x - center)^2 / (4 beta))
DensityModel gaussian_tail(const SearchRegion& region, double beta, double center = -1.0,
                           const QuadratureSpec& quad = {});

/// (1 - 2 lambda) q + lambda [phi(mu1, sigma0) + phi(mu2, sigma0)], each phi a
/// Gaussian truncated to the region. Requires 0 <= lambda < 1/2.
DensityModel make_bump_mixture(const DensityModel& q_alpha, double lambda, double mu1,
                               double mu2, double sigma0, const SearchRegion& region,
                               const QuadratureSpec& quad = {});

/// eps * f_s + (1 - eps) * q: a background model with an injected spurious signal.
DensityModel spurious_signal_proposal(const DensityModel& signal, const DensityModel& q,
                                      double eps);

}  // namespace sigdet
