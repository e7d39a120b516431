#include "sigdet/density.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "sigdet/error.hpp"

namespace sigdet {

namespace {

constexpr int kCdfPanels = 1024;
constexpr int kScaleGrid = 129;
constexpr double kMinMass = 1e-300;
constexpr double kQuantileTol = 1e-12;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

SearchRegion::SearchRegion(double lo_, double hi_) : lo(lo_), hi(hi_) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    fail(ErrorCode::InvalidArgument,
         "search region requires finite lo < hi, got [" + fmt(lo) + ", " + fmt(hi) + "]");
  }
}

bool same_support(const SearchRegion& a, const SearchRegion& b) {
  const double tol = 1e-12 * std::max({1.0, std::abs(a.lo), std::abs(a.hi)});
  return std::abs(a.lo - b.lo) <= tol && std::abs(a.hi - b.hi) <= tol;
}

std::string_view to_string(FamilyTag tag) {
  switch (tag) {
    case FamilyTag::uniform: return "uniform";
    case FamilyTag::truncated_gamma: return "truncated_gamma";
    case FamilyTag::pareto1: return "pareto1";
    case FamilyTag::truncated_gaussian: return "truncated_gaussian";
    case FamilyTag::power_law_shifted: return "power_law_shifted";
    case FamilyTag::exponential_logscale: return "exponential_logscale";
    case FamilyTag::gaussian_signal_logscale: return "gaussian_signal_logscale";
    case FamilyTag::gaussian_tail: return "gaussian_tail";
    case FamilyTag::mixture: return "mixture";
    case FamilyTag::bump_mixture: return "bump_mixture";
    case FamilyTag::custom: return "custom";
  }
  return "custom";
}

FamilyTag family_from_string(std::string_view name) {
  for (auto tag : {FamilyTag::uniform, FamilyTag::truncated_gamma, FamilyTag::pareto1,
                   FamilyTag::truncated_gaussian, FamilyTag::power_law_shifted,
                   FamilyTag::exponential_logscale, FamilyTag::gaussian_signal_logscale,
                   FamilyTag::gaussian_tail, FamilyTag::mixture, FamilyTag::bump_mixture}) {
    if (to_string(tag) == name) return tag;
  }
  fail(ErrorCode::ConfigError, "unknown density family '" + std::string(name) + "'");
}

namespace detail {

struct CdfTable {
  std::vector<double> cuts;        // panel edges, size K + 1
  std::vector<double> cumulative;  // kernel mass left of each edge, size K + 1
  std::vector<double> density;     // normalized kernel at each edge, size K + 1
};

// 3-point Gauss-Legendre on [a, b] (signed); used for the short steps of the
// quantile Newton iteration.
template <class F>
double gauss_legendre3(const F& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double d = h * 0.7745966692414834;
  return h * (5.0 / 9.0 * (f(c - d) + f(c + d)) + 8.0 / 9.0 * f(c));
}

struct DensityImpl {
  SearchRegion region;
  FamilyTag tag = FamilyTag::custom;
  Kernel kernel;
  double normalizer = 1.0;
  double inv_normalizer = 1.0;
  std::vector<double> features;
  std::vector<MixtureComponent> components;
  std::vector<double> cumulative_weights;

  mutable std::once_flag table_once;
  mutable CdfTable table;

  const CdfTable& cdf_table() const {
    std::call_once(table_once, [this] { build_table(); });
    return table;
  }

  void build_table() const {
    std::vector<double> cuts;
    cuts.reserve(kCdfPanels + features.size() + 1);
    for (int i = 0; i <= kCdfPanels; ++i) {
      cuts.push_back(region.lo + region.width() * i / kCdfPanels);
    }
    for (double f : features) {
      if (f > region.lo && f < region.hi) cuts.push_back(f);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    cuts.back() = region.hi;

    std::vector<double> cum(cuts.size(), 0.0);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      cum[k + 1] = cum[k] + gauss_legendre10(kernel, cuts[k], cuts[k + 1]) * inv_normalizer;
    }
    table.density.resize(cuts.size());
    for (std::size_t k = 0; k < cuts.size(); ++k) table.density[k] = kernel(cuts[k]) * inv_normalizer;
    table.cuts = std::move(cuts);
    table.cumulative = std::move(cum);
  }

  std::size_t panel_of(double x) const {
    const auto& cuts = table.cuts;
    auto it = std::upper_bound(cuts.begin(), cuts.end(), x);
    std::size_t k = static_cast<std::size_t>(std::distance(cuts.begin(), it));
    k = k == 0 ? 0 : k - 1;
    return std::min(k, cuts.size() - 2);
  }

  // Unnormalized-by-total CDF: mass left of x measured against the table total.
  double raw_cdf(double x, std::size_t k) const {
    return table.cumulative[k] + gauss_legendre10(kernel, table.cuts[k], x) * inv_normalizer;
  }

  double quantile(double p) const {
    const auto& t = cdf_table();
    if (p <= 0.0) return region.lo;
    if (p >= 1.0) return region.hi;
    const double total = t.cumulative.back();
    const double target = p * total;
    auto it = std::upper_bound(t.cumulative.begin(), t.cumulative.end(), target);
    std::size_t k = static_cast<std::size_t>(std::distance(t.cumulative.begin(), it));
    k = std::clamp<std::size_t>(k == 0 ? 0 : k - 1, 0, t.cuts.size() - 2);

    double a = t.cuts[k], b = t.cuts[k + 1];
    const double width = b - a;
    const double ca = t.cumulative[k], cb = t.cumulative[k + 1];
    // Start from the root of the CDF obtained by integrating the linear
    // interpolant of the density across the panel.
    const double r = target - ca, fa = t.density[k];
    const double slope_ab = (t.density[k + 1] - fa) / width;
    const double disc = fa * fa + 2.0 * slope_ab * r;
    double x;
    if (disc >= 0.0 && fa + std::sqrt(disc) > 0.0) {
      x = a + 2.0 * r / (fa + std::sqrt(disc));
    } else {
      x = cb > ca ? a + (target - ca) / (cb - ca) * width : 0.5 * (a + b);
    }
    if (!(x > a && x < b)) x = 0.5 * (a + b);

    auto pdf_at = [this](double y) { return kernel(y) * inv_normalizer; };
    double cum_x = raw_cdf(x, k);
    const double tol = kQuantileTol * total;
    for (int iter = 0; iter < 100; ++iter) {
      const double residual = cum_x - target;
      if (std::abs(residual) <= tol) return x;
      if (residual > 0.0) b = x; else a = x;
      if (b - a <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
        return x;
      }
      const double slope = pdf_at(x);
      double next = slope > 0.0 ? x - residual / slope : 0.5 * (a + b);
      if (!(next > a && next < b)) next = 0.5 * (a + b);
      // Short moves update the CDF incrementally; long ones recompute it.
      cum_x = std::abs(next - x) <= 0.05 * width ? cum_x + gauss_legendre3(pdf_at, x, next)
                                                 : raw_cdf(next, k);
      x = next;
    }
    fail(ErrorCode::RootFindFailure, "quantile inversion did not converge at p=" + fmt(p));
  }
};

}  // namespace detail

double DensityModel::pdf(double x) const {
  const auto& d = *impl_;
  if (x < d.region.lo || x > d.region.hi) return 0.0;
  return d.kernel(x) * d.inv_normalizer;
}

double DensityModel::log_pdf(double x) const { return std::log(pdf(x)); }

double DensityModel::cdf(double x) const {
  const auto& d = *impl_;
  if (x <= d.region.lo) return 0.0;
  if (x >= d.region.hi) return 1.0;
  const auto& t = d.cdf_table();
  return std::clamp(d.raw_cdf(x, d.panel_of(x)) / t.cumulative.back(), 0.0, 1.0);
}

double DensityModel::quantile(double p) const {
  if (std::isnan(p)) fail(ErrorCode::InvalidArgument, "quantile of NaN probability");
  return impl_->quantile(p);
}

double DensityModel::draw(RandomStream& rng) const {
  const auto& d = *impl_;
  if (!d.components.empty()) {
    const double u = rng.uniform();
    auto it = std::upper_bound(d.cumulative_weights.begin(), d.cumulative_weights.end(), u);
    std::size_t k = static_cast<std::size_t>(std::distance(d.cumulative_weights.begin(), it));
    k = std::min(k, d.components.size() - 1);
    // Zero-weight components sit on ties of the cumulative table; skip them.
    while (d.components[k].weight <= 0.0 && k + 1 < d.components.size()) ++k;
    return d.components[k].density.draw(rng);
  }
  return d.quantile(rng.uniform());
}

void DensityModel::sample_into(std::span<double> out, RandomStream& rng) const {
  for (double& v : out) v = draw(rng);
}

std::vector<double> DensityModel::sample(std::size_t n, RandomStream& rng) const {
  std::vector<double> out(n);
  sample_into(out, rng);
  return out;
}

std::vector<double> DensityModel::sample(std::size_t n, std::uint64_t seed) const {
  RandomStream rng(seed);
  return sample(n, rng);
}

std::vector<double> DensityModel::tabulate(std::span<const double> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (double x : xs) out.push_back(pdf(x));
  return out;
}

const SearchRegion& DensityModel::region() const { return impl_->region; }
FamilyTag DensityModel::family() const { return impl_->tag; }
double DensityModel::normalizer() const { return impl_->normalizer; }
std::span<const double> DensityModel::features() const { return impl_->features; }
const std::vector<MixtureComponent>& DensityModel::components() const {
  return impl_->components;
}

DensityModel normalize(Kernel kernel, const SearchRegion& region, const QuadratureSpec& quad,
                       FamilyTag tag, std::vector<double> features) {
  if (!kernel) fail(ErrorCode::InvalidArgument, "empty kernel");
  double scale = 0.0;
  for (int i = 0; i < kScaleGrid; ++i) {
    const double x = region.lo + region.width() * i / (kScaleGrid - 1);
    const double v = kernel(x);
    if (!std::isfinite(v) || v < 0.0) {
      fail(ErrorCode::NonFiniteKernel, "kernel is " + fmt(v) + " at x=" + fmt(x));
    }
    scale = std::max(scale, v);
  }
  for (double f : features) {
    if (region.contains(f)) scale = std::max(scale, kernel(f));
  }
  if (!(scale > 0.0)) fail(ErrorCode::ZeroMass, "kernel vanishes on the search region");

  const double inv_scale = 1.0 / scale;
  auto scaled = [&](double x) {
    const double v = kernel(x);
    if (!std::isfinite(v) || v < 0.0) {
      fail(ErrorCode::NonFiniteKernel, "kernel is " + fmt(v) + " at x=" + fmt(x));
    }
    return v * inv_scale;
  };
  const auto result = integrate(scaled, region.lo, region.hi, quad, features);
  const double mass = result.value * scale;
  if (!(mass > kMinMass)) {
    fail(ErrorCode::ZeroMass, "kernel mass " + fmt(mass) + " is numerically zero");
  }

  auto impl = std::make_shared<detail::DensityImpl>();
  impl->region = region;
  impl->tag = tag;
  impl->kernel = std::move(kernel);
  impl->normalizer = mass;
  impl->inv_normalizer = 1.0 / mass;
  impl->features = std::move(features);
  return DensityModel(std::move(impl));
}

DensityModel make_mixture(std::vector<MixtureComponent> components, FamilyTag tag) {
  if (components.empty()) fail(ErrorCode::InvalidArgument, "mixture needs components");
  const SearchRegion region = components.front().density.region();
  double total = 0.0;
  std::vector<double> features;
  for (const auto& c : components) {
    if (!same_support(c.density.region(), region)) {
      fail(ErrorCode::SupportMismatch, "mixture components live on different regions");
    }
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) {
      fail(ErrorCode::InvalidArgument, "mixture weights must be finite and non-negative");
    }
    total += c.weight;
    for (double f : c.density.features()) features.push_back(f);
  }
  if (std::abs(total - 1.0) > 1e-12) {
    fail(ErrorCode::InvalidArgument, "mixture weights sum to " + fmt(total));
  }
  std::sort(features.begin(), features.end());
  features.erase(std::unique(features.begin(), features.end()), features.end());

  auto impl = std::make_shared<detail::DensityImpl>();
  impl->region = region;
  impl->tag = tag;
  impl->features = std::move(features);
  double running = 0.0;
  for (const auto& c : components) {
    running += c.weight;
    impl->cumulative_weights.push_back(running);
  }
  impl->cumulative_weights.back() = 1.0;
  impl->components = components;
  impl->kernel = [comps = std::move(components)](double x) {
    double v = 0.0;
    for (const auto& c : comps) {
      if (c.weight > 0.0) v += c.weight * c.density.pdf(x);
    }
    return v;
  };
  return DensityModel(std::move(impl));
}

DensityModel uniform_density(const SearchRegion& region) {
  return normalize([](double) { return 1.0; }, region, {}, FamilyTag::uniform);
}

DensityModel truncated_gamma(const SearchRegion& region, double rate, double shape,
                             const QuadratureSpec& quad) {
  if (region.lo < 0.0 || (shape < 1.0 && region.lo <= 0.0)) {
    fail(ErrorCode::InvalidArgument, "truncated gamma needs a positive support");
  }
  return normalize(
      [rate, shape](double x) { return std::exp(-rate * x) * std::pow(x, shape - 1.0); },
      region, quad, FamilyTag::truncated_gamma);
}

DensityModel pareto1(const SearchRegion& region, double beta, const QuadratureSpec& quad) {
  if (!(region.lo > 0.0)) fail(ErrorCode::InvalidArgument, "pareto family needs lo > 0");
  return normalize([beta](double x) { return std::pow(x, -(beta + 1.0)); }, region, quad,
                   FamilyTag::pareto1);
}

DensityModel truncated_gaussian(const SearchRegion& region, double mu, double sigma,
                                const QuadratureSpec& quad) {
  if (!(sigma > 0.0)) fail(ErrorCode::InvalidArgument, "gaussian width must be positive");
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  return normalize(
      [mu, inv_two_var](double x) {
        const double d = x - mu;
        return std::exp(-d * d * inv_two_var);
      },
      region, quad, FamilyTag::truncated_gaussian, {mu});
}

DensityModel power_law_shifted(const SearchRegion& region, double alpha, double shift,
                               const QuadratureSpec& quad) {
  if (!(region.lo + shift > 0.0)) {
    fail(ErrorCode::InvalidArgument, "shifted power law needs lo + shift > 0");
  }
  return normalize([alpha, shift](double x) { return std::pow(x + shift, -(alpha + 1.0)); },
                   region, quad, FamilyTag::power_law_shifted);
}

DensityModel exponential_logscale(const SearchRegion& region, double psi,
                                  const QuadratureSpec& quad) {
  // Anchored at lo so the kernel stays O(1) for large psi.
  const double lo = region.lo;
  return normalize([psi, lo](double x) { return std::exp(-psi * (x - lo)); }, region, quad,
                   FamilyTag::exponential_logscale);
}

DensityModel gaussian_signal_logscale(const SearchRegion& region, double kappa,
                                      double rel_width, const QuadratureSpec& quad) {
  if (!(kappa > 0.0) || !(rel_width > 0.0)) {
    fail(ErrorCode::InvalidArgument, "log-scale gaussian signal needs kappa, width > 0");
  }
  const double inv_two_var = 1.0 / (2.0 * rel_width * rel_width * kappa * kappa);
  return normalize(
      [kappa, inv_two_var](double x) {
        const double e = std::exp(x);
        const double d = e - kappa;
        return std::exp(-d * d * inv_two_var) * e;
      },
      region, quad, FamilyTag::gaussian_signal_logscale, {std::log(kappa)});
}

DensityModel gaussian_tail(const SearchRegion& region, double beta, double center,
                           const QuadratureSpec& quad) {
  if (!(beta > 0.0)) fail(ErrorCode::InvalidArgument, "gaussian tail width must be positive");
  // Offset by the value at lo (the kernel is monotone on a region right of center).
  const double d0 = std::max(region.lo - center, 0.0);
  return normalize(
      [beta, center, d0](double x) {
        const double d = x - center;
        return std::exp(-(d * d - d0 * d0) / (4.0 * beta));
      },
      region, quad, FamilyTag::gaussian_tail);
}

DensityModel make_bump_mixture(const DensityModel& q_alpha, double lambda, double mu1,
                               double mu2, double sigma0, const SearchRegion& region,
                               const QuadratureSpec& quad) {
  if (!(lambda >= 0.0 && lambda < 0.5)) {
    fail(ErrorCode::LambdaOutOfRange, "bump weight lambda=" + fmt(lambda) + " not in [0, 1/2)");
  }
  if (!region.contains(mu1) || !region.contains(mu2)) {
    fail(ErrorCode::BumpCenterOutsideRegion, "bump centers must lie in the search region");
  }
  if (!(sigma0 > 0.0)) fail(ErrorCode::InvalidArgument, "bump width sigma0 must be positive");
  if (!same_support(q_alpha.region(), region)) {
    fail(ErrorCode::SupportMismatch, "baseline density lives on a different region");
  }
  return make_mixture({{1.0 - 2.0 * lambda, q_alpha},
                       {lambda, truncated_gaussian(region, mu1, sigma0, quad)},
                       {lambda, truncated_gaussian(region, mu2, sigma0, quad)}},
                      FamilyTag::bump_mixture);
}

DensityModel spurious_signal_proposal(const DensityModel& signal, const DensityModel& q,
                                      double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) {
    fail(ErrorCode::InvalidArgument, "spurious signal weight must lie in [0, 1)");
  }
  return make_mixture({{eps, signal}, {1.0 - eps, q}});
}

}  // namespace sigdet
