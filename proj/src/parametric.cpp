#include "sigdet/parametric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sigdet/error.hpp"
#include "sigdet/optimize.hpp"

namespace sigdet {

namespace {

constexpr int kShiftGrid = 65;
constexpr int kNewtonIterations = 30;
constexpr double kSingularTol = 1e-10;
const double kCbrtEps = std::cbrt(std::numeric_limits<double>::epsilon());
const double kQrtEps = std::pow(std::numeric_limits<double>::epsilon(), 0.25);

Vector vec1(double v) { return Vector::Constant(1, v); }

}  // namespace

std::string_view to_string(GradMode mode) {
  return mode == GradMode::analytic ? "analytic" : "central_fd";
}

ParametricProposal::ParametricProposal(Definition def, GradMode mode, double fd_step)
    : def_(std::move(def)), mode_(mode), fd_step_(fd_step > 0.0 ? fd_step : kCbrtEps) {
  if (!def_.log_kernel) fail(ErrorCode::InvalidArgument, "family needs a log kernel");
  if (def_.box_lo.size() != def_.box_hi.size() || def_.initial.size() != def_.box_lo.size()) {
    fail(ErrorCode::InvalidArgument, "parameter box and initial value differ in dimension");
  }
  for (Eigen::Index j = 0; j < def_.box_lo.size(); ++j) {
    if (!std::isfinite(def_.box_lo(j)) || !std::isfinite(def_.box_hi(j)) ||
        def_.box_lo(j) > def_.box_hi(j)) {
      fail(ErrorCode::InvalidArgument, "parameter box must be finite with lo <= hi");
    }
  }
  if (def_.param_names.size() != static_cast<std::size_t>(def_.box_lo.size())) {
    def_.param_names.resize(def_.box_lo.size());
    for (std::size_t j = 0; j < def_.param_names.size(); ++j) {
      if (def_.param_names[j].empty()) def_.param_names[j] = "beta" + std::to_string(j);
    }
  }
  def_.initial = def_.initial.cwiseMax(def_.box_lo).cwiseMin(def_.box_hi);
  if (mode_ == GradMode::analytic && !has_analytic_derivatives()) mode_ = GradMode::central_fd;
  if (!(fd_step_ > 0.0 && fd_step_ < 1.0)) {
    fail(ErrorCode::FdStepInvalid, "finite-difference step must lie in (0, 1)");
  }
}

bool ParametricProposal::has_analytic_derivatives() const {
  return static_cast<bool>(def_.grad_log_kernel) && static_cast<bool>(def_.hess_log_kernel);
}

bool ParametricProposal::frozen() const { return (def_.box_hi - def_.box_lo).isZero(0.0); }

double ParametricProposal::fd_step(const Vector& beta, Eigen::Index j) const {
  return fd_step_ * std::max(1.0, std::abs(beta(j)));
}

double ParametricProposal::fd_step2(const Vector& beta, Eigen::Index j) const {
  return std::max(fd_step_, kQrtEps) * std::max(1.0, std::abs(beta(j)));
}

void ParametricProposal::check_in_box(const Vector& beta) const {
  if (beta.size() != dim()) fail(ErrorCode::InvalidArgument, "parameter has the wrong dimension");
  for (Eigen::Index j = 0; j < dim(); ++j) {
    if (!(beta(j) >= def_.box_lo(j) && beta(j) <= def_.box_hi(j))) {
      fail(ErrorCode::InvalidArgument, def_.name + ": parameter " + def_.param_names[j] +
                                           " = " + std::to_string(beta(j)) +
                                           " lies outside its box");
    }
  }
}

std::vector<double> ParametricProposal::features_at(const Vector& beta) const {
  if (!def_.features) return {};
  auto f = def_.features(beta);
  std::erase_if(f, [&](double x) { return !(x > def_.region.lo && x < def_.region.hi); });
  return f;
}

// Largest log kernel value on a grid; subtracting it keeps exp() in range.
double ParametricProposal::kernel_shift(const Vector& beta) const {
  const auto& r = def_.region;
  double shift = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kShiftGrid; ++i) {
    const double x = r.lo + r.width() * i / (kShiftGrid - 1);
    shift = std::max(shift, def_.log_kernel(x, beta));
  }
  for (double x : features_at(beta)) shift = std::max(shift, def_.log_kernel(x, beta));
  if (!std::isfinite(shift)) {
    fail(ErrorCode::NonFiniteKernel, def_.name + ": log kernel is not finite on the region");
  }
  return shift;
}

double ParametricProposal::log_normalizer(const Vector& beta, const QuadratureSpec& quad) const {
  const double shift = kernel_shift(beta);
  const auto breaks = features_at(beta);
  auto f = [&](double x) { return std::exp(def_.log_kernel(x, beta) - shift); };
  const double mass = integrate(f, def_.region.lo, def_.region.hi, quad, breaks).value;
  if (!(mass > 0.0) || !std::isfinite(mass)) {
    fail(ErrorCode::ZeroMass, def_.name + ": kernel has no mass on the region");
  }
  return shift + std::log(mass);
}

// No box check here: central differences evaluate the family just outside
// the box, where it is still a valid density.
DensityModel ParametricProposal::density(const Vector& beta, const QuadratureSpec& quad) const {
  if (beta.size() != dim()) fail(ErrorCode::InvalidArgument, "parameter has the wrong dimension");
  const double shift = kernel_shift(beta);
  auto lk = def_.log_kernel;
  Kernel kernel = [lk, beta, shift](double x) { return std::exp(lk(x, beta) - shift); };
  return normalize(std::move(kernel), def_.region, quad, def_.tag, features_at(beta));
}

double ParametricProposal::loglik(std::span<const double> xs, const Vector& beta,
                                  const QuadratureSpec& quad) const {
  double sum = 0.0;
  for (double x : xs) sum += def_.log_kernel(x, beta);
  return sum - static_cast<double>(xs.size()) * log_normalizer(beta, quad);
}

ParametricProposal::KernelMoments ParametricProposal::kernel_moments(const Vector& beta) const {
  const auto p = dim();
  const auto g = density(beta, QuadratureSpec::tight());
  const auto breaks = features_at(beta);
  const auto& r = def_.region;
  Vector gr(p);
  Matrix hs(p, p);
  auto expect = [&](auto&& h) {
    return integrate([&](double x) { return h(x) * g.pdf(x); }, r.lo, r.hi,
                     QuadratureSpec::tight(), breaks)
        .value;
  };
  KernelMoments km;
  km.mean_grad.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    km.mean_grad(j) = expect([&](double x) {
      def_.grad_log_kernel(x, beta, gr);
      return gr(j);
    });
  }
  km.hess_log_normalizer.resize(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = 0; k <= j; ++k) {
      // d2 log Z = E[d2 lk] + Cov(d lk)
      const double v = expect([&](double x) {
        def_.grad_log_kernel(x, beta, gr);
        def_.hess_log_kernel(x, beta, hs);
        return hs(j, k) + (gr(j) - km.mean_grad(j)) * (gr(k) - km.mean_grad(k));
      });
      km.hess_log_normalizer(j, k) = km.hess_log_normalizer(k, j) = v;
    }
  }
  return km;
}

Matrix ParametricProposal::grad_log_density(std::span<const double> xs, const Vector& beta) const {
  const auto p = dim();
  const auto n = static_cast<Eigen::Index>(xs.size());
  Matrix out = Matrix::Zero(n, p);
  if (p == 0) return out;
  if (mode_ == GradMode::analytic) {
    const auto km = kernel_moments(beta);
    Vector gr(p);
    for (Eigen::Index i = 0; i < n; ++i) {
      def_.grad_log_kernel(xs[i], beta, gr);
      out.row(i) = (gr - km.mean_grad).transpose();
    }
    return out;
  }
  const auto tight = QuadratureSpec::tight();
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = fd_step(beta, j);
    Vector bp = beta, bm = beta;
    bp(j) += h;
    bm(j) -= h;
    const double dlogz = log_normalizer(bp, tight) - log_normalizer(bm, tight);
    for (Eigen::Index i = 0; i < n; ++i) {
      out(i, j) = (def_.log_kernel(xs[i], bp) - def_.log_kernel(xs[i], bm) - dlogz) / (2.0 * h);
    }
  }
  return out;
}

Matrix ParametricProposal::mean_hess_log_density(std::span<const double> xs,
                                                 const Vector& beta) const {
  const auto p = dim();
  Matrix out = Matrix::Zero(p, p);
  if (p == 0 || xs.empty()) return out;
  const double n = static_cast<double>(xs.size());
  if (mode_ == GradMode::analytic) {
    const auto km = kernel_moments(beta);
    Matrix hs(p, p);
    for (double x : xs) {
      def_.hess_log_kernel(x, beta, hs);
      out += hs;
    }
    out = out / n - km.hess_log_normalizer;
    return 0.5 * (out + out.transpose());
  }
  const auto tight = QuadratureSpec::tight();
  // Mean of log g over the sample at a shifted parameter.
  auto mean_log_g = [&](const Vector& b) {
    double sum = 0.0;
    for (double x : xs) sum += def_.log_kernel(x, b);
    return sum / n - log_normalizer(b, tight);
  };
  const double f0 = mean_log_g(beta);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double hj = fd_step2(beta, j);
    Vector bp = beta, bm = beta;
    bp(j) += hj;
    bm(j) -= hj;
    out(j, j) = (mean_log_g(bp) - 2.0 * f0 + mean_log_g(bm)) / (hj * hj);
    for (Eigen::Index k = 0; k < j; ++k) {
      const double hk = fd_step2(beta, k);
      Vector bpp = beta, bpm = beta, bmp = beta, bmm = beta;
      bpp(j) += hj; bpp(k) += hk;
      bpm(j) += hj; bpm(k) -= hk;
      bmp(j) -= hj; bmp(k) += hk;
      bmm(j) -= hj; bmm(k) -= hk;
      out(j, k) = out(k, j) =
          (mean_log_g(bpp) - mean_log_g(bpm) - mean_log_g(bmp) + mean_log_g(bmm)) / (4.0 * hj * hk);
    }
  }
  return out;
}

// Catalog --------------------------------------------------------------------

namespace {

ParametricProposal::Definition one_param(std::string name, FamilyTag tag,
                                         const SearchRegion& region, std::string param,
                                         ParamBox box) {
  ParametricProposal::Definition d;
  d.name = std::move(name);
  d.tag = tag;
  d.region = region;
  d.param_names = {std::move(param)};
  d.box_lo = vec1(box.lo);
  d.box_hi = vec1(box.hi);
  d.initial = vec1(box.initial);
  return d;
}

}  // namespace

ParametricProposal pareto_family(const SearchRegion& region, ParamBox beta, GradMode mode) {
  if (!(region.lo > 0.0)) fail(ErrorCode::InvalidArgument, "pareto family needs lo > 0");
  auto d = one_param("pareto1", FamilyTag::pareto1, region, "beta", beta);
  d.log_kernel = [](double x, const Vector& b) { return -(b(0) + 1.0) * std::log(x); };
  d.grad_log_kernel = [](double x, const Vector&, Eigen::Ref<Vector> g) { g(0) = -std::log(x); };
  d.hess_log_kernel = [](double, const Vector&, Eigen::Ref<Matrix> h) { h(0, 0) = 0.0; };
  return ParametricProposal(std::move(d), mode);
}

ParametricProposal exponential_family(const SearchRegion& region, ParamBox psi, GradMode mode) {
  auto d = one_param("exponential_logscale", FamilyTag::exponential_logscale, region, "psi", psi);
  const double lo = region.lo;
  d.log_kernel = [lo](double x, const Vector& b) { return -b(0) * (x - lo); };
  d.grad_log_kernel = [lo](double x, const Vector&, Eigen::Ref<Vector> g) { g(0) = -(x - lo); };
  d.hess_log_kernel = [](double, const Vector&, Eigen::Ref<Matrix> h) { h(0, 0) = 0.0; };
  return ParametricProposal(std::move(d), mode);
}

ParametricProposal gaussian_tail_family(const SearchRegion& region, ParamBox beta, double center,
                                        GradMode mode) {
  if (!(beta.lo > 0.0)) fail(ErrorCode::InvalidArgument, "gaussian tail needs beta > 0");
  auto d = one_param("gaussian_tail", FamilyTag::gaussian_tail, region, "beta", beta);
  d.log_kernel = [center](double x, const Vector& b) {
    return -(x - center) * (x - center) / (4.0 * b(0));
  };
  d.grad_log_kernel = [center](double x, const Vector& b, Eigen::Ref<Vector> g) {
    g(0) = (x - center) * (x - center) / (4.0 * b(0) * b(0));
  };
  d.hess_log_kernel = [center](double x, const Vector& b, Eigen::Ref<Matrix> h) {
    h(0, 0) = -(x - center) * (x - center) / (2.0 * b(0) * b(0) * b(0));
  };
  return ParametricProposal(std::move(d), mode);
}

ParametricProposal power_law_family(const SearchRegion& region, ParamBox alpha, double shift,
                                    GradMode mode) {
  if (!(region.lo + shift > 0.0)) {
    fail(ErrorCode::InvalidArgument, "power law needs x + shift > 0 on the region");
  }
  auto d = one_param("power_law_shifted", FamilyTag::power_law_shifted, region, "alpha", alpha);
  d.log_kernel = [shift](double x, const Vector& b) { return -(b(0) + 1.0) * std::log(x + shift); };
  d.grad_log_kernel = [shift](double x, const Vector&, Eigen::Ref<Vector> g) {
    g(0) = -std::log(x + shift);
  };
  d.hess_log_kernel = [](double, const Vector&, Eigen::Ref<Matrix> h) { h(0, 0) = 0.0; };
  return ParametricProposal(std::move(d), mode);
}

ParametricProposal truncated_gamma_family(const SearchRegion& region, ParamBox rate,
                                          ParamBox shape, GradMode mode) {
  if (!(region.lo > 0.0)) fail(ErrorCode::InvalidArgument, "gamma family needs lo > 0");
  ParametricProposal::Definition d;
  d.name = "truncated_gamma";
  d.tag = FamilyTag::truncated_gamma;
  d.region = region;
  d.param_names = {"rate", "shape"};
  d.box_lo = Vector{{rate.lo, shape.lo}};
  d.box_hi = Vector{{rate.hi, shape.hi}};
  d.initial = Vector{{rate.initial, shape.initial}};
  d.log_kernel = [](double x, const Vector& b) { return -b(0) * x + (b(1) - 1.0) * std::log(x); };
  d.grad_log_kernel = [](double x, const Vector&, Eigen::Ref<Vector> g) {
    g(0) = -x;
    g(1) = std::log(x);
  };
  d.hess_log_kernel = [](double, const Vector&, Eigen::Ref<Matrix> h) { h.setZero(); };
  return ParametricProposal(std::move(d), mode);
}

ParametricProposal truncated_gaussian_family(const SearchRegion& region, ParamBox mu,
                                             ParamBox sigma, GradMode mode) {
  if (!(sigma.lo > 0.0)) fail(ErrorCode::InvalidArgument, "gaussian family needs sigma > 0");
  ParametricProposal::Definition d;
  d.name = "truncated_gaussian";
  d.tag = FamilyTag::truncated_gaussian;
  d.region = region;
  d.param_names = {"mu", "sigma"};
  d.box_lo = Vector{{mu.lo, sigma.lo}};
  d.box_hi = Vector{{mu.hi, sigma.hi}};
  d.initial = Vector{{mu.initial, sigma.initial}};
  d.log_kernel = [](double x, const Vector& b) {
    const double z = (x - b(0)) / b(1);
    return -0.5 * z * z;
  };
  d.grad_log_kernel = [](double x, const Vector& b, Eigen::Ref<Vector> g) {
    const double r = x - b(0), s = b(1);
    g(0) = r / (s * s);
    g(1) = r * r / (s * s * s);
  };
  d.hess_log_kernel = [](double x, const Vector& b, Eigen::Ref<Matrix> h) {
    const double r = x - b(0), s = b(1);
    h(0, 0) = -1.0 / (s * s);
    h(0, 1) = h(1, 0) = -2.0 * r / (s * s * s);
    h(1, 1) = -3.0 * r * r / (s * s * s * s);
  };
  d.features = [](const Vector& b) { return std::vector<double>{b(0)}; };
  return ParametricProposal(std::move(d), mode);
}

ParametricProposal frozen_family(const DensityModel& density) {
  ParametricProposal::Definition d;
  d.name = "frozen_" + std::string(to_string(density.family()));
  d.tag = density.family();
  d.region = density.region();
  d.box_lo = d.box_hi = d.initial = Vector(0);
  d.log_kernel = [density](double x, const Vector&) { return density.log_pdf(x); };
  d.grad_log_kernel = [](double, const Vector&, Eigen::Ref<Vector>) {};
  d.hess_log_kernel = [](double, const Vector&, Eigen::Ref<Matrix>) {};
  const std::vector<double> feats(density.features().begin(), density.features().end());
  d.features = [feats](const Vector&) { return feats; };
  return ParametricProposal(std::move(d));
}

// Estimation -----------------------------------------------------------------

namespace {

double safe_loglik(const ParametricProposal& family, std::span<const double> xs,
                   const Vector& beta) {
  try {
    return family.loglik(xs, beta);
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

// Newton iterations on the log-likelihood with analytic derivatives, kept in
// the box and accepted only while the likelihood does not decrease.
void newton_polish(const ParametricProposal& family, std::span<const double> xs,
                   MleResult& fit) {
  const double m = static_cast<double>(xs.size());
  for (int it = 0; it < kNewtonIterations; ++it) {
    const Vector score = family.grad_log_density(xs, fit.beta_hat).colwise().sum().transpose();
    const Matrix info = -m * family.mean_hess_log_density(xs, fit.beta_hat);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(info / m);
    if (eig.eigenvalues().minCoeff() <= 0.0) return;  // not locally concave
    const Vector step = info.ldlt().solve(score);
    double scale = 1.0;
    bool accepted = false;
    for (int half = 0; half < 30; ++half, scale *= 0.5) {
      Vector trial =
          (fit.beta_hat + scale * step).cwiseMax(family.box_lo()).cwiseMin(family.box_hi());
      const double ll = safe_loglik(family, xs, trial);
      if (ll >= fit.loglik) {
        const double moved = (trial - fit.beta_hat).cwiseAbs().maxCoeff();
        fit.beta_hat = trial;
        fit.loglik = ll;
        accepted = true;
        if (moved <= 1e-13 * (1.0 + fit.beta_hat.cwiseAbs().maxCoeff())) return;
        break;
      }
    }
    if (!accepted) return;
  }
}

}  // namespace

MleResult fit_mle(const ParametricProposal& family, std::span<const double> sample) {
  if (sample.empty()) fail(ErrorCode::EmptySample, "MLE needs a nonempty sample");
  const auto xs = checked_sample(sample, family.region(), "MLE");
  const auto p = family.dim();

  MleResult fit;
  if (family.frozen()) {
    fit.beta_hat = family.box_lo();
    fit.loglik = family.loglik(xs, fit.beta_hat);
    if (!std::isfinite(fit.loglik)) fail(ErrorCode::NonFiniteLogLik, "log-likelihood is not finite");
    fit.converged = true;
    fit.observed_info = Matrix::Zero(0, 0);
    return fit;
  }

  if (p == 1) {
    const double lo = family.box_lo()(0), hi = family.box_hi()(0);
    auto f = [&](double b) { return safe_loglik(family, xs, vec1(b)); };
    const auto best = golden_section_max(f, lo, hi, 1e-8 * std::max(1.0, hi - lo), 300);
    fit.beta_hat = vec1(best.x);
    fit.loglik = best.value;
    fit.converged = true;
  } else {
    auto f = [&](const Vector& b) { return safe_loglik(family, xs, b); };
    const auto best = nelder_mead_max(f, family.initial(), family.box_lo(), family.box_hi());
    if (!best.converged) {
      fail(ErrorCode::OptimizationFailure,
           family.name() + ": simplex search did not converge within its iteration budget");
    }
    fit.beta_hat = best.x;
    fit.loglik = best.value;
    fit.converged = true;
  }
  if (!std::isfinite(fit.loglik)) {
    fail(ErrorCode::NonFiniteLogLik, family.name() + ": log-likelihood is not finite at the optimum");
  }
  if (family.has_analytic_derivatives() && family.grad_mode() == GradMode::analytic) {
    newton_polish(family, xs, fit);
  }

  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = family.fd_step(fit.beta_hat, j);
    if (fit.beta_hat(j) - family.box_lo()(j) <= h || family.box_hi()(j) - fit.beta_hat(j) <= h) {
      fit.at_boundary = true;
    }
  }
  const Matrix info = -family.mean_hess_log_density(xs, fit.beta_hat);
  fit.observed_info = 0.5 * (info + info.transpose());
  return fit;
}

Matrix checked_inverse(const Matrix& J) {
  if (J.size() == 0) return J;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (J + J.transpose()));
  const auto& ev = eig.eigenvalues();
  if (!(ev.cwiseAbs().minCoeff() > kSingularTol) || !ev.allFinite()) {
    fail(ErrorCode::SingularInformation, "information matrix is not invertible");
  }
  return eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

Matrix score0_beta_gradient(const ParametricProposal& family, const DensityModel& signal,
                            const Vector& beta, std::span<const double> xs,
                            const std::function<DensityModel(const Vector&)>& build) {
  const auto p = family.dim();
  const auto tight = QuadratureSpec::tight();
  auto make = [&](const Vector& b) { return build ? build(b) : family.density(b, tight); };
  Matrix out(static_cast<Eigen::Index>(xs.size()), p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = family.fd_step(beta, j);
    if (!(h > 0.0) || !std::isfinite(h)) fail(ErrorCode::FdStepInvalid, "invalid step");
    Vector bp = beta, bm = beta;
    bp(j) += h;
    bm(j) -= h;
    const auto gp = score_geometry(signal, make(bp), tight);
    const auto gm = score_geometry(signal, make(bm), tight);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out(static_cast<Eigen::Index>(i), j) = (gp.score0(xs[i]) - gm.score0(xs[i])) / (2.0 * h);
    }
  }
  return out;
}

DeltaMethodPieces delta_method_pieces(const ParametricProposal& family, const Vector& beta_hat,
                                      const ScoreGeometry& geometry_at_beta_hat,
                                      std::span<const double> physics,
                                      std::span<const double> background_only) {
  if (physics.empty() || background_only.empty()) {
    fail(ErrorCode::EmptySample, "delta-method pieces need both samples");
  }
  const auto& region = family.region();
  const auto xs = checked_sample(physics, region, "physics");
  const auto ys = checked_sample(background_only, region, "background-only");
  const auto& geom = geometry_at_beta_hat;
  const double s = geom.s_norm();

  const auto sx = score_dagger_values(geom, xs);
  const auto sy = score_dagger_values(geom, ys);
  const auto th = mean_var(sx);
  const auto de = mean_var(sy);

  DeltaMethodPieces pc;
  pc.sigma2_theta = th.var;
  pc.sigma2_delta = de.var;
  const double denom = s - de.mean;
  if (std::abs(denom) < 1e-12) {
    fail(ErrorCode::DegenerateDenominator, "||S|| - delta_hat is numerically zero");
  }
  pc.A_hat = 1.0 / denom;
  pc.B_hat = (th.mean - s) / (denom * denom);

  if (family.frozen()) {
    pc.Gamma_hat = Vector(0);
    pc.C_hat = Vector(0);
    pc.J_hat = Matrix(0, 0);
    pc.V_hat = Matrix(0, 0);
    return pc;
  }

  const double theta0 = th.mean / s, delta0 = de.mean / s;
  // One pass over both samples so the perturbed geometries are built once.
  std::vector<double> both(xs);
  both.insert(both.end(), ys.begin(), ys.end());
  const Matrix d = score0_beta_gradient(family, geom.signal(), beta_hat, both);
  const auto nx = static_cast<Eigen::Index>(xs.size());
  const auto ny = static_cast<Eigen::Index>(ys.size());
  pc.Gamma_hat = d.topRows(nx).colwise().mean().transpose() / (1.0 - delta0) +
                 d.bottomRows(ny).colwise().mean().transpose() * (theta0 - 1.0) /
                     ((1.0 - delta0) * (1.0 - delta0));

  const Matrix grads = family.grad_log_density(ys, beta_hat);
  const Eigen::Map<const Vector> sy_vec(sy.data(), ny);
  const double m = static_cast<double>(ys.size());
  pc.J_hat = -family.mean_hess_log_density(ys, beta_hat);
  pc.V_hat = grads.transpose() * grads / m;
  pc.C_hat = grads.transpose() * sy_vec / m;
  return pc;
}

double sigma2_eta_beta(const DeltaMethodPieces& pc, std::size_t n, std::size_t m) {
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  double bracket = pc.B_hat * pc.B_hat * pc.sigma2_delta;
  if (pc.Gamma_hat.size() > 0) {
    const Matrix Jinv = checked_inverse(pc.J_hat);
    const Vector a = Jinv * pc.Gamma_hat;
    bracket += a.dot(pc.V_hat * a) + 2.0 * pc.B_hat * a.dot(pc.C_hat);
  }
  return mm / (mm + nn) * pc.A_hat * pc.A_hat * pc.sigma2_theta + nn / (mm + nn) * bracket;
}

InferenceReport test_z2(const DeltaMethodPieces& pieces, const TwoSampleEstimate& estimate,
                        double level) {
  const double var = sigma2_eta_beta(pieces, estimate.n, estimate.m);
  if (!(var > 0.0)) fail(ErrorCode::ZeroVariance, "assembled variance is not positive");
  auto r = wald_report(Method::Z2, estimate.eta_hat, std::sqrt(var / estimate.effective_size()),
                       level);
  r.estimate_clipped = estimate.eta_clipped();
  if (estimate.denominator_flipped) r.diagnostics.emplace_back("denominator_flipped");
  return r;
}

Z2Analysis analyze_z2(const DensityModel& signal, const ParametricProposal& family,
                      std::span<const double> physics, std::span<const double> background_only,
                      double level) {
  auto mle = fit_mle(family, background_only);
  auto geometry = score_geometry(signal, family.density(mle.beta_hat));
  auto estimate = estimate_two_sample(geometry, physics, background_only);
  auto pieces = delta_method_pieces(family, mle.beta_hat, geometry, physics, background_only);
  auto report = test_z2(pieces, estimate, level);
  if (mle.at_boundary) report.diagnostics.emplace_back("mle_at_boundary_unreliable");
  return {std::move(mle), std::move(geometry), estimate, std::move(pieces), std::move(report)};
}

}  // namespace sigdet
