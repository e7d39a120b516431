#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sigdet/compensator.hpp"
#include "sigdet/density.hpp"

namespace sigdet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class GradMode { analytic, central_fd };

std::string_view to_string(GradMode mode);

/// A family g_beta of densities on a fixed region, indexed by beta in a
/// compact box. The family is described by an unnormalized log kernel; the
/// normalizer is always obtained by quadrature.
class ParametricProposal {
 public:
  using LogKernel = std::function<double(double, const Vector&)>;
  /// Derivative callbacks write into the provided p-vector / p x p matrix.
  using GradLogKernel = std::function<void(double, const Vector&, Eigen::Ref<Vector>)>;
  using HessLogKernel = std::function<void(double, const Vector&, Eigen::Ref<Matrix>)>;
  using Features = std::function<std::vector<double>(const Vector&)>;

  struct Definition {
    std::string name;
    FamilyTag tag = FamilyTag::custom;
    SearchRegion region;
    std::vector<std::string> param_names;
    Vector box_lo;
    Vector box_hi;
    Vector initial;
    LogKernel log_kernel;
    GradLogKernel grad_log_kernel;  // optional, required for analytic mode
    HessLogKernel hess_log_kernel;  // optional, required for analytic mode
    Features features;              // optional
  };

  explicit ParametricProposal(Definition def, GradMode mode = GradMode::analytic,
                              double fd_step = 0.0);

  const std::string& name() const { return def_.name; }
  FamilyTag tag() const { return def_.tag; }
  const SearchRegion& region() const { return def_.region; }
  const std::vector<std::string>& param_names() const { return def_.param_names; }
  Eigen::Index dim() const { return def_.box_lo.size(); }
  const Vector& box_lo() const { return def_.box_lo; }
  const Vector& box_hi() const { return def_.box_hi; }
  const Vector& initial() const { return def_.initial; }
  GradMode grad_mode() const { return mode_; }
  bool has_analytic_derivatives() const;

  /// Every coordinate of the box has zero width: the family is a single density.
  bool frozen() const;

  /// Central-difference step for coordinate j at beta: fd_step * max(1, |beta_j|),
  /// fd_step defaulting to the cube root of machine epsilon.
  double fd_step(const Vector& beta, Eigen::Index j) const;
  /// Step used for second differences (fourth root of epsilon, same scaling).
  double fd_step2(const Vector& beta, Eigen::Index j) const;

  /// Throws InvalidArgument when beta is outside the box.
  void check_in_box(const Vector& beta) const;

  double log_kernel(double x, const Vector& beta) const { return def_.log_kernel(x, beta); }
  double log_normalizer(const Vector& beta, const QuadratureSpec& quad = {}) const;
  DensityModel density(const Vector& beta, const QuadratureSpec& quad = {}) const;

  /// Sum over the sample of log g_beta.
  double loglik(std::span<const double> xs, const Vector& beta,
                const QuadratureSpec& quad = {}) const;

  /// Gradient of log g_beta at every observation (row i for xs[i]), through
  /// the normalizer, following grad_mode.
  Matrix grad_log_density(std::span<const double> xs, const Vector& beta) const;
  /// Hessian of log g_beta averaged over the observations.
  Matrix mean_hess_log_density(std::span<const double> xs, const Vector& beta) const;

 private:
  struct KernelMoments {
    Vector mean_grad;
    Matrix hess_log_normalizer;
  };
  KernelMoments kernel_moments(const Vector& beta) const;
  std::vector<double> features_at(const Vector& beta) const;
  double kernel_shift(const Vector& beta) const;

  Definition def_;
  GradMode mode_;
  double fd_step_;
};

// Catalog families -------------------------------------------------------

struct ParamBox {
  double lo;
  double hi;
  double initial;
};

/// x^-(beta + 1) on a positive region.
ParametricProposal pareto_family(const SearchRegion& region, ParamBox beta,
                                 GradMode mode = GradMode::analytic);
/// exp(-psi x).
ParametricProposal exponential_family(const SearchRegion& region, ParamBox psi,
                                      GradMode mode = GradMode::analytic);
/// exp(-(x - center)^2 / (4 beta)).
ParametricProposal gaussian_tail_family(const SearchRegion& region, ParamBox beta,
                                        double center = -1.0,
                                        GradMode mode = GradMode::analytic);
/// (x + shift)^-(alpha + 1).
ParametricProposal power_law_family(const SearchRegion& region, ParamBox alpha,
                                    double shift = 1.0, GradMode mode = GradMode::analytic);
/// exp(-rate x) x^(shape - 1), two parameters (rate, shape).
ParametricProposal truncated_gamma_family(const SearchRegion& region, ParamBox rate,
                                          ParamBox shape, GradMode mode = GradMode::analytic);
/// Gaussian (mu, sigma) truncated to the region.
ParametricProposal truncated_gaussian_family(const SearchRegion& region, ParamBox mu,
                                             ParamBox sigma,
                                             GradMode mode = GradMode::analytic);
/// A fixed density seen as a family with an empty parameter vector.
ParametricProposal frozen_family(const DensityModel& density);

// Estimation --------------------------------------------------------------

struct MleResult {
  Vector beta_hat;
  double loglik = 0.0;
  bool converged = false;
  bool at_boundary = false;
  /// -(1/m) sum of the Hessian of log g at beta_hat.
  Matrix observed_info;
};

MleResult fit_mle(const ParametricProposal& family, std::span<const double> sample);

struct DeltaMethodPieces {
  double A_hat = 0.0;
  double B_hat = 0.0;
  Vector Gamma_hat;
  Matrix J_hat;
  Matrix V_hat;
  Vector C_hat;
  double sigma2_theta = 0.0;
  double sigma2_delta = 0.0;
};

/// Sample-average pieces of the plug-in variance for eta_hat when the proposal
/// parameter is estimated on the background-only sample. Derivatives of S0 in
/// beta are central differences through the normalizer and ||S_beta||.
DeltaMethodPieces delta_method_pieces(const ParametricProposal& family, const Vector& beta_hat,
                                      const ScoreGeometry& geometry_at_beta_hat,
                                      std::span<const double> physics,
                                      std::span<const double> background_only);

/// Assembled sigma^2 for eta_hat with estimated beta, given sample sizes.
double sigma2_eta_beta(const DeltaMethodPieces& pieces, std::size_t n, std::size_t m);

InferenceReport test_z2(const DeltaMethodPieces& pieces, const TwoSampleEstimate& estimate,
                        double level = 0.05);

/// Quadratic form helpers shared with the no-background module. Throw
/// SingularInformation when J is not invertible to 1e-10.
Matrix checked_inverse(const Matrix& J);

/// Fit, geometry, estimate, pieces and report of the full background-given
/// workflow with an estimated proposal.
struct Z2Analysis {
  MleResult mle;
  ScoreGeometry geometry;
  TwoSampleEstimate estimate;
  DeltaMethodPieces pieces;
  InferenceReport report;
};

Z2Analysis analyze_z2(const DensityModel& signal, const ParametricProposal& family,
                      std::span<const double> physics, std::span<const double> background_only,
                      double level = 0.05);

/// Central-difference derivative of S0_beta(x) = (f_s/g_beta - 1)/||S_beta||^2
/// in every coordinate of beta, evaluated at each x. Row i holds observation i.
Matrix score0_beta_gradient(const ParametricProposal& family, const DensityModel& signal,
                            const Vector& beta, std::span<const double> xs,
                            const std::function<DensityModel(const Vector&)>& build = {});

}  // namespace sigdet
