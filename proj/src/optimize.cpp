#include "sigdet/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace sigdet {

namespace {

double finite_or_lowest(double v) {
  return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
}

}  // namespace

ScalarOptimum golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                 double x_tol, int max_iterations) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = finite_or_lowest(f(x1));
  double f2 = finite_or_lowest(f(x2));
  int it = 0;
  for (; it < max_iterations && (b - a) > x_tol; ++it) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = finite_or_lowest(f(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = finite_or_lowest(f(x2));
    }
  }
  // Endpoints are never probed by the interior iteration; check them for
  // monotone objectives whose maximum sits on the boundary.
  ScalarOptimum best = f1 >= f2 ? ScalarOptimum{x1, f1, it} : ScalarOptimum{x2, f2, it};
  for (double edge : {lo, hi}) {
    if (std::abs(edge - best.x) <= 2.0 * x_tol) {
      const double fe = finite_or_lowest(f(edge));
      if (fe > best.value) best = {edge, fe, it};
    }
  }
  return best;
}

VectorOptimum nelder_mead_max(const std::function<double(const Eigen::VectorXd&)>& f,
                              const Eigen::VectorXd& start, const Eigen::VectorXd& lo,
                              const Eigen::VectorXd& hi, const SimplexOptions& opts) {
  const auto p = start.size();
  auto project = [&](Eigen::VectorXd x) { return x.cwiseMax(lo).cwiseMin(hi).eval(); };
  auto value = [&](const Eigen::VectorXd& x) { return finite_or_lowest(f(x)); };

  std::vector<Eigen::VectorXd> simplex;
  simplex.push_back(project(start));
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd v = simplex.front();
    const double step = opts.initial_step * (hi(j) - lo(j));
    v(j) += (v(j) + step <= hi(j)) ? step : -step;
    simplex.push_back(project(v));
  }
  std::vector<double> fv;
  for (const auto& v : simplex) fv.push_back(value(v));

  std::vector<std::size_t> order(simplex.size());
  VectorOptimum out;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] > fv[b]; });
    const auto best = order.front(), worst = order.back(), second = order[order.size() - 2];

    double size = 0.0;
    for (const auto& v : simplex) size = std::max(size, (v - simplex[best]).cwiseAbs().maxCoeff());
    const double spread = std::abs(fv[best] - fv[worst]);
    if (std::isfinite(fv[worst]) &&
        spread <= opts.f_tol * (1.0 + std::abs(fv[best])) &&
        size <= opts.x_tol * (1.0 + simplex[best].cwiseAbs().maxCoeff())) {
      out.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(p);
    for (std::size_t k = 0; k < simplex.size(); ++k) {
      if (k != worst) centroid += simplex[k];
    }
    centroid /= static_cast<double>(p);

    const Eigen::VectorXd reflected = project(centroid + (centroid - simplex[worst]));
    const double fr = value(reflected);
    if (fr > fv[best]) {
      const Eigen::VectorXd expanded = project(centroid + 2.0 * (centroid - simplex[worst]));
      const double fe = value(expanded);
      if (fe > fr) {
        simplex[worst] = expanded;
        fv[worst] = fe;
      } else {
        simplex[worst] = reflected;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr > fv[second]) {
      simplex[worst] = reflected;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr > fv[worst];
    const Eigen::VectorXd contracted =
        project(outside ? centroid + 0.5 * (reflected - centroid)
                        : centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = value(contracted);
    if (fc > std::max(outside ? fr : fv[worst], fv[worst])) {
      simplex[worst] = contracted;
      fv[worst] = fc;
      continue;
    }
    for (std::size_t k = 0; k < simplex.size(); ++k) {
      if (k == best) continue;
      simplex[k] = project(simplex[best] + 0.5 * (simplex[k] - simplex[best]));
      fv[k] = value(simplex[k]);
    }
  }
  const auto best = static_cast<std::size_t>(
      std::distance(fv.begin(), std::max_element(fv.begin(), fv.end())));
  out.x = simplex[best];
  out.value = fv[best];
  out.iterations = it;
  return out;
}

}  // namespace sigdet
