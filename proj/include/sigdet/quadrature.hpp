#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "sigdet/error.hpp"

namespace sigdet {

enum class QuadratureRule { adaptive, fixed_composite };

/// Tolerances for every one-dimensional integral in the library. The
/// adaptive rule stops when the summed error estimate drops below
/// max(abs_tol, rel_tol * |I|); the fixed rule uses `max_subdivisions`
/// equal panels.
struct QuadratureSpec {
  QuadratureRule rule = QuadratureRule::adaptive;
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  int max_subdivisions = 200;
  int initial_panels = 4;

  void validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || max_subdivisions < 1 ||
        initial_panels < 1) {
      fail(ErrorCode::InvalidArgument, "quadrature tolerances must be positive");
    }
  }

  /// Tighter variant used where integrals are differenced numerically.
  static QuadratureSpec tight() {
    QuadratureSpec q;
    q.abs_tol = 1e-13;
    q.rel_tol = 1e-12;
    q.max_subdivisions = 600;
    return q;
  }
};

struct QuadratureResult {
  double value = 0.0;
  double abs_error = 0.0;
  int subdivisions = 0;
};

namespace detail {

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
inline constexpr std::array<double, 11> kKronrodNodes = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr std::array<double, 11> kKronrodWeights = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077600525478700, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> kGaussWeights = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Panel {
  double a, b, value, error;
  bool roundoff = false;  // error estimate sits at the rounding floor
  bool operator<(const Panel& other) const { return error < other.error; }
};

template <class F>
Panel kronrod21(F& f, double a, double b) {
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(centre);
  double resg = 0.0;
  double resk = kKronrodWeights[10] * fc;
  double resabs = std::abs(resk);
  std::array<double, 10> f1{}, f2{};
  for (int j = 0; j < 10; ++j) {
    const double dx = half * kKronrodNodes[j];
    f1[j] = f(centre - dx);
    f2[j] = f(centre + dx);
    const double pair = f1[j] + f2[j];
    resk += kKronrodWeights[j] * pair;
    resabs += kKronrodWeights[j] * (std::abs(f1[j]) + std::abs(f2[j]));
    if (j % 2 == 1) resg += kGaussWeights[j / 2] * pair;
  }
  const double mean = 0.5 * resk;
  double resasc = kKronrodWeights[10] * std::abs(fc - mean);
  for (int j = 0; j < 10; ++j) {
    resasc += kKronrodWeights[j] * (std::abs(f1[j] - mean) + std::abs(f2[j] - mean));
  }
  const double h = std::abs(half);
  resabs *= h;
  resasc *= h;
  double err = std::abs((resk - resg) * half);
  if (resasc != 0.0 && err != 0.0) {
    err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  }
  constexpr double eps = std::numeric_limits<double>::epsilon();
  bool roundoff = false;
  if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) {
    roundoff = 50.0 * eps * resabs >= err;
    err = std::max(50.0 * eps * resabs, err);
  }
  return {a, b, resk * half, err, roundoff};
}

}  // namespace detail

/// 10-point Gauss-Legendre rule on [a, b]; no error estimate.
template <class F>
double gauss_legendre10(F&& f, double a, double b) {
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double sum = 0.0;
  for (int j = 0; j < 5; ++j) {
    const double dx = half * detail::kKronrodNodes[2 * j + 1];
    sum += detail::kGaussWeights[j] * (f(centre - dx) + f(centre + dx));
  }
  return sum * half;
}

/// Integrates f over [a, b]. `breakpoints` inside (a, b) seed the initial
/// partition; they should mark narrow features such as bump modes.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, const QuadratureSpec& spec,
                           std::span<const double> breakpoints = {}) {
  spec.validate();
  if (!(a < b)) {
    if (a == b) return {};
    fail(ErrorCode::InvalidArgument, "integration bounds must satisfy a <= b");
  }

  std::vector<double> cuts;
  const int panels =
      spec.rule == QuadratureRule::fixed_composite ? spec.max_subdivisions : spec.initial_panels;
  cuts.reserve(panels + breakpoints.size() + 1);
  for (int i = 0; i <= panels; ++i) cuts.push_back(a + (b - a) * i / panels);
  for (double p : breakpoints) {
    if (p > a && p < b) cuts.push_back(p);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [&](double x, double y) { return y - x <= 1e-14 * (b - a); }),
             cuts.end());
  cuts.back() = b;

  std::priority_queue<detail::Panel> heap;
  double total = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    auto p = detail::kronrod21(f, cuts[i], cuts[i + 1]);
    total += p.value;
    error += p.error;
    heap.push(p);
  }
  if (spec.rule == QuadratureRule::fixed_composite) {
    return {total, error, 0};
  }

  int subdivisions = 0;
  auto tolerance = [&] { return std::max(spec.abs_tol, spec.rel_tol * std::abs(total)); };
  // Panels limited by rounding cannot improve by bisection; they are set aside.
  std::vector<detail::Panel> settled;
  while (error > tolerance() && !heap.empty()) {
    if (heap.top().roundoff) {
      settled.push_back(heap.top());
      heap.pop();
      continue;
    }
    if (subdivisions >= spec.max_subdivisions) {
      fail(ErrorCode::QuadratureFailure,
           "adaptive quadrature exhausted " + std::to_string(spec.max_subdivisions) +
               " subdivisions (error estimate " + std::to_string(error) + ")");
    }
    const auto worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) break;  // panel at machine resolution
    heap.pop();
    auto left = detail::kronrod21(f, worst.a, mid);
    auto right = detail::kronrod21(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++subdivisions;
  }

  // Re-sum to shed accumulated cancellation in the running totals.
  total = 0.0;
  error = 0.0;
  for (const auto& p : settled) {
    total += p.value;
    error += p.error;
  }
  while (!heap.empty()) {
    total += heap.top().value;
    error += heap.top().error;
    heap.pop();
  }
  return {total, error, subdivisions};
}

}  // namespace sigdet
