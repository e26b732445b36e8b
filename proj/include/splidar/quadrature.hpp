#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <utility>
#include <vector>

#include "splidar/math.hpp"

namespace splidar {

/// Tolerances and subdivision budget for adaptive integration.
struct QuadratureConfig {
  double abs_tol = 1e-14;
  double rel_tol = 1e-9;
  int max_subdivisions = 4000;
};

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  int subdivisions = 0;
  bool converged = false;
};

namespace detail {

// 15-point Kronrod nodes (one symmetric half), with the embedded 7-point
// Gauss rule on the odd entries.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};

inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};

inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& other) const { return error < other.error; }
};

template <typename Fn>
Panel gauss_kronrod_panel(const Fn& f, double a, double b) {
  const double half = 0.5 * (b - a);
  const double center = 0.5 * (a + b);

  double kronrod = 0.0;
  double gauss = 0.0;
  for (std::size_t i = 0; i < kKronrodNodes.size(); ++i) {
    const double x = kKronrodNodes[i];
    const double fsum = (x == 0.0)
                            ? f(center)
                            : f(center - half * x) + f(center + half * x);
    kronrod += kKronrodWeights[i] * fsum;
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * fsum;
  }
  kronrod *= half;
  gauss *= half;
  // Plain |K15 - G7| difference: a conservative error estimate that never
  // reports false convergence on under-resolved peaks.
  const double err = std::abs(kronrod - gauss);
  return {a, b, kronrod, std::max(err, std::abs(kronrod) * 5e-17)};
}

}  // namespace detail

/// Adaptive Gauss-Kronrod (G7/K15) integration of f over [a, b].
/// Always bisects the panel with the largest error estimate until the
/// summed estimate meets the tolerance or the budget runs out.
template <typename Fn>
QuadratureResult integrate(const Fn& f, double a, double b,
                           const QuadratureConfig& cfg = {}) {
  QuadratureResult out;
  if (a == b) {
    out.converged = true;
    return out;
  }

  std::priority_queue<detail::Panel> panels;
  panels.push(detail::gauss_kronrod_panel(f, a, b));
  double total_value = panels.top().value;
  double total_error = panels.top().error;

  while (total_error > std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total_value)) &&
         out.subdivisions < cfg.max_subdivisions) {
    const detail::Panel worst = panels.top();
    panels.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (mid <= worst.a || mid >= worst.b) {
      // Interval at floating-point resolution; cannot refine further.
      panels.push(worst);
      break;
    }
    const detail::Panel left = detail::gauss_kronrod_panel(f, worst.a, mid);
    const detail::Panel right = detail::gauss_kronrod_panel(f, mid, worst.b);
    total_value += left.value + right.value - worst.value;
    total_error += left.error + right.error - worst.error;
    panels.push(left);
    panels.push(right);
    ++out.subdivisions;
  }

  // Resum for a numerically clean total (the incremental updates above can
  // accumulate cancellation).
  total_value = 0.0;
  total_error = 0.0;
  while (!panels.empty()) {
    total_value += panels.top().value;
    total_error += panels.top().error;
    panels.pop();
  }
  out.value = total_value;
  out.error_estimate = total_error;
  out.converged = total_error <=
                  std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total_value));
  return out;
}

}  // namespace splidar
