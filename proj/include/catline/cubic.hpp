#pragma once

// Real roots of the monic cubic  x^3 + 3a x^2 + 2b x + 2c = 0.
//
// This is the normalization produced by projecting a point onto an
// osculating parabola. The closed form follows the trigonometric /
// Cardano split; the largest root is then polished with Laguerre's method
// because the closed form can lose most of its digits to cancellation.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

namespace catline {

struct CubicRealRoots {
  std::array<double, 3> roots{};  // ascending when count == 3
  int count = 0;                  // 1 or 3; a double root is reported twice
};

namespace detail {

struct CubicPoly {
  double c2, c1, c0;  // x^3 + c2 x^2 + c1 x + c0

  double value(double x) const { return ((x + c2) * x + c1) * x + c0; }
  double derivative(double x) const { return (3.0 * x + 2.0 * c2) * x + c1; }
  double second(double x) const { return 6.0 * x + 2.0 * c2; }
  double scale() const {
    return 1.0 + std::max({std::abs(c2), std::abs(c1), std::abs(c0)});
  }
};

// Laguerre iteration restricted to the real axis. Stops when the residual
// stops decreasing or after `max_iter` steps.
inline double laguerre_polish(const CubicPoly& p, double x, int max_iter = 8) {
  constexpr double n = 3.0;
  double fx = p.value(x);
  for (int it = 0; it < max_iter && fx != 0.0; ++it) {
    const double g = p.derivative(x) / fx;
    const double h = g * g - p.second(x) / fx;
    const double disc = std::max(0.0, (n - 1.0) * (n * h - g * g));
    const double sq = std::sqrt(disc);
    const double den = std::abs(g + sq) >= std::abs(g - sq) ? g + sq : g - sq;
    if (den == 0.0 || !std::isfinite(den)) break;
    const double next = x - n / den;
    const double f_next = p.value(next);
    if (!(std::abs(f_next) < std::abs(fx))) break;
    x = next;
    fx = f_next;
  }
  return x;
}

}  // namespace detail

/// All real roots of x^3 + 3a x^2 + 2b x + 2c = 0, unpolished.
inline CubicRealRoots solve_cubic(double a, double b, double c) {
  const double q = a * a - (2.0 / 3.0) * b;
  const double r = a * a * a - a * b + c;
  const double q3 = q * q * q;
  CubicRealRoots out;
  if (r * r < q3) {
    const double sq = std::sqrt(q);
    const double theta = std::acos(std::clamp(r / (q * sq), -1.0, 1.0));
    const double k = -2.0 * sq;
    out.roots = {k * std::cos(theta / 3.0) - a,
                 k * std::cos((theta + 2.0 * std::numbers::pi) / 3.0) - a,
                 k * std::cos((theta - 2.0 * std::numbers::pi) / 3.0) - a};
    std::sort(out.roots.begin(), out.roots.end());
    out.count = 3;
    return out;
  }
  const double big_a = -std::copysign(std::cbrt(std::abs(r) + std::sqrt(r * r - q3)), r);
  const double big_b = big_a != 0.0 ? q / big_a : 0.0;
  out.roots = {big_a + big_b - a, 0.0, 0.0};
  out.count = 1;
  // Exactly repeated roots land here with r^2 == q^3; report them as three.
  if (q3 != 0.0 && r * r == q3) {
    const double other = -0.5 * (big_a + big_b) - a;
    out.roots = {out.roots[0], other, other};
    std::sort(out.roots.begin(), out.roots.end());
    out.count = 3;
  }
  return out;
}

/// Largest real root of x^3 + 3a x^2 + 2b x + 2c = 0, polished by Laguerre.
inline double solve_cubic_largest_root(double a, double b, double c) {
  const double q = a * a - (2.0 / 3.0) * b;
  const double r = a * a * a - a * b + c;
  double x;
  if (r * r < q * q * q) {
    const double theta = std::acos(std::clamp(-r / std::pow(q, 1.5), -1.0, 1.0));
    x = 2.0 * std::sqrt(q) * std::cos(theta / 3.0) - a;
  } else {
    const double big_a = -std::copysign(std::cbrt(std::abs(r) + std::sqrt(r * r - q * q * q)), r);
    const double big_b = big_a != 0.0 ? q / big_a : 0.0;
    x = (big_a + big_b) - a;
  }
  return detail::laguerre_polish({3.0 * a, 2.0 * b, 2.0 * c}, x);
}

/// Residual of the normalized cubic at x, for callers that verify roots.
inline double cubic_residual(double a, double b, double c, double x) {
  return detail::CubicPoly{3.0 * a, 2.0 * b, 2.0 * c}.value(x);
}

}  // namespace catline
