#pragma once

// Brute-force closest-point oracle used to validate the iterative solver.
//
// Each branch of y = cosh(x) (x <= 0 and x >= 0) has a single local minimum
// of the distance to any point, so a dense sample per branch followed by a
// Brent refinement inside the best sample's neighborhood finds the global
// minimum. The only curve knowledge used is the cosh evaluation itself.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "catline/catenary.hpp"

namespace catline {

struct OracleResult {
  double x = 0.0;         // canonical abscissa of the closest point
  double distance = 0.0;  // canonical distance
};

namespace detail {

inline double oracle_dist2(const CanonicalPoint& p, double x) {
  const double dx = p.x - x;
  const double dy = p.y - std::cosh(x);
  return dx * dx + dy * dy;
}

inline OracleResult oracle_branch(const CanonicalPoint& p, double lo, double hi, std::size_t samples) {
  if (!(hi > lo)) return {lo, std::sqrt(oracle_dist2(p, lo))};
  const double step = (hi - lo) / static_cast<double>(samples - 1);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = i + 1 == samples ? hi : lo + step * static_cast<double>(i);
    const double d = oracle_dist2(p, x);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  const double a = best == 0 ? lo : lo + step * static_cast<double>(best - 1);
  const double b = best + 1 >= samples ? hi : lo + step * static_cast<double>(best + 1);
  auto [x, d2] = boost::math::tools::brent_find_minima(
      [&p](double t) { return oracle_dist2(p, t); }, a, b, std::numeric_limits<double>::digits);
  OracleResult out{x, std::sqrt(d2)};
  // half derivative of the squared distance
  const auto slope = [&p](double t) { return (t - p.x) + (std::cosh(t) - p.y) * std::sinh(t); };
  double l = a, h = b;
  if (slope(l) < 0.0 && slope(h) > 0.0) {
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (l + h);
      if (mid <= l || mid >= h) break;
      (slope(mid) < 0.0 ? l : h) = mid;
    }
    for (double t : {l, h}) {
      const double dt = oracle_dist2(p, t);
      if (dt < d2) {
        d2 = dt;
        out = {t, std::sqrt(dt)};
      }
    }
  }
  if (d2 < best_d) return out;
  const double xb = lo + step * static_cast<double>(best);
  return {xb, std::sqrt(best_d)};
}

}  // namespace detail

/// Closest point on y = cosh(x) by dense sampling plus local refinement.
inline OracleResult oracle_closest_canonical(const CanonicalPoint& p, std::size_t samples = 4096) {
  if (samples < 3) samples = 3;
  // |x* - x_p| is bounded by the vertical distance to the curve, and so is
  // the height of the closest point above p.
  const double dv = std::abs(p.y - std::cosh(p.x));
  const double reach = std::acosh(std::max(1.0, p.y + dv));
  const double lo = std::max(p.x - dv, -reach) - 1e-9;
  const double hi = std::min(p.x + dv, reach) + 1e-9;
  OracleResult best{0.0, std::sqrt(detail::oracle_dist2(p, 0.0))};
  if (lo < 0.0) {
    const auto r = detail::oracle_branch(p, lo, std::min(hi, 0.0), samples);
    if (r.distance < best.distance) best = r;
  }
  if (hi > 0.0) {
    const auto r = detail::oracle_branch(p, std::max(lo, 0.0), hi, samples);
    if (r.distance < best.distance) best = r;
  }
  return best;
}

/// Oracle distances from 3D points to a curve (meters).
inline std::vector<double> oracle_closest(const CatenaryCurve& curve, std::span<const Vec3> points,
                                          std::size_t samples = 4096) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const Vec3& p : points) {
    double offset = 0.0;
    const PlanePoint q = curve.frame.project(p, &offset);
    const CanonicalPoint cp{(q.x - curve.m) / curve.a, (q.y - curve.c) / curve.a};
    const OracleResult r = oracle_closest_canonical(cp, samples);
    out.push_back(std::hypot(offset, curve.a * r.distance));
  }
  return out;
}

}  // namespace catline
