#pragma once

// Catenary geometry: y = c + a cosh((x - m) / a) in a plane frame, and the
// closest-point solver on the canonical curve y = cosh(x).
//
// The closest-point solver brackets the answer between two normal lines
// of a fixed partition (x_i = k i), seeds the iteration by matching arc
// length proportions to distance proportions, and then refines with either
// the osculating circle or the osculating parabola.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "catline/cubic.hpp"
#include "catline/geometry.hpp"

namespace catline {

struct CatenaryCurve {
  PlaneFrame frame;
  double c = 0.0;
  double a = 1.0;
  double m = 0.0;
  double x_min = 0.0;
  double x_max = 0.0;

  bool is_valid() const {
    return std::isfinite(c) && std::isfinite(m) && std::isfinite(a) && a > 0.0 &&
           !(x_max < x_min);
  }
  double length() const;
};

/// Height of the curve at in-plane abscissa x.
inline double evaluate(const CatenaryCurve& curve, double x) {
  const double y = curve.c + curve.a * std::cosh((x - curve.m) / curve.a);
  if (!std::isfinite(y)) throw OverflowError("catenary evaluation overflowed");
  return y;
}

inline CanonicalPoint to_canonical(const CatenaryCurve& curve, const PlanePoint& p) {
  return {(p.x - curve.m) / curve.a, (p.y - curve.c) / curve.a};
}

inline PlanePoint from_canonical(const CatenaryCurve& curve, const CanonicalPoint& p) {
  return {curve.a * p.x + curve.m, curve.a * p.y + curve.c};
}

/// Height where the normal of y = cosh(x) at x crosses the y axis. Even in x,
/// strictly increasing for x > 0, with limit 2 at the vertex.
inline double normal_axis_intercept(double x) {
  if (x == 0.0) return 2.0;
  return std::cosh(x) + x / std::sinh(x);
}

/// Length along y = cosh(x) between abscissas x0 and x1.
inline double catenary_arc_length(double x0, double x1) {
  const double s = std::abs(std::sinh(x1) - std::sinh(x0));
  if (!std::isfinite(s)) throw OverflowError("catenary arc length overflowed");
  return s;
}

/// Abscissa reached by walking `signed_length` along y = cosh(x) from x0
/// (positive lengths move towards +x).
inline double point_at_arc_length(double x0, double signed_length) {
  return std::asinh(std::sinh(x0) + signed_length);
}

namespace detail {

// Antiderivative of sqrt(1 + u^2), evaluated on |u| for stability.
inline double parabola_length_primitive(double u) {
  const double au = std::abs(u);
  const double s = std::sqrt(au * au + 1.0);
  return std::copysign(0.5 * (au * s + std::log(au + s)), u);
}

}  // namespace detail

/// Length along y = a x^2 + b x + c between x0 and x1 (negative when x1 < x0).
inline double parabola_arc_length(double x0, double x1, double a, double b) {
  if (a == 0.0) throw DomainError("parabola arc length: degenerate parabola (a == 0)");
  if (x0 == x1) return 0.0;
  const double u0 = 2.0 * a * x0 + b;
  const double u1 = 2.0 * a * x1 + b;
  if ((u0 > 0.0 && u1 > 0.0) || (u0 < 0.0 && u1 < 0.0)) {
    // Same sign: difference of the primitive rewritten without cancellation,
    // using u1 - u0 = 2a (x1 - x0).
    const double s0 = std::sqrt(u0 * u0 + 1.0);
    const double s1 = std::sqrt(u1 * u1 + 1.0);
    const double sum = u0 + u1;
    const double algebraic = sum * (1.0 + u0 * u0 + u1 * u1) / (u1 * s1 + u0 * s0);
    const double hyperbolic = std::asinh(2.0 * a * (x1 - x0) * sum / (u1 * s0 + u0 * s1)) / (2.0 * a);
    return 0.5 * ((x1 - x0) * algebraic + hyperbolic);
  }
  return (detail::parabola_length_primitive(u1) - detail::parabola_length_primitive(u0)) / (2.0 * a);
}

/// Pair of consecutive partition normals x_i = spacing * i bracketing a point.
struct NormalBracket {
  std::int64_t lower = 0;
  double spacing = 0.25;

  double x_lo() const { return spacing * static_cast<double>(lower); }
  double x_hi() const { return spacing * static_cast<double>(lower + 1); }
};

namespace detail {

// Largest abscissa whose sinh/cosh stay finite.
inline const double kMaxCanonicalX = std::asinh(std::numeric_limits<double>::max());

// Tangential offset of p from the normal line at x, divided by cosh(x).
// Positive when p lies on the +x side of that normal.
inline double normal_side(const CanonicalPoint& p, double x) {
  const double ch = std::cosh(x);
  return (p.x - x) / ch + p.y * std::tanh(x) - std::sinh(x);
}

inline bool is_bracket_lower(const CanonicalPoint& p, double x) { return normal_side(p, x) >= 0.0; }

}  // namespace detail

/// Binary search for the normal partition containing p (p.x >= 0).
inline NormalBracket locate_normal_partition(const CanonicalPoint& p, double spacing = 0.25) {
  if (!is_finite(p)) throw DomainError("locate_normal_partition: non-finite point");
  if (!(spacing > 0.0)) throw DomainError("locate_normal_partition: spacing must be positive");
  if (p.x < 0.0) throw DomainError("locate_normal_partition: point must satisfy x >= 0");

  // The vertical and horizontal lines through p hit the curve at x = p.x and
  // x = acosh(p.y); the closest point lies between them.
  const double h = p.y > 1.0 ? std::acosh(p.y) : 0.0;
  const double lo_x = std::min(p.x, h);
  const double hi_x = std::max(p.x, h);
  const auto max_index = static_cast<std::int64_t>(std::floor(detail::kMaxCanonicalX / spacing));
  auto lo = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(lo_x / spacing)), max_index - 1);
  auto hi = std::min<std::int64_t>(static_cast<std::int64_t>(std::ceil(hi_x / spacing)), max_index);
  hi = std::max(hi, lo + 1);
  // Rounding in the bounds may leave them on the wrong side; widen if needed.
  while (lo > 0 && !detail::is_bracket_lower(p, spacing * static_cast<double>(lo))) lo = std::max<std::int64_t>(0, lo - (hi - lo));
  while (hi < max_index && detail::is_bracket_lower(p, spacing * static_cast<double>(hi))) {
    const auto width = hi - lo;
    lo = hi;
    hi = std::min(max_index, hi + width);
  }
  while (hi - lo > 1) {
    const auto mid = lo + (hi - lo) / 2;
    if (detail::is_bracket_lower(p, spacing * static_cast<double>(mid))) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lo, spacing};
}

/// Seed abscissa: the arc-length fraction between the bracketing normals
/// equals the fraction of perpendicular distances from p to those normals.
inline double initial_guess(const CanonicalPoint& p, const NormalBracket& bracket) {
  const double x0 = bracket.x_lo();
  const double x1 = bracket.x_hi();
  const double d0 = std::abs(detail::normal_side(p, x0));
  const double d1 = std::abs(detail::normal_side(p, x1));
  const double s0 = std::sinh(x0);
  const double s1 = std::sinh(x1);
  const double total = d0 + d1;
  if (!(total > 0.0) || !std::isfinite(total)) return std::asinh(0.5 * (s0 + s1));
  return std::asinh(s0 + (d0 / total) * (s1 - s0));
}

/// One iteration with the osculating circle at x_c.
inline double circle_step(const CanonicalPoint& p, double x_c) {
  const double ch = std::cosh(x_c);
  const double th = std::tanh(x_c);
  const double sech = 1.0 / ch;
  const double dx = p.x - x_c;
  const double dy = p.y - ch;
  // Rotate p - p_c so the outward normal (tanh, -sech) becomes (1, 0).
  const double x_r = th * dx - sech * dy;
  const double y_r = sech * dx + th * dy;
  if (y_r == 0.0) return x_c;

  const double r = ch * ch;
  double l;
  if (!std::isfinite(r)) {
    l = std::abs(y_r);
  } else {
    double chord;
    if (r + x_r > 0.0) {
      const double t = y_r / (r + x_r);
      const double lx = r * (1.0 / std::sqrt(1.0 + t * t) - 1.0);
      const double u = 1.0 + x_r / r;
      const double v = y_r / r;
      const double ly = y_r / std::sqrt(u * u + v * v);
      chord = std::hypot(lx, ly);
    } else {
      // p is beyond the circle center; project directly.
      const double d = std::hypot(r + x_r, y_r);
      chord = std::hypot(-r + r * (r + x_r) / d, r * y_r / d);
    }
    const double ratio = chord / (2.0 * r);
    constexpr double kAsinIdentityLimit = 2.14911933289082095e-08;
    l = ratio > kAsinIdentityLimit ? 2.0 * r * std::asin(std::min(ratio, 1.0)) : chord;
  }
  return point_at_arc_length(x_c, std::copysign(l, y_r));
}

/// One iteration with the osculating parabola at x_c. The largest cubic root
/// is the right one for points with x >= 0; other points are mirrored.
inline double parabola_step(const CanonicalPoint& p, double x_c) {
  if (p.x < 0.0) return -parabola_step({-p.x, p.y}, -x_c);
  const double ch = std::cosh(x_c);
  if (!std::isfinite(ch * ch)) return circle_step(p, x_c);
  const double sech = 1.0 / ch;
  const double th = std::tanh(x_c);
  const double ca = th;
  const double cb = 2.0 - p.y * sech;
  const double cc = (x_c - p.x) * sech * sech + (1.0 - p.y * sech) * th;
  const double dx = solve_cubic_largest_root(ca, cb, cc);
  if (dx == 0.0 || !std::isfinite(dx)) return x_c;
  const double len = parabola_arc_length(0.0, dx, 0.5 * ch, std::sinh(x_c));
  return point_at_arc_length(x_c, len);
}

enum class StepMethod { circle, parabola };

inline double closest_point_step(StepMethod method, const CanonicalPoint& p, double x_c) {
  return method == StepMethod::circle ? circle_step(p, x_c) : parabola_step(p, x_c);
}

struct CanonicalClosest {
  CanonicalPoint point;
  int iterations = 0;
  bool converged = true;  // false when the bisection fallback produced the answer
};

/// Radius around (0, 2) inside which the solution snaps to the vertex.
inline constexpr double kInstabilityRadius = 1e-7;
inline constexpr int kMaxClosestIterations = 20;

namespace detail {

inline double bisect_bracket(const CanonicalPoint& p, double lo, double hi) {
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (is_bracket_lower(p, mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Closest point on y = cosh(x) to p.
inline CanonicalClosest closest_point_canonical(const CanonicalPoint& p,
                                                StepMethod method = StepMethod::circle,
                                                double rel_tol = 1e-12) {
  if (!is_finite(p)) throw DomainError("closest_point_canonical: non-finite point");
  rel_tol = std::max(rel_tol, 1e-15);
  const bool mirrored = p.x < 0.0;
  const CanonicalPoint q{std::abs(p.x), p.y};

  if ((q.x == 0.0 && q.y >= 2.0) || std::hypot(q.x, q.y - 2.0) <= kInstabilityRadius) {
    return {{0.0, 1.0}, 0, true};
  }

  const NormalBracket bracket = locate_normal_partition(q);
  double x = initial_guess(q, bracket);
  CanonicalClosest out;
  out.converged = false;
  for (int it = 1; it <= kMaxClosestIterations; ++it) {
    const double next = closest_point_step(method, q, x);
    out.iterations = it;
    if (!std::isfinite(next)) break;
    const double delta = next - x;
    x = next;
    if (std::abs(delta) <= rel_tol * std::max(1.0, std::abs(x))) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged) x = detail::bisect_bracket(q, bracket.x_lo(), bracket.x_hi());

  x = mirrored ? -x : x;
  if (x == 0.0) x = 0.0;
  out.point = {x, std::cosh(x)};
  return out;
}

/// Closest point for an in-plane point; distances in meters.
struct PlaneClosest {
  double x = 0.0;         // abscissa of the closest point
  double distance = 0.0;  // in-plane Euclidean distance
};

inline PlaneClosest closest_point_plane(double c, double a, double m, const PlanePoint& p,
                                        StepMethod method = StepMethod::circle,
                                        double rel_tol = 1e-12) {
  const CanonicalPoint cp{(p.x - m) / a, (p.y - c) / a};
  const CanonicalClosest r = closest_point_canonical(cp, method, rel_tol);
  return {a * r.point.x + m, a * std::hypot(cp.x - r.point.x, cp.y - r.point.y)};
}

struct ClosestPoint3 {
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
  double x = 0.0;  // in-plane abscissa of `point`
};

/// Closest point in 3D: project onto the curve plane, solve in-plane, and
/// combine the plane offset with the in-plane distance.
inline ClosestPoint3 closest_point_3d(const CatenaryCurve& curve, const Vec3& p,
                                      StepMethod method = StepMethod::circle,
                                      double rel_tol = 1e-12) {
  if (!p.allFinite()) throw DomainError("closest_point_3d: non-finite point");
  if (!curve.is_valid()) throw DomainError("closest_point_3d: invalid curve");
  double offset = 0.0;
  const PlanePoint q = curve.frame.project(p, &offset);
  const PlaneClosest in_plane = closest_point_plane(curve.c, curve.a, curve.m, q, method, rel_tol);
  ClosestPoint3 out;
  out.x = in_plane.x;
  out.distance = std::hypot(offset, in_plane.distance);
  out.point = curve.frame.lift({in_plane.x, evaluate(curve, in_plane.x)});
  return out;
}

inline ClosestPoint3 closest_point_3d(const CatenaryCurve& curve, const Point3& p,
                                      StepMethod method = StepMethod::circle,
                                      double rel_tol = 1e-12) {
  return closest_point_3d(curve, p.vec(), method, rel_tol);
}

/// Arc length of the curve between its extents, in meters.
inline double CatenaryCurve::length() const {
  return a * std::abs(std::sinh((x_max - m) / a) - std::sinh((x_min - m) / a));
}

}  // namespace catline
