#pragma once

// Fitting a catenary to a 3D point set.
//
//   1. fit a vertical (or wind-tilted) plane and build its frame,
//   2. project the points and fit a parabola,
//   3. reject concave or near-straight sets,
//   4. seed (c, a, m) by matching slope and curvature of the parabola at the
//      projection of the centroid,
//   5. minimize the sum of squared signed normal distances with a
//      Levenberg-Marquardt trust region over (c, log a, m),
//   6. drop points farther than the deviation threshold and refit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "catline/catenary.hpp"
#include "catline/cubic.hpp"
#include "catline/geometry.hpp"

namespace catline {

struct WindCorrection {
  bool enabled = false;
  double min_span = 60.0;                  // meters
  double max_deviation_angle_deg = 10.0;   // tilt cap from vertical
};

struct FitConfig {
  double deviation_threshold = 0.8;  // T, meters
  WindCorrection wind;
  int max_trust_iterations = 100;
  double gradient_tolerance = 1e-10;
  std::size_t min_points = 8;
  double straight_tolerance = 1e-3;  // sag below this fraction of the span is "straight"
  double straight_noise_factor = 2.0;  // ... or below this multiple of the parabola RMS
  int max_outlier_rounds = 10;
  // When the fresh plane or parabola is rejected, refit in the warm curve's
  // own plane instead of failing. Lets a contaminated cluster shed points it
  // picked up from elsewhere.
  bool trust_warm_start = false;
};

struct PlaneFit {
  PlaneFrame frame;
  double rms = 0.0;       // RMS distance of the points to the plane
  double tilt_deg = 0.0;  // rotation of the plane away from vertical
  bool tilt_rejected = false;  // tilted fit exceeded the cap; vertical plane used
};

struct ParabolaFit {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double rms = 0.0;

  bool convex() const { return alpha > 0.0; }
  double operator()(double x) const { return (alpha * x + beta) * x + gamma; }
};

enum class ParabolaVerdict { accept, concave, straight };

/// Catenary parameters within a fixed plane frame.
struct CatenaryParams {
  double c = 0.0;
  double a = 1.0;
  double m = 0.0;
};

struct TrustRegionResult {
  CatenaryParams params;
  double rms = 0.0;  // in-plane RMS of the signed distances
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_history;  // sum of squares after each accepted step
};

enum class FitStatus { ok, not_catenary, degenerate_plane, too_few_points };

inline const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::ok: return "ok";
    case FitStatus::not_catenary: return "not-catenary";
    case FitStatus::degenerate_plane: return "degenerate-plane";
    case FitStatus::too_few_points: return "too-few-points";
  }
  return "unknown";
}

struct FitResult {
  CatenaryCurve curve;
  std::vector<std::size_t> inliers;   // positions in the input span
  std::vector<std::size_t> outliers;  // positions in the input span
  std::vector<double> distances;      // 3D distance of every input point
  double rms = 0.0;
  double max_abs_deviation = 0.0;
  int iterations = 0;
  bool converged = false;
  FitStatus status = FitStatus::ok;
  ParabolaVerdict verdict = ParabolaVerdict::accept;

  bool ok() const { return status == FitStatus::ok; }
};

// --------------------------------------------------------------------------
// Plane fitting

namespace detail {

inline Vec3 centroid(std::span<const Vec3> pts) {
  Vec3 s = Vec3::Zero();
  for (const Vec3& p : pts) s += p;
  return s / static_cast<double>(pts.size());
}

inline Eigen::Matrix3d covariance(std::span<const Vec3> pts, const Vec3& center) {
  Eigen::Matrix3d c = Eigen::Matrix3d::Zero();
  for (const Vec3& p : pts) {
    const Vec3 d = p - center;
    c.noalias() += d * d.transpose();
  }
  return c / static_cast<double>(pts.size());
}

inline double plane_rms(const Eigen::Matrix3d& cov, const Vec3& normal) {
  return std::sqrt(std::max(0.0, normal.dot(cov * normal)));
}

inline Vec3 tilted_normal(double heading, double tilt) {
  return {-std::cos(tilt) * std::sin(heading), std::cos(tilt) * std::cos(heading), std::sin(tilt)};
}

}  // namespace detail

/// Vertical plane through the points whose horizontal trace is the total
/// least squares line of the horizontal coordinates.
inline PlaneFit fit_vertical_plane(std::span<const Vec3> pts) {
  if (pts.size() < 2) throw DegenerateGeometry("plane fit needs at least two points");
  const Vec3 center = detail::centroid(pts);
  Eigen::Matrix2d c2 = Eigen::Matrix2d::Zero();
  for (const Vec3& p : pts) {
    const Eigen::Vector2d d(p.x() - center.x(), p.y() - center.y());
    c2.noalias() += d * d.transpose();
  }
  c2 /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(c2);
  const double spread = es.eigenvalues()(1);
  const double scale = 1.0 + center.head<2>().squaredNorm();
  if (!(spread > 1e-24 * scale)) {
    throw DegenerateGeometry("plane fit: points are horizontally coincident");
  }
  const Eigen::Vector2d dir = es.eigenvectors().col(1);
  PlaneFit out;
  out.frame = PlaneFrame::from_direction(center, {dir.x(), dir.y(), 0.0});
  out.rms = std::sqrt(std::max(0.0, es.eigenvalues()(0)));
  return out;
}

inline PlaneFit fit_vertical_plane(std::span<const Point3> pts) {
  std::vector<Vec3> v;
  v.reserve(pts.size());
  for (const auto& p : pts) v.push_back(p.vec());
  return fit_vertical_plane(std::span<const Vec3>(v));
}

/// Plane tilted about its horizontal axis to absorb a steady cross wind.
/// Falls back to the vertical plane when the horizontal span is shorter than
/// the configured minimum or the best tilt exceeds the cap.
inline PlaneFit fit_tilted_plane(std::span<const Vec3> pts, const FitConfig& cfg) {
  PlaneFit vertical = fit_vertical_plane(pts);
  if (!cfg.wind.enabled) return vertical;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Vec3& p : pts) {
    const double u = (p - vertical.frame.origin).dot(vertical.frame.axis_x);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  if (hi - lo < cfg.wind.min_span) return vertical;

  const Vec3 center = vertical.frame.origin;
  const Eigen::Matrix3d cov = detail::covariance(pts, center);
  const Vec3& ax = vertical.frame.axis_x;
  const double heading = std::atan2(ax.y(), ax.x());
  // n(t) = cos t n_h + sin t z; n'Cn is K + R cos(2t - phi), so the minimizer is exact.
  const Vec3 n_h = detail::tilted_normal(heading, 0.0);
  const Vec3 up = Vec3::UnitZ();
  const double A = n_h.dot(cov * n_h), B = n_h.dot(cov * up), D = up.dot(cov * up);
  double tilt = 0.5 * (std::atan2(2.0 * B, A - D) + std::numbers::pi);
  if (tilt > 0.5 * std::numbers::pi) tilt -= std::numbers::pi;
  if (B == 0.0 && A <= D) tilt = 0.0;
  const double cap = cfg.wind.max_deviation_angle_deg * std::numbers::pi / 180.0;
  if (std::abs(tilt) > cap) {
    vertical.tilt_rejected = true;
    return vertical;
  }
  const Vec3 horizontal(std::cos(heading), std::sin(heading), 0.0);
  PlaneFit out;
  // from_direction may flip the horizontal axis, which flips the tilt sign.
  const PlaneFrame upright = PlaneFrame::from_direction(center, horizontal, 0.0);
  const double signed_tilt = upright.axis_x.dot(horizontal) >= 0.0 ? tilt : -tilt;
  out.frame = PlaneFrame::from_direction(center, horizontal, signed_tilt);
  out.rms = detail::plane_rms(cov, out.frame.normal);
  out.tilt_deg = signed_tilt * 180.0 / std::numbers::pi;
  return out;
}

inline PlaneFit fit_tilted_plane(std::span<const Point3> pts, const FitConfig& cfg) {
  std::vector<Vec3> v;
  v.reserve(pts.size());
  for (const auto& p : pts) v.push_back(p.vec());
  return fit_tilted_plane(std::span<const Vec3>(v), cfg);
}

// --------------------------------------------------------------------------
// Parabola seed

/// Least squares y = alpha x^2 + beta x + gamma.
inline ParabolaFit fit_parabola(std::span<const PlanePoint> pts) {
  const std::size_t n = pts.size();
  double mean = 0.0;
  for (const auto& p : pts) mean += p.x;
  mean /= static_cast<double>(std::max<std::size_t>(n, 1));
  double var = 0.0;
  for (const auto& p : pts) var += (p.x - mean) * (p.x - mean);
  const double scale = n > 0 ? std::sqrt(var / static_cast<double>(n)) : 0.0;

  // Need three distinct abscissas.
  std::size_t distinct = 0;
  {
    std::vector<double> xs;
    xs.reserve(n);
    for (const auto& p : pts) xs.push_back(p.x);
    std::sort(xs.begin(), xs.end());
    distinct = static_cast<std::size_t>(std::unique(xs.begin(), xs.end()) - xs.begin());
  }
  if (distinct < 3 || !(scale > 0.0)) throw DegenerateGeometry("parabola fit needs three distinct abscissas");

  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (pts[i].x - mean) / scale;
    design(static_cast<Eigen::Index>(i), 0) = 1.0;
    design(static_cast<Eigen::Index>(i), 1) = t;
    design(static_cast<Eigen::Index>(i), 2) = t * t;
    rhs(static_cast<Eigen::Index>(i)) = pts[i].y;
  }
  const Eigen::Vector3d k = design.colPivHouseholderQr().solve(rhs);
  ParabolaFit out;
  out.alpha = k(2) / (scale * scale);
  out.beta = k(1) / scale - 2.0 * k(2) * mean / (scale * scale);
  out.gamma = k(0) - k(1) * mean / scale + k(2) * mean * mean / (scale * scale);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (pts[i].x - mean) / scale;
    const double r = pts[i].y - (k(0) + k(1) * t + k(2) * t * t);
    ss += r * r;
  }
  out.rms = std::sqrt(ss / static_cast<double>(n));
  return out;
}

/// Rejects concave parabolas and parabolas whose sag over `span` does not
/// exceed max(tol * span, min_sag).
inline ParabolaVerdict validate_parabola(const ParabolaFit& fit, double span, double tol,
                                         double min_sag = 0.0) {
  if (fit.alpha < 0.0) return ParabolaVerdict::concave;
  const double half = 0.5 * span;
  const double sag = fit.alpha * half * half;
  if (sag <= std::max(tol * span, min_sag)) return ParabolaVerdict::straight;
  return ParabolaVerdict::accept;
}

/// Closest point on a parabola, through the same normalized cubic used by
/// the osculating-parabola step.
inline double closest_on_parabola(const ParabolaFit& fit, const PlanePoint& p) {
  // Shift to the vertex: y = alpha t^2 + y_v with t = x - x_v.
  const double x_v = -fit.beta / (2.0 * fit.alpha);
  const double y_v = fit(x_v);
  const double a2 = fit.alpha * fit.alpha;
  // 2 alpha^2 t^3 + (1 + 2 alpha (y_v - y_p)) t - (x_p - x_v) = 0
  const double b = (1.0 + 2.0 * fit.alpha * (y_v - p.y)) / (4.0 * a2);
  const double c = -(p.x - x_v) / (4.0 * a2);
  const CubicRealRoots roots = solve_cubic(0.0, b, c);
  double best_t = roots.roots[0];
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < roots.count; ++i) {
    const double t = detail::laguerre_polish({0.0, 2.0 * b, 2.0 * c}, roots.roots[static_cast<std::size_t>(i)]);
    const double dx = x_v + t - p.x;
    const double dy = y_v + fit.alpha * t * t - p.y;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best_t = t;
    }
  }
  return x_v + best_t;
}

/// Initial (c, a, m): slope and curvature of the catenary match the parabola
/// at the projection of the centroid; c is the mean vertical offset.
inline CatenaryParams init_catenary_from_parabola(const ParabolaFit& fit, std::span<const PlanePoint> pts) {
  if (!(fit.alpha > 0.0)) throw DomainError("catenary seed needs a convex parabola");
  PlanePoint center{0.0, 0.0};
  for (const auto& p : pts) {
    center.x += p.x;
    center.y += p.y;
  }
  center.x /= static_cast<double>(pts.size());
  center.y /= static_cast<double>(pts.size());
  const double x0 = closest_on_parabola(fit, center);
  const double slope = 2.0 * fit.alpha * x0 + fit.beta;
  CatenaryParams out;
  out.a = std::sqrt(1.0 + slope * slope) / (2.0 * fit.alpha);
  out.m = x0 - out.a * std::asinh(slope);
  double sum = 0.0;
  for (const auto& p : pts) sum += p.y - out.a * std::cosh((p.x - out.m) / out.a);
  out.c = sum / static_cast<double>(pts.size());
  return out;
}

// --------------------------------------------------------------------------
// Signed distance and its derivatives

/// Scalar product of the curve normal at x_c with the vector from the curve
/// point at x_c to p. Equals the signed distance when x_c is the closest
/// abscissa.
inline double signed_distance(const CatenaryParams& k, const PlanePoint& p, double x_c) {
  if (!(k.a > 0.0)) throw DomainError("signed_distance: a must be positive");
  const double u = (x_c - k.m) / k.a;
  return k.a + ((p.x - x_c) * std::sinh(u) - (p.y - k.c)) / std::cosh(u);
}

/// Derivatives of the signed distance with respect to (c, a_e, m), a = e^a_e,
/// holding x_c fixed.
inline std::array<double, 3> signed_distance_gradient(const CatenaryParams& k, const PlanePoint& p,
                                                      double x_c) {
  if (!(k.a > 0.0)) throw DomainError("signed_distance_gradient: a must be positive");
  const double u = (x_c - k.m) / k.a;
  const double sech = 1.0 / std::cosh(u);
  const double d_m = -sech * sech * ((p.y - k.c) * std::sinh(u) + (p.x - x_c)) / k.a;
  const double d_a = u * d_m + 1.0;
  return {sech, d_a * k.a, d_m};
}

// --------------------------------------------------------------------------
// Trust region

namespace detail {

struct Residuals {
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  double sum_sq = 0.0;
};

inline Residuals evaluate_residuals(std::span<const PlanePoint> pts, const CatenaryParams& k, bool with_jacobian) {
  Residuals out;
  const auto n = static_cast<Eigen::Index>(pts.size());
  out.r.resize(n);
  if (with_jacobian) out.jac.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const PlanePoint& p = pts[static_cast<std::size_t>(i)];
    const double x_c = closest_point_plane(k.c, k.a, k.m, p).x;
    const double f = signed_distance(k, p, x_c);
    out.r(i) = f;
    out.sum_sq += f * f;
    if (with_jacobian) {
      const auto g = signed_distance_gradient(k, p, x_c);
      out.jac(i, 0) = g[0];
      out.jac(i, 1) = g[1];
      out.jac(i, 2) = g[2];
    }
  }
  return out;
}

}  // namespace detail

/// Levenberg-Marquardt minimization of the sum of squared signed distances
/// over (c, log a, m). Closest abscissas are refreshed after every step.
inline TrustRegionResult trust_region_fit(std::span<const PlanePoint> pts, const CatenaryParams& seed,
                                          const FitConfig& cfg) {
  if (pts.size() < 3) throw DomainError("trust_region_fit needs at least three points");
  if (!(seed.a > 0.0)) throw DomainError("trust_region_fit: seed a must be positive");

  Eigen::Vector3d theta(seed.c, std::log(seed.a), seed.m);
  auto params = [](const Eigen::Vector3d& t) { return CatenaryParams{t(0), std::exp(t(1)), t(2)}; };

  TrustRegionResult out;
  detail::Residuals cur = detail::evaluate_residuals(pts, params(theta), true);
  out.objective_history.push_back(cur.sum_sq);
  double lambda = 1e-3;
  double nu = 2.0;
  const double n = static_cast<double>(pts.size());

  for (int it = 0; it < cfg.max_trust_iterations; ++it) {
    out.iterations = it + 1;
    const double scale = std::max(1.0, std::exp(theta(1)));
    if (std::sqrt(cur.sum_sq / n) <= 1e-14 * scale) {
      out.converged = true;
      break;
    }
    const Eigen::Matrix3d jtj = cur.jac.transpose() * cur.jac;
    const Eigen::Vector3d g = cur.jac.transpose() * cur.r;
    // Scaled gradient test: cosine between the residual and each column.
    const double rnorm = std::sqrt(cur.sum_sq);
    double gmax = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double cn = std::sqrt(jtj(j, j));
      if (cn > 0.0) gmax = std::max(gmax, std::abs(g(j)) / (cn * rnorm));
    }
    if (gmax <= cfg.gradient_tolerance) {
      out.converged = true;
      break;
    }

    bool accepted = false;
    bool collapsed = false;
    for (int inner = 0; inner < 40 && !accepted; ++inner) {
      Eigen::Matrix3d damped = jtj;
      for (int j = 0; j < 3; ++j) damped(j, j) += lambda * std::max(jtj(j, j), 1e-12);
      const Eigen::Vector3d delta = damped.ldlt().solve(-g);
      if (!delta.allFinite()) {
        lambda *= nu;
        nu *= 2.0;
        continue;
      }
      if (delta.norm() <= 1e-15 * (theta.norm() + 1e-15)) {
        collapsed = true;
        break;
      }
      const Eigen::Vector3d cand = theta + delta;
      const double predicted = -(2.0 * delta.dot(g) + delta.dot(jtj * delta));
      detail::Residuals next;
      bool finite = std::isfinite(cand(1)) && std::exp(cand(1)) > 0.0;
      if (finite) {
        try {
          next = detail::evaluate_residuals(pts, params(cand), true);
          finite = std::isfinite(next.sum_sq);
        } catch (const Error&) {
          finite = false;
        }
      }
      const double actual = finite ? cur.sum_sq - next.sum_sq : -1.0;
      const double rho = predicted > 0.0 ? actual / predicted : (actual > 0.0 ? 1.0 : -1.0);
      if (finite && rho > 0.0 && actual > 0.0) {
        theta = cand;
        cur = std::move(next);
        out.objective_history.push_back(cur.sum_sq);
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        accepted = true;
        if (delta.norm() <= 1e-13 * (theta.norm() + 1e-13)) collapsed = true;
      } else {
        lambda *= nu;
        nu *= 2.0;
      }
    }
    if (collapsed || !accepted) {
      out.converged = collapsed;
      break;
    }
  }
  out.params = params(theta);
  out.rms = std::sqrt(cur.sum_sq / n);
  return out;
}

// --------------------------------------------------------------------------
// Full fit

namespace detail {

inline double extent_span(std::span<const PlanePoint> pts, double* lo_out = nullptr, double* hi_out = nullptr) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : pts) {
    lo = std::min(lo, p.x);
    hi = std::max(hi, p.x);
  }
  if (lo_out) *lo_out = lo;
  if (hi_out) *hi_out = hi;
  return hi - lo;
}

// Re-expresses a curve's parameters in another frame when the two planes
// are nearly the same; otherwise returns nothing.
inline std::optional<CatenaryParams> transfer_params(const CatenaryCurve& from, const PlaneFrame& to) {
  if (from.frame.axis_x.dot(to.axis_x) < 0.999 || from.frame.axis_y.dot(to.axis_y) < 0.999) return std::nullopt;
  const PlanePoint o = to.project(from.frame.origin);
  return CatenaryParams{from.c + o.y, from.a, from.m + o.x};
}

struct SingleFit {
  CatenaryCurve curve;
  TrustRegionResult tr;
  FitStatus status = FitStatus::ok;
  ParabolaVerdict verdict = ParabolaVerdict::accept;
};

inline SingleFit fit_in_frame(std::span<const Vec3> pts, const FitConfig& cfg, const CatenaryCurve& warm) {
  SingleFit out;
  std::vector<PlanePoint> q;
  q.reserve(pts.size());
  for (const Vec3& p : pts) q.push_back(warm.frame.project(p));
  out.tr = trust_region_fit(q, {warm.c, warm.a, warm.m}, cfg);
  out.curve = warm;
  out.curve.c = out.tr.params.c;
  out.curve.a = out.tr.params.a;
  out.curve.m = out.tr.params.m;
  return out;
}

inline SingleFit fit_single(std::span<const Vec3> pts, const FitConfig& cfg, const CatenaryCurve* warm) {
  SingleFit out;
  const bool fallback = cfg.trust_warm_start && warm != nullptr && warm->is_valid();
  PlaneFit plane;
  try {
    plane = fit_tilted_plane(pts, cfg);
  } catch (const DegenerateGeometry&) {
    if (fallback) return fit_in_frame(pts, cfg, *warm);
    out.status = FitStatus::degenerate_plane;
    return out;
  }
  std::vector<PlanePoint> q;
  q.reserve(pts.size());
  for (const Vec3& p : pts) q.push_back(plane.frame.project(p));

  ParabolaFit para;
  try {
    para = fit_parabola(q);
  } catch (const DegenerateGeometry&) {
    if (fallback) return fit_in_frame(pts, cfg, *warm);
    out.status = FitStatus::degenerate_plane;
    return out;
  }
  const double span = extent_span(q);
  out.verdict = validate_parabola(para, span, cfg.straight_tolerance, cfg.straight_noise_factor * para.rms);
  if (out.verdict != ParabolaVerdict::accept) {
    if (fallback) return fit_in_frame(pts, cfg, *warm);
    out.status = FitStatus::not_catenary;
    return out;
  }
  CatenaryParams seed = init_catenary_from_parabola(para, q);
  if (warm != nullptr && warm->is_valid()) {
    if (auto moved = transfer_params(*warm, plane.frame)) {
      // Keep whichever seed already fits better.
      const double s_warm = evaluate_residuals(q, *moved, false).sum_sq;
      const double s_seed = evaluate_residuals(q, seed, false).sum_sq;
      if (s_warm < s_seed) seed = *moved;
    }
  }
  out.tr = trust_region_fit(q, seed, cfg);
  out.curve.frame = plane.frame;
  out.curve.c = out.tr.params.c;
  out.curve.a = out.tr.params.a;
  out.curve.m = out.tr.params.m;
  return out;
}

// Points left after repeatedly dropping those far from a plane + parabola
// fit (beyond max(T, 3 robust sigmas)). Used when gross outliers spoil the
// seed of a robust fit.
inline std::vector<std::size_t> trim_for_seed(std::span<const Vec3> pts, const FitConfig& cfg) {
  std::vector<std::size_t> active(pts.size());
  std::iota(active.begin(), active.end(), std::size_t{0});
  std::vector<Vec3> sub;
  std::vector<double> r(pts.size()), sorted;
  for (int pass = 0; pass < 6; ++pass) {
    sub.clear();
    for (std::size_t i : active) sub.push_back(pts[i]);
    PlaneFit plane;
    ParabolaFit para;
    std::vector<PlanePoint> q;
    q.reserve(sub.size());
    try {
      plane = fit_tilted_plane(std::span<const Vec3>(sub), cfg);
      for (const Vec3& p : sub) q.push_back(plane.frame.project(p));
      para = fit_parabola(q);
    } catch (const DegenerateGeometry&) {
      break;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double off = 0.0;
      const PlanePoint u = plane.frame.project(pts[i], &off);
      r[i] = std::hypot(off, u.y - para(u.x));
    }
    sorted.clear();
    for (std::size_t i : active) sorted.push_back(r[i]);
    auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double limit = std::max(cfg.deviation_threshold, 3.0 * 1.4826 * *mid);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (r[i] <= limit) keep.push_back(i);
    if (keep.size() < std::max<std::size_t>(cfg.min_points, 3) || keep == active) break;
    active = std::move(keep);
  }
  return active;
}

}  // namespace detail

/// Plane + parabola seed + trust region + outlier removal.
/// `warm` optionally provides a previous curve used as an alternative seed.
inline FitResult robust_fit(std::span<const Vec3> pts, const FitConfig& cfg, const CatenaryCurve* warm = nullptr,
                            bool remove_outliers = true) {
  FitResult out;
  const std::size_t n = pts.size();
  if (n < std::max<std::size_t>(cfg.min_points, 3)) {
    out.status = FitStatus::too_few_points;
    return out;
  }
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), std::size_t{0});
  std::vector<Vec3> subset;
  const int rounds = remove_outliers ? std::max(1, cfg.max_outlier_rounds) : 1;
  const CatenaryCurve* seed_curve = warm;
  CatenaryCurve last;
  std::vector<double> xs;
  for (int round = 0; round < rounds; ++round) {
    subset.clear();
    for (std::size_t i : active) subset.push_back(pts[i]);
    detail::SingleFit single = detail::fit_single(subset, cfg, seed_curve);
    if (single.status != FitStatus::ok && round == 0 && remove_outliers) {
      // gross outliers may have spoiled the seed; retry on a trimmed set
      std::vector<std::size_t> trimmed = detail::trim_for_seed(pts, cfg);
      if (trimmed.size() < n && trimmed.size() >= std::max<std::size_t>(cfg.min_points, 3)) {
        active = std::move(trimmed);
        subset.clear();
        for (std::size_t i : active) subset.push_back(pts[i]);
        single = detail::fit_single(subset, cfg, seed_curve);
      }
    }
    out.status = single.status;
    out.verdict = single.verdict;
    if (single.status != FitStatus::ok) return out;
    out.curve = single.curve;
    out.iterations += single.tr.iterations;
    out.converged = single.tr.converged;
    last = single.curve;
    seed_curve = &last;

    out.distances.resize(n);
    xs.resize(n);
    std::vector<std::size_t> keep;
    keep.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const ClosestPoint3 cp = closest_point_3d(out.curve, pts[i]);
      out.distances[i] = cp.distance;
      xs[i] = cp.x;
      if (!remove_outliers || out.distances[i] <= cfg.deviation_threshold) keep.push_back(i);
    }
    if (keep == active) break;
    if (keep.size() < cfg.min_points) {
      active = std::move(keep);
      out.status = FitStatus::too_few_points;
      break;
    }
    active = std::move(keep);
  }

  out.inliers.clear();
  out.outliers.clear();
  double ss = 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < n; ++i) {
    if (!remove_outliers || out.distances[i] <= cfg.deviation_threshold) {
      out.inliers.push_back(i);
      ss += out.distances[i] * out.distances[i];
      out.max_abs_deviation = std::max(out.max_abs_deviation, out.distances[i]);
      lo = std::min(lo, xs[i]);
      hi = std::max(hi, xs[i]);
    } else {
      out.outliers.push_back(i);
    }
  }
  if (!out.inliers.empty()) {
    out.rms = std::sqrt(ss / static_cast<double>(out.inliers.size()));
    out.curve.x_min = lo;
    out.curve.x_max = hi;
  }
  if (out.status == FitStatus::ok && out.inliers.size() < cfg.min_points) out.status = FitStatus::too_few_points;
  return out;
}

inline FitResult robust_fit(std::span<const Point3> pts, const FitConfig& cfg, const CatenaryCurve* warm = nullptr) {
  std::vector<Vec3> v;
  v.reserve(pts.size());
  for (const auto& p : pts) v.push_back(p.vec());
  return robust_fit(std::span<const Vec3>(v), cfg, warm, true);
}

/// Single fit over all points, no outlier removal (used by segmentation).
inline FitResult fit_all_points(std::span<const Vec3> pts, const FitConfig& cfg, const CatenaryCurve* warm = nullptr) {
  return robust_fit(pts, cfg, warm, false);
}

}  // namespace catline
