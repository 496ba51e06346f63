#pragma once

// Basic value types shared by every stage: source points, plane frames and
// the error hierarchy.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace catline {

using Vec3 = Eigen::Vector3d;

/// A source point. `index` is the position in the (filtered) input and is
/// carried through every stage so that memberships can be reported.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  std::size_t index = 0;

  Vec3 vec() const { return {x, y, z}; }
};

/// Point in the 2D coordinate system of a catenary plane, in meters.
struct PlanePoint {
  double x = 0.0;
  double y = 0.0;
};

/// Point in the normalized frame where the catenary is y = cosh(x).
struct CanonicalPoint {
  double x = 0.0;
  double y = 0.0;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Geometry that admits no plane or curve (coincident points, rank loss).
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

/// A numeric result left the representable range.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of an operation (NaN input, a <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

inline bool is_finite(const CanonicalPoint& p) { return std::isfinite(p.x) && std::isfinite(p.y); }
inline bool is_finite(const PlanePoint& p) { return std::isfinite(p.x) && std::isfinite(p.y); }
inline bool is_finite(const Point3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

/// Orthonormal frame of a catenary plane. `axis_x` is horizontal, `axis_y`
/// points up (non-negative z component) and `normal` completes the frame.
struct PlaneFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 axis_x = Vec3::UnitX();
  Vec3 axis_y = Vec3::UnitZ();
  Vec3 normal = -Vec3::UnitY();

  /// In-plane coordinates of `p` and its signed offset along `normal`.
  PlanePoint project(const Vec3& p, double* offset = nullptr) const {
    const Vec3 d = p - origin;
    if (offset != nullptr) *offset = d.dot(normal);
    return {d.dot(axis_x), d.dot(axis_y)};
  }

  Vec3 lift(const PlanePoint& q, double offset = 0.0) const {
    return origin + q.x * axis_x + q.y * axis_y + offset * normal;
  }

  bool is_valid(double tol = 1e-12) const {
    auto unit = [tol](const Vec3& v) { return std::abs(v.norm() - 1.0) <= tol; };
    return origin.allFinite() && unit(axis_x) && unit(axis_y) && unit(normal) &&
           std::abs(axis_x.dot(axis_y)) <= tol && std::abs(axis_x.dot(normal)) <= tol &&
           std::abs(axis_y.dot(normal)) <= tol && axis_y.z() >= -tol;
  }

  /// Builds the frame for a horizontal in-plane direction and a tilt of the
  /// plane away from vertical (radians, rotation about `horizontal`).
  static PlaneFrame from_direction(const Vec3& origin, Vec3 horizontal, double tilt = 0.0) {
    horizontal.z() = 0.0;
    const double len = horizontal.norm();
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw DegenerateGeometry("plane frame: horizontal direction is degenerate");
    }
    horizontal /= len;
    // Fix the sign of the horizontal axis so identical inputs give identical frames.
    if (horizontal.x() < 0.0 || (horizontal.x() == 0.0 && horizontal.y() < 0.0)) {
      horizontal = -horizontal;
    }
    PlaneFrame f;
    f.origin = origin;
    f.axis_x = horizontal;
    // Horizontal normal: axis_x is this vector rotated clockwise by 90 degrees.
    const Vec3 n_h(-horizontal.y(), horizontal.x(), 0.0);
    f.normal = std::cos(tilt) * n_h + std::sin(tilt) * Vec3::UnitZ();
    f.normal.normalize();
    f.axis_y = f.axis_x.cross(f.normal);
    f.axis_y.normalize();
    return f;
  }
};

}  // namespace catline
