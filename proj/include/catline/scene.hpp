#pragma once

// Synthetic power line scenes with ground truth.
//
// Towers stand along a route that turns by a random angle at each tower.
// Wires hang side by side, offset along the bisector of the route so that
// consecutive spans of one wire meet at the same attachment point. Each
// wire span is an exact catenary through its two attachments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "catline/catenary.hpp"

namespace catline {

struct SceneGap {
  int wire = 0;
  int span = 0;
  double start = 0.5;   // fraction of the span where the gap is centered
  double length = 20.0; // meters along the span
};

struct SceneSpec {
  int wires = 6;
  int spans = 3;
  double span_length = 200.0;
  double separation = 2.0;
  double tower_height = 30.0;
  double height_jitter = 3.0;       // tower heights vary uniformly by +- this
  double a_min = 700.0;             // catenary parameter range per span
  double a_max = 1400.0;
  double max_turn_deg = 20.0;       // route turn at inner towers, uniform in +-
  double noise_sigma = 0.02;
  double outlier_fraction = 0.0;
  std::size_t points = 100000;      // total before gaps are cut
  std::vector<SceneGap> gaps;
  Vec3 origin{155000.0, 463000.0, 0.0};
  std::uint64_t seed = 1;
};

struct TruthCurve {
  int wire = 0;
  int span = 0;
  CatenaryCurve curve;
};

struct Scene {
  std::vector<Vec3> points;
  std::vector<std::int64_t> source;  // index into curves, -1 for outliers
  std::vector<TruthCurve> curves;
};

/// Catenary with parameter a through (0, z0) and (length, z1) of its plane.
inline CatenaryCurve catenary_through(const PlaneFrame& frame, double length, double z0, double z1, double a) {
  CatenaryCurve k;
  k.frame = frame;
  k.a = a;
  const double h = z1 - z0;
  k.m = 0.5 * length - a * std::asinh(h / (2.0 * a * std::sinh(length / (2.0 * a))));
  k.c = z0 - a * std::cosh(k.m / a);
  k.x_min = 0.0;
  k.x_max = length;
  return k;
}

inline void validate(const SceneSpec& s) {
  if (s.wires < 1 || s.spans < 1) throw std::invalid_argument("scene: need at least one wire and one span");
  if (!(s.span_length > 0) || !(s.separation > 0) || !(s.a_min > 0) || s.a_max < s.a_min)
    throw std::invalid_argument("scene: lengths and sag parameters must be positive");
  if (s.noise_sigma < 0 || s.outlier_fraction < 0 || s.outlier_fraction >= 1)
    throw std::invalid_argument("scene: noise must be >= 0 and outlier fraction in [0, 1)");
  if (std::abs(s.max_turn_deg) >= 60.0) throw std::invalid_argument("scene: turn angle must stay below 60 degrees");
  for (const auto& g : s.gaps)
    if (g.wire < 0 || g.wire >= s.wires || g.span < 0 || g.span >= s.spans || g.length < 0)
      throw std::invalid_argument("scene: gap refers to a missing wire or span");
}

/// Deterministic for a fixed spec. Points are shuffled so that their order
/// carries no membership information.
inline Scene generate_scene(const SceneSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  // route
  const int towers = spec.spans + 1;
  std::vector<Vec3> tower(static_cast<std::size_t>(towers));
  std::vector<double> heading(static_cast<std::size_t>(spec.spans));
  double h = uniform(0.0, 2.0 * std::numbers::pi);
  tower[0] = spec.origin;
  for (int k = 0; k < spec.spans; ++k) {
    if (k > 0) h += uniform(-spec.max_turn_deg, spec.max_turn_deg) * std::numbers::pi / 180.0;
    heading[static_cast<std::size_t>(k)] = h;
    tower[static_cast<std::size_t>(k) + 1] =
        tower[static_cast<std::size_t>(k)] + spec.span_length * Vec3(std::cos(h), std::sin(h), 0.0);
  }
  std::vector<double> height(static_cast<std::size_t>(towers));
  for (auto& z : height) z = spec.origin.z() + spec.tower_height + uniform(-spec.height_jitter, spec.height_jitter);

  // attachment of wire w at tower k
  auto attach = [&](int w, int k) {
    const auto dir = [&](int s) {
      const double hh = heading[static_cast<std::size_t>(s)];
      return Vec3(std::cos(hh), std::sin(hh), 0.0);
    };
    Vec3 d = k == 0 ? dir(0) : k == spec.spans ? dir(spec.spans - 1) : (dir(k - 1) + dir(k)).normalized();
    double stretch = 1.0;
    if (k > 0 && k < spec.spans) stretch = 1.0 / d.dot(dir(k));
    const Vec3 side(-d.y(), d.x(), 0.0);
    const double off = (w - 0.5 * (spec.wires - 1)) * spec.separation * stretch;
    Vec3 p = tower[static_cast<std::size_t>(k)] + off * side;
    p.z() = height[static_cast<std::size_t>(k)];
    return p;
  };

  Scene scene;
  for (int k = 0; k < spec.spans; ++k) {
    const double a_span = uniform(spec.a_min, spec.a_max);
    for (int w = 0; w < spec.wires; ++w) {
      const Vec3 p0 = attach(w, k), p1 = attach(w, k + 1);
      Vec3 horiz = p1 - p0;
      horiz.z() = 0.0;
      const double len = horiz.norm();
      PlaneFrame f;
      f.origin = Vec3(p0.x(), p0.y(), 0.0);
      f.axis_x = horiz / len;
      f.normal = Vec3(-f.axis_x.y(), f.axis_x.x(), 0.0);
      f.axis_y = f.axis_x.cross(f.normal);
      const double a = a_span * uniform(0.98, 1.02);
      scene.curves.push_back({w, k, catenary_through(f, len, p0.z(), p1.z(), a)});
    }
  }

  const std::size_t n_curves = scene.curves.size();
  const auto n_outliers = static_cast<std::size_t>(std::llround(static_cast<double>(spec.points) * spec.outlier_fraction));
  const std::size_t per_curve = (spec.points - n_outliers) / n_curves;
  std::normal_distribution<double> noise(0.0, 1.0);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (std::size_t ci = 0; ci < n_curves; ++ci) {
    const TruthCurve& t = scene.curves[ci];
    const CatenaryCurve& k = t.curve;
    const double len = k.x_max;
    for (std::size_t i = 0; i < per_curve; ++i) {
      const double x = uniform(0.0, len);
      const double e_in = spec.noise_sigma * noise(rng), e_out = spec.noise_sigma * noise(rng);
      bool cut = false;
      for (const auto& g : spec.gaps)
        cut = cut || (g.wire == t.wire && g.span == t.span && std::abs(x - g.start * len) <= 0.5 * g.length);
      if (cut) continue;
      const double u = (x - k.m) / k.a;
      // unit in-plane normal of the curve at x is (-tanh u, sech u)
      const PlanePoint q{x - std::tanh(u) * e_in, evaluate(k, x) + e_in / std::cosh(u)};
      const Vec3 p = k.frame.lift(q, e_out);
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      scene.points.push_back(p);
      scene.source.push_back(static_cast<std::int64_t>(ci));
    }
  }
  lo.array() -= 5.0;
  hi.array() += 5.0;
  for (std::size_t i = 0; i < n_outliers; ++i) {
    scene.points.emplace_back(uniform(lo.x(), hi.x()), uniform(lo.y(), hi.y()), uniform(lo.z(), hi.z()));
    scene.source.push_back(-1);
  }

  // Fisher-Yates with the scene generator, so the order is part of the seed
  for (std::size_t i = scene.points.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(scene.points[i - 1], scene.points[j]);
    std::swap(scene.source[i - 1], scene.source[j]);
  }
  return scene;
}

}  // namespace catline
