// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every check compares against an independent reference
// (brute-force search, quadrature, enumeration, Prim, generator truth).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "catline/catenary.hpp"
#include "catline/fit.hpp"
#include "catline/mst.hpp"
#include "catline/oracle.hpp"
#include "catline/pipeline.hpp"
#include "catline/scene.hpp"
#include "catline/segment.hpp"
#include "synthetic.hpp"

using namespace catline;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s %2d %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string num(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// ------------------------------------------------------------ closest point

struct Sweep {
  std::vector<CanonicalPoint> pts;
  std::vector<OracleResult> ref;
};

const Sweep& sweep() {
  static const Sweep s = [] {
    Sweep out;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ux(-10.0, 10.0), uy(-1.0, 20.0);
    for (int i = 0; i < 100000; ++i) out.pts.push_back({ux(rng), uy(rng)});
    for (const auto& p : out.pts) out.ref.push_back(oracle_closest_canonical(p));
    return out;
  }();
  return s;
}

void closest_point_correctness() {
  const Sweep& s = sweep();
  double worst = 0.0, elapsed = 0.0;
  for (auto method : {StepMethod::circle, StepMethod::parabola}) {
    std::vector<CanonicalPoint> got(s.pts.size());
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < s.pts.size(); ++i) got[i] = closest_point_canonical(s.pts[i], method).point;
    elapsed = std::max(elapsed, seconds_since(t0));
    for (std::size_t i = 0; i < s.pts.size(); ++i) {
      const double d = std::hypot(s.pts[i].x - got[i].x, s.pts[i].y - got[i].y);
      const double ref = s.ref[i].distance;
      worst = std::max(worst, std::abs(d - ref) / std::max(ref, 1e-12));
    }
  }
  report(1, "closest point vs oracle", worst <= 1e-9 && elapsed < 5.0,
         "max relative distance error " + num(worst) + ", slowest method " + num(elapsed) + " s for 1e5 points");
}

void three_iterations() {
  const Sweep& s = sweep();
  std::string detail;
  bool ok = true;
  for (auto method : {StepMethod::circle, StepMethod::parabola}) {
    std::size_t good = 0;
    for (std::size_t i = 0; i < s.pts.size(); ++i) {
      const CanonicalPoint q{std::abs(s.pts[i].x), s.pts[i].y};
      const double ref = std::abs(s.ref[i].x);
      double x = initial_guess(q, locate_normal_partition(q));
      for (int it = 0; it < 3; ++it) x = closest_point_step(method, q, x);
      if (std::abs(x - ref) <= 1e-6 * std::max(1.0, ref)) ++good;
    }
    const double frac = static_cast<double>(good) / static_cast<double>(s.pts.size());
    ok = ok && frac >= 0.99;
    detail += std::string(method == StepMethod::circle ? "circle " : ", parabola ") + num(100.0 * frac, 6) + "%";
  }
  report(2, "three iterations suffice", ok, detail + " within 1e-6 after 3 steps");
}

void figure_pinpoint() {
  const CanonicalPoint p{3.5, 2.5};
  double err = 0.0;
  for (auto method : {StepMethod::circle, StepMethod::parabola}) {
    const auto r = closest_point_canonical(p, method);
    err = std::max({err, std::abs(r.point.x - 1.79236504588954104), std::abs(r.point.y - 3.08510016406874144)});
  }
  const double x1 = circle_step(p, 1.13);
  const double step_err = std::max(std::abs(x1 - 1.70252729182797236), std::abs(std::cosh(x1) - 2.83501078149264352));
  report(3, "worked example", err <= 1e-9 && step_err <= 1e-9,
         "converged point error " + num(err) + ", first circle step error " + num(step_err));
}

void gradient_check() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> ua(0.5, 200.0), ux(-2.0, 2.0), uy(-1.0, 4.0);
  double worst = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const CatenaryParams k{ux(rng) * 5.0, ua(rng), ux(rng) * 5.0};
    const PlanePoint p{k.m + k.a * ux(rng), k.c + k.a * (std::cosh(ux(rng)) + uy(rng))};
    // F with the closest point recomputed at every perturbed parameter
    auto F = [&](double c, double ae, double m) {
      const CatenaryParams q{c, std::exp(ae), m};
      return signed_distance(q, p, closest_point_plane(q.c, q.a, q.m, p).x);
    };
    const auto g = signed_distance_gradient(k, p, closest_point_plane(k.c, k.a, k.m, p).x);
    const double ae = std::log(k.a);
    const double h[3] = {1e-6 * k.a, 1e-6, 1e-6 * k.a};
    const double fd[3] = {(F(k.c + h[0], ae, k.m) - F(k.c - h[0], ae, k.m)) / (2 * h[0]),
                          (F(k.c, ae + h[1], k.m) - F(k.c, ae - h[1], k.m)) / (2 * h[1]),
                          (F(k.c, ae, k.m + h[2]) - F(k.c, ae, k.m - h[2])) / (2 * h[2])};
    const double scale = std::max({1.0, std::abs(g[0]), std::abs(g[1]), std::abs(g[2])});
    for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(fd[j] - g[j]) / scale);
  }
  report(4, "gradient vs finite differences", worst <= 1e-5, "max relative error " + num(worst) + " over 1000 configs");
}

// ------------------------------------------------------------ fitting

void fit_round_trip() {
  double worst = 0.0;
  bool all_ok = true;
  for (double a : {1.0, 5.0, 50.0, 500.0})
    for (double span : {0.5, 1.0, 2.0, 4.0}) {
      test::SyntheticCurve s{.a = a, .span = span * a, .offset = 0.3 * span * a, .heading = 0.7};
      const auto pts = test::sample_curve(s, 200);
      FitConfig cfg;
      cfg.deviation_threshold = 0.8 * std::max(1.0, a / 50.0);
      const FitResult r = robust_fit(std::span<const Vec3>(pts), cfg);
      if (!r.ok()) {
        all_ok = false;
        continue;
      }
      const auto k = test::params_in_frame(s, r.curve.frame);
      worst = std::max({worst, std::abs(r.curve.a - k.a) / k.a, std::abs(r.curve.m - k.m) / k.a,
                        std::abs(r.curve.c - k.c) / k.a});
    }
  const double sigma = 0.02;
  double lo = 1e9, hi = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    test::SyntheticCurve s{.a = 150.0, .span = 120.0, .heading = 0.3 * static_cast<double>(seed)};
    const auto pts = test::sample_curve(s, 500, sigma, seed);
    const FitResult r = robust_fit(std::span<const Vec3>(pts), FitConfig{});
    if (!r.ok()) {
      all_ok = false;
      continue;
    }
    lo = std::min(lo, r.rms);
    hi = std::max(hi, r.rms);
  }
  report(5, "fit round trip", all_ok && worst <= 1e-6 && lo >= 0.8 * sigma && hi <= 1.2 * sigma,
         "noiseless max relative error " + num(worst) + ", noisy rms range [" + num(lo) + ", " + num(hi) + "] m");
}

double param_error(const FitResult& r, const test::SyntheticCurve& s) {
  const auto k = test::params_in_frame(s, r.curve.frame);
  return std::max({std::abs(r.curve.a - k.a) / k.a, std::abs(r.curve.m - k.m) / k.a, std::abs(r.curve.c - k.c) / k.a});
}

void robustness() {
  const double T = 0.8, sigma = 0.02;
  bool ok = true;
  double worst_ratio = 0.0;
  std::size_t missed = 0, false_flags = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    test::SyntheticCurve s{.a = 100.0 + 40.0 * static_cast<double>(seed), .span = 150.0,
                           .heading = 0.4 * static_cast<double>(seed)};
    const auto clean = test::sample_curve(s, 380, sigma, seed);
    const FitResult base = robust_fit(std::span<const Vec3>(clean), FitConfig{});
    auto pts = clean;
    const auto far = test::outliers_beyond(s, 20, 3.0 * T, 100 + seed);
    pts.insert(pts.end(), far.begin(), far.end());
    const FitResult r = robust_fit(std::span<const Vec3>(pts), FitConfig{});
    if (!base.ok() || !r.ok()) {
      ok = false;
      continue;
    }
    std::vector<char> flagged(pts.size(), 0);
    for (std::size_t i : r.outliers) flagged[i] = 1;
    for (std::size_t i = clean.size(); i < pts.size(); ++i) missed += !flagged[i];
    for (std::size_t i = 0; i < clean.size(); ++i) false_flags += flagged[i];
    worst_ratio = std::max(worst_ratio, param_error(r, s) / std::max(param_error(base, s), 1e-12));
  }
  ok = ok && missed == 0 && worst_ratio <= 5.0;
  report(6, "robustness to outliers", ok,
         std::to_string(missed) + " of 200 outliers missed, " + std::to_string(false_flags) +
             " inliers flagged, worst error ratio to outlier-free fit " + num(worst_ratio));
}

// ------------------------------------------------------------ segmentation

struct SpanSpec {
  Vec3 start;
  double heading;
  double length;
  double a;
};

Vec3 span_point(const SpanSpec& s, double t) {
  const Vec3 d(std::cos(s.heading), std::sin(s.heading), 0.0);
  const double half = 0.5 * s.length;
  return s.start + t * d + Vec3(0, 0, s.a * (std::cosh((t - half) / s.a) - std::cosh(half / s.a)));
}

std::vector<std::vector<Vec3>> spans_to_cps(const std::vector<SpanSpec>& spans, int per_span, int per_cp,
                                            double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<std::vector<Vec3>> out;
  for (const auto& s : spans) {
    const int n = per_span * per_cp;
    for (int c = 0; c < per_span; ++c) {
      std::vector<Vec3> cp;
      for (int k = 0; k < per_cp; ++k) {
        Vec3 p = span_point(s, s.length * (c * per_cp + k + 0.5) / n);
        if (sigma > 0) p += Vec3(g(rng), g(rng), g(rng));
        cp.push_back(p);
      }
      out.push_back(std::move(cp));
    }
  }
  return out;
}

std::vector<SpanSpec> two_spans(double a1, double a2, double turn_deg) {
  SpanSpec s1{{0, 0, 30}, 0.0, 100.0, a1};
  SpanSpec s2{span_point(s1, s1.length), turn_deg * std::numbers::pi / 180.0, 110.0, a2};
  return {s1, s2};
}

double exhaustive_best(const std::vector<std::vector<Vec3>>& cps, const SegmentPenaltyConfig& cfg) {
  const std::size_t n = cps.size();
  std::vector<std::vector<double>> pen(n + 1, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j <= n; ++j) {
      std::vector<Vec3> flat;
      for (std::size_t k = i; k < j; ++k) flat.insert(flat.end(), cps[k].begin(), cps[k].end());
      pen[i][j] = partition_penalty(flat, cfg);
    }
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    double s = 0.0;
    std::size_t start = 0;
    for (std::size_t b = 1; b <= n; ++b)
      if (b == n || (mask >> (b - 1)) & 1u) {
        s += pen[start][b] + cfg.partition_log_prob;
        start = b;
      }
    best = std::max(best, s);
  }
  return best;
}

void dp_optimality() {
  int mismatches = 0, instances = 0;
  for (int inst = 0; inst < 40; ++inst) {
    SegmentPenaltyConfig cfg;
    cfg.deviation_threshold = inst % 2 ? 0.3 : 0.8;
    std::vector<std::vector<Vec3>> cps;
    if (inst % 4 == 3) {
      cps = spans_to_cps({{{0, 0, 0}, 0.1 * inst, 60.0, 50.0}}, 8 + inst % 7, 3, 0.4, 300 + inst);
    } else {
      const int per_span = 3 + inst % 5;
      cps = spans_to_cps(two_spans(40.0 + 5.0 * (inst % 9), 90.0, 25.0 + inst % 20), per_span, 3 + inst % 3, 0.05,
                         200 + inst);
    }
    if (cps.size() > 14) cps.resize(14);
    const double oracle = exhaustive_best(cps, cfg);
    const Division d = segment_polyline(std::span<const std::vector<Vec3>>(cps), cfg);
    const bool same = (std::isinf(oracle) && std::isinf(d.total_score)) ||
                      std::abs(d.total_score - oracle) <= 1e-9 * std::max(1.0, std::abs(oracle));
    mismatches += !same;
    ++instances;
  }
  int junction_misses = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto cps = spans_to_cps(two_spans(120.0 + 10.0 * seed, 220.0, 20.0 + 5.0 * seed), 60, 3, 0.02, seed);
    const Division d = segment_polyline(std::span<const std::vector<Vec3>>(cps), SegmentPenaltyConfig{});
    junction_misses += !(d.cut_indices.size() == 1 && std::abs(static_cast<double>(d.cut_indices[0]) - 60.0) <= 2.0);
  }
  report(7, "segmentation optimality", mismatches == 0 && junction_misses == 0,
         std::to_string(mismatches) + " of " + std::to_string(instances) + " score mismatches vs enumeration, " +
             std::to_string(junction_misses) + " of 6 junctions off by more than 2");
}

// ------------------------------------------------------------ spanning tree

struct Prim {
  double weight = 0.0;
  std::vector<std::size_t> component;
};

Prim prim(const std::vector<Vec3>& pts, double gap) {
  const std::size_t n = pts.size();
  Prim r;
  r.component.assign(n, n);
  std::vector<double> key(n);
  std::vector<char> in(n, 0);
  for (std::size_t root = 0; root < n; ++root) {
    if (in[root]) continue;
    std::fill(key.begin(), key.end(), std::numeric_limits<double>::infinity());
    key[root] = 0.0;
    for (;;) {
      std::size_t best = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!in[i] && key[i] <= gap && (best == n || key[i] < key[best])) best = i;
      if (best == n) break;
      in[best] = 1;
      r.weight += key[best];
      r.component[best] = root;
      for (std::size_t j = 0; j < n; ++j)
        if (!in[j]) key[j] = std::min(key[j], (pts[j] - pts[best]).norm());
    }
  }
  return r;
}

void mst_oracle() {
  std::mt19937_64 rng(808);
  int bad = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 50 + static_cast<std::size_t>(inst) * 9 + static_cast<std::size_t>(inst % 7);  // up to ~950
    std::uniform_real_distribution<double> u(0.0, 30.0 + inst % 30);
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), 0.3 * u(rng));
    if (inst % 5 == 0)
      for (auto& p : pts) p = p.array().round();
    const double gap = 1.5 + inst % 4;
    const WireGraph g = build_mst(pts, gap);
    const Prim o = prim(pts, gap);
    UnionFind uf(n);
    for (const auto& e : g.edges) uf.unite(e.i, e.j);
    std::map<std::size_t, std::size_t> smallest;
    bool same = std::abs(g.total_weight() - o.weight) <= 1e-9 * (1.0 + o.weight);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t rep = smallest.try_emplace(uf.find(i), i).first->second;
      same = same && rep == o.component[i];
    }
    bad += !same;
  }
  report(8, "spanning forest vs Prim", bad == 0, std::to_string(bad) + " of 100 instances differ");
}

// ------------------------------------------------------------ end to end

double max_chord_deviation(const CatenaryCurve& k, const std::vector<Vec3>& v) {
  double worst = 0.0;
  for (std::size_t s = 0; s + 1 < v.size(); ++s) {
    const double x0 = (v[s] - k.frame.origin).dot(k.frame.axis_x);
    const double x1 = (v[s + 1] - k.frame.origin).dot(k.frame.axis_x);
    const Vec3 d = v[s + 1] - v[s];
    for (int i = 0; i <= 64; ++i) {
      const double x = x0 + (x1 - x0) * i / 64.0;
      const Vec3 p = k.frame.origin + x * k.frame.axis_x + (k.c + k.a * std::cosh((x - k.m) / k.a)) * k.frame.axis_y;
      const double t = std::clamp((p - v[s]).dot(d) / d.squaredNorm(), 0.0, 1.0);
      worst = std::max(worst, (p - (v[s] + t * d)).norm());
    }
  }
  return worst;
}

PipelineResult scene_result;
Scene scene;

void end_to_end() {
  SceneSpec spec;
  spec.points = 1000000;
  spec.seed = 1;
  scene = generate_scene(spec);
  PipelineConfig cfg;
  const auto t0 = Clock::now();
  scene_result = run_pipeline(scene.points, cfg);
  const double elapsed = seconds_since(t0);

  const auto& wires = scene_result.wires;
  std::vector<std::int64_t> truth;
  for (const auto& w : wires) {
    std::map<std::int64_t, std::size_t> votes;
    for (std::size_t i : w.members) ++votes[scene.source[i]];
    auto best = std::max_element(votes.begin(), votes.end(), [](auto& a, auto& b) { return a.second < b.second; });
    truth.push_back(best == votes.end() ? -1 : best->first);
  }
  auto sorted = truth;
  std::sort(sorted.begin(), sorted.end());
  const bool distinct = std::unique(sorted.begin(), sorted.end()) == sorted.end() &&
                        std::find(truth.begin(), truth.end(), -1) == truth.end();

  double worst_rms = 0.0;
  std::size_t correct = 0, wire_points = 0, assigned = 0;
  for (std::size_t w = 0; w < wires.size(); ++w) {
    if (truth[w] < 0) continue;
    const auto d = oracle_closest(scene.curves[static_cast<std::size_t>(truth[w])].curve, wires[w].vertices);
    double ss = 0.0;
    for (double v : d) ss += v * v;
    worst_rms = std::max(worst_rms, std::sqrt(ss / static_cast<double>(d.size())));
    for (std::size_t i : wires[w].members) correct += scene.source[i] == truth[w];
    assigned += wires[w].members.size();
  }
  for (auto s : scene.source) wire_points += s >= 0;
  // precision: members that belong to their wire; recall: wire points that
  // ended up in the right wire
  const double precision = assigned ? static_cast<double>(correct) / static_cast<double>(assigned) : 0.0;
  const double recall = static_cast<double>(correct) / static_cast<double>(wire_points);
  const bool ok = wires.size() == 18 && distinct && worst_rms <= 0.05 && precision >= 0.999 && recall >= 0.999 &&
                  elapsed < 60.0 && scene_result.report.conserved();
  report(9, "end-to-end scene", ok,
         std::to_string(wires.size()) + " polylines, worst rms " + num(worst_rms) + " m, membership precision " +
             num(100.0 * precision, 6) + "% recall " + num(100.0 * recall, 6) + "%, " + num(elapsed) + " s on " +
             std::to_string(scene.points.size()) + " points");
}

void densification() {
  const double tol = PipelineConfig{}.output_line_tolerance;
  double worst = 0.0;
  std::size_t chords = 0;
  for (const auto& w : scene_result.wires) {
    worst = std::max(worst, max_chord_deviation(w.curve, w.vertices));
    chords += w.vertices.size() - 1;
  }
  // plus steep curves the scene never produces
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<double> ua(2.0, 400.0), uo(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    test::SyntheticCurve s{.a = ua(rng), .span = 0.0, .heading = 3.0 * uo(rng), .tilt = 0.2 * uo(rng)};
    s.span = std::min(4.0 * s.a, 300.0);
    s.offset = 0.5 * s.span * uo(rng);
    const CatenaryCurve k = s.curve();
    const auto v = densify(k, tol);
    worst = std::max(worst, max_chord_deviation(k, v));
    chords += v.size() - 1;
  }
  report(10, "densification tolerance", !scene_result.wires.empty() && worst <= tol,
         "max sampled chord deviation " + num(worst, 6) + " m over " + std::to_string(chords) + " chords");
}

// ------------------------------------------------------------ appendix properties

void intercept_properties() {
  bool even = true, increasing = true;
  double prev = normal_axis_intercept(0.0);
  for (int i = 1; i <= 10000; ++i) {
    const double x = 20.0 * i / 10000.0;
    const double y = normal_axis_intercept(x);
    even = even && y == normal_axis_intercept(-x);
    increasing = increasing && y > prev;
    prev = y;
  }
  const double near0 = std::abs(normal_axis_intercept(1e-12) - 2.0);
  report(11, "normal intercept properties", even && increasing && near0 <= 1e-9,
         std::string("even ") + (even ? "yes" : "no") + ", strictly increasing " + (increasing ? "yes" : "no") +
             ", |f(1e-12) - 2| = " + num(near0));
}

void parabola_length() {
  std::mt19937_64 rng(1212);
  std::uniform_real_distribution<double> ux(-5.0, 5.0), ua(-3.0, 3.0), ub(-5.0, 5.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double x0 = ux(rng), x1 = ux(rng), b = ub(rng);
    double a = ua(rng);
    if (std::abs(a) < 1e-3) a = std::copysign(1e-3, a);
    auto f = [a, b](double t) {
      const double s = 2.0 * a * t + b;
      return std::sqrt(1.0 + s * s);
    };
    const double ref = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, x0, x1, 15, 1e-15);
    if (ref == 0.0) continue;
    worst = std::max(worst, std::abs(parabola_arc_length(x0, x1, a, b) - ref) / std::abs(ref));
  }
  report(12, "parabola arc length vs quadrature", worst <= 1e-10, "max relative error " + num(worst));
}

void run(const std::function<void()>& f, int id, const char* name) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main() {
  run(closest_point_correctness, 1, "closest point vs oracle");
  run(three_iterations, 2, "three iterations suffice");
  run(figure_pinpoint, 3, "worked example");
  run(gradient_check, 4, "gradient vs finite differences");
  run(fit_round_trip, 5, "fit round trip");
  run(robustness, 6, "robustness to outliers");
  run(dp_optimality, 7, "segmentation optimality");
  run(mst_oracle, 8, "spanning forest vs Prim");
  run(end_to_end, 9, "end-to-end scene");
  run(densification, 10, "densification tolerance");
  run(intercept_properties, 11, "normal intercept properties");
  run(parabola_length, 12, "parabola arc length vs quadrature");
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
