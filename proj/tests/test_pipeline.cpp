#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "catline/oracle.hpp"
#include "catline/pipeline.hpp"
#include "catline/scene.hpp"

using namespace catline;

namespace {

// Height of the curve at plane abscissa x, written out directly.
Vec3 on_curve(const CatenaryCurve& k, double x) {
  const double y = k.c + k.a * std::cosh((x - k.m) / k.a);
  return k.frame.origin + x * k.frame.axis_x + y * k.frame.axis_y;
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 d = b - a;
  const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * d)).norm();
}

// Largest distance from densely sampled curve points to the polyline chord
// covering them.
double max_chord_deviation(const CatenaryCurve& k, const std::vector<Vec3>& v) {
  double worst = 0.0;
  for (std::size_t s = 0; s + 1 < v.size(); ++s) {
    const double x0 = (v[s] - k.frame.origin).dot(k.frame.axis_x);
    const double x1 = (v[s + 1] - k.frame.origin).dot(k.frame.axis_x);
    for (int i = 0; i <= 64; ++i) {
      const Vec3 p = on_curve(k, x0 + (x1 - x0) * i / 64.0);
      worst = std::max(worst, segment_distance(p, v[s], v[s + 1]));
    }
  }
  return worst;
}

SceneSpec small_scene() {
  SceneSpec s;
  s.points = 30000;
  s.seed = 21;
  return s;
}

// Majority truth curve of each wire's members.
std::vector<std::int64_t> match_truth(const PipelineResult& r, const Scene& sc) {
  std::vector<std::int64_t> out;
  for (const auto& w : r.wires) {
    std::map<std::int64_t, std::size_t> votes;
    for (std::size_t i : w.members) ++votes[sc.source[i]];
    out.push_back(std::max_element(votes.begin(), votes.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; })
                      ->first);
  }
  return out;
}

}  // namespace

TEST(Densify, SampledDeviationWithinTolerance) {
  CatenaryCurve k;
  k.frame.origin = Vec3(10, 20, 30);
  k.frame.axis_x = Vec3(0.6, 0.8, 0);
  k.frame.normal = Vec3(-0.8, 0.6, 0);
  k.frame.axis_y = k.frame.axis_x.cross(k.frame.normal);
  k.a = 10.0;
  k.c = -10.0;
  k.m = 0.0;
  k.x_min = -50.0;
  k.x_max = 50.0;
  const auto v = densify(k, 0.01);
  EXPECT_LE(max_chord_deviation(k, v), 0.01);
  EXPECT_EQ(v.front(), on_curve(k, -50.0));
  EXPECT_LE((v.back() - on_curve(k, 50.0)).norm(), 1e-9);
}

TEST(Densify, HalvedToleranceScalesBySqrtTwo) {
  CatenaryCurve k;
  k.frame.axis_x = Vec3::UnitX();
  k.frame.normal = -Vec3::UnitY();
  k.frame.axis_y = Vec3::UnitZ();
  k.a = 40.0;
  k.c = -40.0;
  k.x_min = -60.0;
  k.x_max = 80.0;
  const double n1 = static_cast<double>(densify(k, 0.01).size() - 1);
  const double n2 = static_cast<double>(densify(k, 0.005).size() - 1);
  EXPECT_NEAR(n2 / n1, std::sqrt(2.0), 0.05);
}

TEST(Densify, FlatCurveFewVertices) {
  CatenaryCurve k;
  k.frame.axis_x = Vec3::UnitX();
  k.frame.normal = -Vec3::UnitY();
  k.frame.axis_y = Vec3::UnitZ();
  k.a = 1e6;
  k.c = -1e6;
  k.x_min = 0;
  k.x_max = 200;
  // sag over the whole span is 200^2 / 8e6 = 5 mm
  EXPECT_EQ(densify(k, 0.01).size(), 2u);
  EXPECT_THROW(densify(k, 0.0), std::invalid_argument);
}

TEST(Scene, Deterministic) {
  SceneSpec s = small_scene();
  s.outlier_fraction = 0.01;
  const Scene a = generate_scene(s), b = generate_scene(s);
  ASSERT_EQ(a.points.size(), b.points.size());
  EXPECT_EQ(std::memcmp(a.points.data(), b.points.data(), a.points.size() * sizeof(Vec3)), 0);
  EXPECT_EQ(a.source, b.source);
  s.seed = 22;
  EXPECT_NE(generate_scene(s).points[0], a.points[0]);
}

TEST(Scene, NoiselessPointsLieOnTheirSource) {
  SceneSpec s;
  s.points = 3000;
  s.noise_sigma = 0.0;
  const Scene sc = generate_scene(s);
  ASSERT_EQ(sc.curves.size(), 18u);
  for (std::size_t i = 0; i < sc.points.size(); i += 7) {
    const Vec3 p = sc.points[i];
    const double d = oracle_closest(sc.curves[static_cast<std::size_t>(sc.source[i])].curve, std::span<const Vec3>(&p, 1))[0];
    EXPECT_LE(d, 1e-6);
  }
}

TEST(Scene, SpansMeetAtTowersAndWiresKeepSeparation) {
  SceneSpec s;
  s.points = 1800;
  const Scene sc = generate_scene(s);
  for (int w = 0; w < s.wires; ++w)
    for (int k = 0; k + 1 < s.spans; ++k) {
      const auto& a = sc.curves[static_cast<std::size_t>(k * s.wires + w)].curve;
      const auto& b = sc.curves[static_cast<std::size_t>((k + 1) * s.wires + w)].curve;
      EXPECT_LE((on_curve(a, a.x_max) - on_curve(b, b.x_min)).norm(), 1e-6);
    }
  // horizontal distance between neighbours at mid-span
  for (int w = 0; w + 1 < s.wires; ++w) {
    const auto& a = sc.curves[static_cast<std::size_t>(w)].curve;
    const auto& b = sc.curves[static_cast<std::size_t>(w + 1)].curve;
    Vec3 d = on_curve(a, 0.5 * a.x_max) - on_curve(b, 0.5 * b.x_max);
    d.z() = 0;
    EXPECT_NEAR(d.norm(), s.separation, 0.05);
  }
}

TEST(Scene, InvalidSpecRejected) {
  SceneSpec s;
  s.gaps.push_back({7, 0, 0.5, 20});
  EXPECT_THROW(generate_scene(s), std::invalid_argument);
}

TEST(Pipeline, EmptyInput) {
  const PipelineResult r = run_pipeline({}, PipelineConfig{});
  EXPECT_TRUE(r.wires.empty());
  EXPECT_TRUE(r.report.conserved());
}

TEST(Pipeline, InvalidConfigRejected) {
  PipelineConfig c;
  c.output_line_tolerance = 1.0;
  EXPECT_THROW(run_pipeline({}, c), std::invalid_argument);
}

TEST(Pipeline, SixWiresThreeSpans) {
  const Scene sc = generate_scene(small_scene());
  const PipelineResult r = run_pipeline(sc.points, PipelineConfig{});
  ASSERT_EQ(r.wires.size(), 18u);
  EXPECT_TRUE(r.report.conserved());
  EXPECT_EQ(r.report.input_points, sc.points.size());
  const auto truth = match_truth(r, sc);
  std::vector<std::int64_t> sorted = truth;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::unique(sorted.begin(), sorted.end()) - sorted.begin(), 18);
  for (std::size_t w = 0; w < r.wires.size(); ++w) {
    const CatenaryCurve& gt = sc.curves[static_cast<std::size_t>(truth[w])].curve;
    const auto d = oracle_closest(gt, r.wires[w].vertices);
    double ss = 0.0;
    for (double v : d) ss += v * v;
    EXPECT_LE(std::sqrt(ss / static_cast<double>(d.size())), 0.05) << "wire " << w;
    std::size_t right = 0;
    for (std::size_t i : r.wires[w].members) right += sc.source[i] == truth[w];
    EXPECT_GE(static_cast<double>(right), 0.995 * static_cast<double>(r.wires[w].members.size()));
    EXPECT_LE(max_chord_deviation(r.wires[w].curve, r.wires[w].vertices), 0.01);
  }
}

TEST(Pipeline, LargeGapSplitsWire) {
  SceneSpec s = small_scene();
  s.gaps.push_back({2, 1, 0.5, 20.0});
  const Scene sc = generate_scene(s);
  const PipelineResult r = run_pipeline(sc.points, PipelineConfig{});
  EXPECT_EQ(r.wires.size(), 19u);
  const auto truth = match_truth(r, sc);
  EXPECT_EQ(std::count(truth.begin(), truth.end(), 1 * s.wires + 2), 2);
  EXPECT_TRUE(r.report.conserved());
}

TEST(Pipeline, ShortWireDissolved) {
  SceneSpec s;
  s.wires = 1;
  s.spans = 1;
  s.span_length = 4.0;
  s.points = 400;
  const Scene sc = generate_scene(s);
  const PipelineResult r = run_pipeline(sc.points, PipelineConfig{});
  EXPECT_TRUE(r.wires.empty());
  std::size_t rejected = 0;
  for (const auto& [reason, n] : r.report.rejections) rejected += n;
  EXPECT_GE(rejected, 1u);
  EXPECT_EQ(r.unassigned.size(), sc.points.size());
  EXPECT_TRUE(r.report.conserved());
}

TEST(Pipeline, DeterministicAndConservedWithOutliers) {
  SceneSpec s = small_scene();
  s.points = 12000;
  s.outlier_fraction = 0.02;
  const Scene sc = generate_scene(s);
  const PipelineResult a = run_pipeline(sc.points, PipelineConfig{});
  const PipelineResult b = run_pipeline(sc.points, PipelineConfig{});
  EXPECT_TRUE(a.report.conserved());
  ASSERT_EQ(a.wires.size(), b.wires.size());
  for (std::size_t w = 0; w < a.wires.size(); ++w) {
    EXPECT_EQ(a.wires[w].vertices, b.wires[w].vertices);
    EXPECT_EQ(a.wires[w].members, b.wires[w].members);
  }
  EXPECT_EQ(a.unassigned, b.unassigned);
}
