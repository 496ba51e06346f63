#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "catline/segment.hpp"
#include "synthetic.hpp"

using namespace catline;

namespace {

struct SpanSpec {
  Vec3 start;
  double heading;  // radians
  double length;
  double a;
};

Vec3 span_point(const SpanSpec& s, double t) {
  const Vec3 d(std::cos(s.heading), std::sin(s.heading), 0.0);
  const double half = 0.5 * s.length;
  return s.start + t * d + Vec3(0, 0, s.a * (std::cosh((t - half) / s.a) - std::cosh(half / s.a)));
}

Vec3 span_end(const SpanSpec& s) { return span_point(s, s.length); }

// Combined points along consecutive spans, `per_cp` points each.
std::vector<std::vector<Vec3>> spans_to_cps(const std::vector<SpanSpec>& spans, int cps_per_span, int per_cp,
                                            double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma > 0 ? sigma : 1.0);
  std::vector<std::vector<Vec3>> out;
  for (const auto& s : spans) {
    const int n = cps_per_span * per_cp;
    for (int c = 0; c < cps_per_span; ++c) {
      std::vector<Vec3> cp;
      for (int k = 0; k < per_cp; ++k) {
        const double t = s.length * (c * per_cp + k + 0.5) / n;
        Vec3 p = span_point(s, t);
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
  SpanSpec s2{span_end(s1), turn_deg * std::numbers::pi / 180.0, 110.0, a2};
  return {s1, s2};
}

std::vector<Vec3> flatten(const std::vector<std::vector<Vec3>>& cps, std::size_t i, std::size_t j) {
  std::vector<Vec3> out;
  for (std::size_t k = i; k < j; ++k) out.insert(out.end(), cps[k].begin(), cps[k].end());
  return out;
}

// Best score over every division, by enumeration of the 2^(n-1) cut masks.
double exhaustive_best(const std::vector<std::vector<Vec3>>& cps, const SegmentPenaltyConfig& cfg,
                       std::vector<std::size_t>* cuts_out) {
  const std::size_t n = cps.size();
  std::vector<std::vector<double>> pen(n + 1, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j <= n; ++j) pen[i][j] = partition_penalty(flatten(cps, i, j), cfg);
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    double s = 0.0;
    std::size_t start = 0;
    std::vector<std::size_t> cuts;
    for (std::size_t b = 1; b <= n; ++b) {
      if (b == n || (mask >> (b - 1)) & 1u) {
        s += pen[start][b] + cfg.partition_log_prob;
        if (b < n) cuts.push_back(b);
        start = b;
      }
    }
    if (s > best) {
      best = s;
      if (cuts_out) *cuts_out = cuts;
    }
  }
  return best;
}

}  // namespace

TEST(Penalty, ExactCatenaryIsZero) {
  test::SyntheticCurve s{.a = 80.0, .span = 90.0};
  const auto pts = test::sample_curve(s, 40);
  SegmentPenaltyConfig cfg;
  EXPECT_NEAR(partition_penalty(pts, cfg), 0.0, 1e-12);
  const std::vector<Vec3> small(pts.begin(), pts.begin() + 5);
  EXPECT_NEAR(partition_penalty(small, cfg), std::log(0.5), 1e-12);
}

TEST(Penalty, EveryPointAtThreshold) {
  // Straight fallback on a 4-point rectangle: each point lies T from the axis.
  SegmentPenaltyConfig cfg;
  const double T = cfg.deviation_threshold;
  const std::vector<Vec3> pts{{0, T, 0}, {0, -T, 0}, {10, T, 0}, {10, -T, 0}};
  EXPECT_NEAR(partition_penalty(pts, cfg), -0.5 + std::log(0.5), 1e-12);
}

TEST(Penalty, ConcaveRunIsInadmissible) {
  std::vector<Vec3> pts;
  for (int i = 0; i <= 40; ++i) pts.emplace_back(i - 20.0, 0.0, 20.0 - 0.03 * (i - 20.0) * (i - 20.0));
  EXPECT_EQ(partition_penalty(pts, SegmentPenaltyConfig{}), -std::numeric_limits<double>::infinity());
  // ... unless it is small
  const std::vector<Vec3> few(pts.begin() + 10, pts.begin() + 15);
  EXPECT_GT(partition_penalty(few, SegmentPenaltyConfig{}), -1.0);
}

TEST(Penalty, TwoCatenariesScoreWorseTogether) {
  const auto cps = spans_to_cps(two_spans(120.0, 200.0, 25.0), 60, 3, 0.02, 1);
  SegmentPenaltyConfig cfg;
  const double joint = partition_penalty(flatten(cps, 0, cps.size()), cfg);
  const double split = partition_penalty(flatten(cps, 0, 60), cfg) + partition_penalty(flatten(cps, 60, 120), cfg) +
                       cfg.partition_log_prob;
  EXPECT_LT(joint, split);
}

TEST(Penalty, AddingAnExactPointNeverHurts) {
  test::SyntheticCurve s{.a = 70.0, .span = 80.0};
  auto pts = test::sample_curve(s, 60, 0.05, 3);
  SegmentPenaltyConfig cfg;
  FitConfig fc;
  const FitResult fit = fit_all_points(pts, fc);
  ASSERT_TRUE(fit.ok());
  const double before = partition_penalty(pts, cfg);
  // a point exactly on the fitted curve
  const double x = 0.5 * (fit.curve.x_min + fit.curve.x_max);
  pts.push_back(fit.curve.frame.lift({x, evaluate(fit.curve, x)}));
  EXPECT_GE(partition_penalty(pts, cfg), before - 1e-12);
}

TEST(Segment, SingleCatenaryOnePartition) {
  SpanSpec s{{5, 5, 40}, 0.3, 150.0, 160.0};
  const auto cps = spans_to_cps({s}, 80, 2, 0.02, 4);
  const Division d = segment_polyline(std::span<const std::vector<Vec3>>(cps), SegmentPenaltyConfig{});
  EXPECT_EQ(d.partition_count(), 1u);
  EXPECT_TRUE(d.cut_indices.empty());
  EXPECT_TRUE(d.curves[0].is_valid());
}

TEST(Segment, TwoCatenariesOneCutNearJunction) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto cps = spans_to_cps(two_spans(120.0 + 10.0 * seed, 220.0, 20.0 + 5.0 * seed), 60, 3, 0.02, seed);
    const Division d = segment_polyline(std::span<const std::vector<Vec3>>(cps), SegmentPenaltyConfig{});
    ASSERT_EQ(d.cut_indices.size(), 1u) << "seed " << seed;
    EXPECT_NEAR(static_cast<double>(d.cut_indices[0]), 60.0, 2.0) << "seed " << seed;
    // splitting beats keeping one partition
    const double whole = partition_penalty(flatten(cps, 0, cps.size()), SegmentPenaltyConfig{}) + std::log(0.5);
    EXPECT_GT(d.total_score, whole);
  }
}

TEST(Segment, MatchesExhaustiveEnumeration) {
  std::mt19937_64 rng(77);
  SegmentPenaltyConfig cfg;
  cfg.deviation_threshold = 0.3;
  for (int inst = 0; inst < 12; ++inst) {
    const int per_span = 4 + inst % 4;  // 8..14 combined points in total
    const auto spans = two_spans(40.0 + 5.0 * inst, 90.0, 35.0);
    auto cps = spans_to_cps(spans, per_span, 4 + inst % 3, 0.05, 100 + inst);
    if (inst % 3 == 2) cps.resize(cps.size() - 1);
    std::vector<std::size_t> oracle_cuts;
    const double oracle = exhaustive_best(cps, cfg, &oracle_cuts);
    const Division d = segment_polyline(std::span<const std::vector<Vec3>>(cps), cfg);
    EXPECT_NEAR(d.total_score, oracle, 1e-9) << "instance " << inst;
    EXPECT_EQ(d.cut_indices, oracle_cuts) << "instance " << inst;
  }
}

TEST(Segment, RandomNoisyExhaustive) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.4);
  SegmentPenaltyConfig cfg;
  for (int inst = 0; inst < 8; ++inst) {
    SpanSpec s{{0, 0, 0}, 0.1 * inst, 60.0, 50.0};
    auto cps = spans_to_cps({s}, 10 + inst % 5, 3, 0.0, 0);
    for (auto& cp : cps)
      for (auto& p : cp) p += Vec3(g(rng), g(rng), g(rng));
    std::vector<std::size_t> oracle_cuts;
    const double oracle = exhaustive_best(cps, cfg, &oracle_cuts);
    const Division d = segment_polyline(std::span<const std::vector<Vec3>>(cps), cfg);
    EXPECT_NEAR(d.total_score, oracle, 1e-9) << "instance " << inst;
  }
}

TEST(Segment, WindowAndSubsampleStillFindJunction) {
  const auto cps = spans_to_cps(two_spans(130.0, 250.0, 30.0), 60, 20, 0.02, 9);
  SegmentPenaltyConfig cfg;
  cfg.max_window = 90;
  cfg.max_fit_points = 128;
  const Division d = segment_polyline(std::span<const std::vector<Vec3>>(cps), cfg);
  ASSERT_GE(d.cut_indices.size(), 1u);
  bool near = false;
  for (std::size_t c : d.cut_indices) near = near || std::abs(static_cast<double>(c) - 60.0) <= 2.0;
  EXPECT_TRUE(near);
}

TEST(Segment, PolylineOverload) {
  const std::vector<Vec3> src{{0, 0, 1}, {1, 0, 0.5}, {2, 0, 0.3}, {3, 0, 0.5}, {4, 0, 1}};
  CombinedPolyline p;
  for (std::size_t i = 0; i < src.size(); ++i) p.combined_points.push_back({{i}, src[i]});
  const Division d = segment_polyline(p, src, SegmentPenaltyConfig{});
  EXPECT_EQ(d.partition_count(), 1u);
}
