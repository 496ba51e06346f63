#pragma once

// Optimal division of a combined polyline into catenary partitions.
//
// score(division) = sum over partitions of penalty + count * log(1/2), where
// penalty = -sum(eps^2) / (2 n T^2), with an extra log(1/2) for partitions of
// at most `small_partition_size` points. Cuts fall between combined points.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "catline/cluster.hpp"
#include "catline/fit.hpp"

namespace catline {

struct SegmentPenaltyConfig {
  double deviation_threshold = 0.8;  // T, meters
  std::size_t small_partition_size = 5;
  double partition_log_prob = std::log(0.5);
  std::size_t max_window = 400;        // longest partition, in combined points
  std::size_t max_fit_points = 0;      // 0: fit every point; otherwise an even subsample (> small size)
  // Heuristic: a start whose best completion falls more than this below the
  // optimum at some end is dropped for good. Infinity keeps the DP exact.
  double prune_margin = std::numeric_limits<double>::infinity();
  FitConfig fit;
};

struct Division {
  std::vector<std::size_t> cut_indices;  // first combined point of every partition but the first
  std::vector<double> partition_penalties;
  double total_score = 0.0;
  std::vector<CatenaryCurve> curves;  // fitted curve per partition (invalid for straight fallbacks)

  std::size_t partition_count() const { return cut_indices.size() + 1; }
};

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Squared distances to the total least squares line.
inline double straight_line_sum_sq(std::span<const Vec3> pts) {
  if (pts.size() <= 2) return 0.0;
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov.noalias() += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Vec3 dir = es.eigenvectors().col(2);
  double ss = 0.0;
  for (const auto& p : pts) {
    const Vec3 d = p - mean;
    ss += std::max(0.0, d.squaredNorm() - std::pow(d.dot(dir), 2));
  }
  return ss;
}

struct PenaltyEval {
  double penalty = kNegInf;
  std::optional<CatenaryCurve> curve;
};

inline PenaltyEval evaluate_penalty(std::span<const Vec3> pts, const SegmentPenaltyConfig& cfg,
                                    const CatenaryCurve* warm) {
  PenaltyEval out;
  if (pts.empty()) return out;
  const double n = static_cast<double>(pts.size());
  const double t2 = cfg.deviation_threshold * cfg.deviation_threshold;
  const bool small = pts.size() <= cfg.small_partition_size;
  const double small_term = small ? cfg.partition_log_prob : 0.0;

  FitConfig fc = cfg.fit;
  fc.min_points = 3;
  if (pts.size() >= 3) {
    const FitResult r = fit_all_points(pts, fc, warm);
    if (r.ok()) {
      double ss = 0.0;
      for (double d : r.distances) ss += d * d;
      out.penalty = -ss / (2.0 * n * t2) + small_term;
      out.curve = r.curve;
      return out;
    }
    if (r.status == FitStatus::not_catenary && !small) return out;
  }
  // Too few points, degenerate, or a small rejected run: straight segment.
  out.penalty = -straight_line_sum_sq(pts) / (2.0 * n * t2) + small_term;
  return out;
}

inline std::vector<Vec3> subsample(std::span<const Vec3> pts, std::size_t cap) {
  if (cap == 0 || pts.size() <= cap) return {pts.begin(), pts.end()};
  std::vector<Vec3> out;
  out.reserve(cap);
  for (std::size_t k = 0; k < cap; ++k) {
    const std::size_t i = (k * (pts.size() - 1)) / (cap - 1);
    out.push_back(pts[i]);
  }
  return out;
}

}  // namespace detail

/// Penalty of one partition (log-probability, <= 0).
inline double partition_penalty(std::span<const Vec3> pts, const SegmentPenaltyConfig& cfg) {
  return detail::evaluate_penalty(pts, cfg, nullptr).penalty;
}

/// Exact dynamic program over cuts between combined points. `cps` holds the
/// member positions of each combined point, in polyline order.
inline Division segment_polyline(std::span<const std::vector<Vec3>> cps, const SegmentPenaltyConfig& cfg) {
  Division div;
  const std::size_t B = cps.size();
  if (B == 0) return div;

  // prefix offsets into one flat point array
  std::vector<std::size_t> offset(B + 1, 0);
  for (std::size_t k = 0; k < B; ++k) offset[k + 1] = offset[k] + cps[k].size();
  std::vector<Vec3> flat;
  flat.reserve(offset[B]);
  for (const auto& cp : cps) flat.insert(flat.end(), cp.begin(), cp.end());

  const double lp = cfg.partition_log_prob;
  const std::size_t window = std::max<std::size_t>(1, cfg.max_window);
  std::map<std::pair<std::size_t, std::size_t>, detail::PenaltyEval> memo;
  std::vector<std::optional<CatenaryCurve>> last_curve(B);  // warm start per partition start

  auto penalty = [&](std::size_t i, std::size_t j) -> const detail::PenaltyEval& {
    auto it = memo.find({i, j});
    if (it != memo.end()) return it->second;
    const std::span<const Vec3> run(flat.data() + offset[i], offset[j] - offset[i]);
    detail::PenaltyEval e;
    if (cfg.max_fit_points > 0 && run.size() > cfg.max_fit_points) {
      const auto sub = detail::subsample(run, cfg.max_fit_points);
      e = detail::evaluate_penalty(sub, cfg, last_curve[i] ? &*last_curve[i] : nullptr);
    } else {
      e = detail::evaluate_penalty(run, cfg, last_curve[i] ? &*last_curve[i] : nullptr);
    }
    if (e.curve) last_curve[i] = e.curve;
    return memo.emplace(std::make_pair(i, j), std::move(e)).first->second;
  };

  std::vector<double> best(B + 1, detail::kNegInf);
  std::vector<std::size_t> from(B + 1, 0);
  std::vector<bool> alive(B + 1, true);
  best[0] = 0.0;
  std::vector<std::size_t> order;
  std::vector<std::pair<std::size_t, double>> tried;
  for (std::size_t j = 1; j <= B; ++j) {
    const std::size_t lo = j > window ? j - window : 0;
    order.clear();
    tried.clear();
    for (std::size_t i = lo; i < j; ++i)
      if (alive[i] && best[i] > detail::kNegInf) order.push_back(i);
    // Highest prefix score first; penalties are <= 0, so a start whose prefix
    // score plus lp cannot beat the current best is skipped without fitting.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return best[a] > best[b]; });
    for (std::size_t i : order) {
      if (best[i] + lp < best[j]) break;
      const double s = best[i] + penalty(i, j).penalty + lp;
      tried.emplace_back(i, s);
      if (s > best[j] || (s == best[j] && i < from[j])) {
        best[j] = s;
        from[j] = i;
      }
    }
    if (std::isfinite(cfg.prune_margin))
      for (const auto& [i, s] : tried)
        if (s < best[j] - cfg.prune_margin) alive[i] = false;
  }

  if (!(best[B] > detail::kNegInf)) {
    // No admissible division: report the whole polyline as one partition.
    div.partition_penalties.push_back(detail::kNegInf);
    div.total_score = detail::kNegInf;
    div.curves.push_back(CatenaryCurve{});
    return div;
  }
  std::vector<std::size_t> starts;
  for (std::size_t j = B; j > 0; j = from[j]) starts.push_back(from[j]);
  std::reverse(starts.begin(), starts.end());
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::size_t i = starts[k];
    const std::size_t j = k + 1 < starts.size() ? starts[k + 1] : B;
    if (k > 0) div.cut_indices.push_back(i);
    const auto& e = penalty(i, j);
    div.partition_penalties.push_back(e.penalty);
    div.curves.push_back(e.curve.value_or(CatenaryCurve{}));
  }
  div.total_score = best[B];
  return div;
}

/// Division of a combined polyline whose point indices refer to `source`.
inline Division segment_polyline(const CombinedPolyline& poly, std::span<const Vec3> source,
                                 const SegmentPenaltyConfig& cfg) {
  std::vector<std::vector<Vec3>> cps;
  cps.reserve(poly.size());
  for (const auto& cp : poly.combined_points) {
    std::vector<Vec3> v;
    v.reserve(cp.point_indices.size());
    for (std::size_t i : cp.point_indices) v.push_back(source[i]);
    cps.push_back(std::move(v));
  }
  return segment_polyline(std::span<const std::vector<Vec3>>(cps), cfg);
}

}  // namespace catline
