#pragma once

// k-means over catenaries: refit every cluster, merge near-duplicates,
// reassign every point to its nearest curve, until memberships settle.

#include <algorithm>
#include <array>
#include <iterator>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <tuple>
#include <unordered_map>
#include <optional>
#include <vector>

#include "catline/catenary.hpp"
#include "catline/fit.hpp"

namespace catline {

struct RefineConfig {
  double deviation_threshold = 0.8;  // T
  double wire_separation = 1.0;
  int max_rounds = 20;
  double merge_rms_factor = 1.25;
  std::size_t min_points = 8;
  double min_wire_length = 5.0;
  double extent_margin = 1.0;         // how far past its ends a curve may claim points per round
  std::size_t merge_fit_points = 4096;  // subsample cap for the union fit of a merge candidate
  std::size_t max_fit_points = 0;       // 0: refit on every member; else an even subsample, members re-split by T
  double settle_fraction = 0.0;         // converged once at most this fraction of labels change in a round
  bool split_failed = false;            // halve clusters whose fit fails instead of dissolving them
  FitConfig fit;
};

struct WireCluster {
  CatenaryCurve curve;
  std::vector<std::size_t> member_indices;  // sorted
  double rms = 0.0;
  bool stable = false;
  bool fitted = false;  // curve holds a fit (initial clusters carry members only)
};

struct RefineResult {
  std::vector<WireCluster> clusters;
  std::vector<std::size_t> unassigned;
  int rounds = 0;
  bool converged = false;
  std::size_t dissolved = 0;
  std::size_t merges = 0;
  // After each assignment: sum over all points of min(d, T)^2, so a point
  // with no curve within T costs T^2.
  std::vector<double> objective_history;
  std::vector<bool> merged_in_round;
  std::vector<std::size_t> changed_per_round;  // labels that differ from the previous round
};

namespace detail {

inline constexpr std::int64_t kUnassigned = -1;

struct Box {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void add(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Box inflated(double r) const { return {lo.array() - r, hi.array() + r}; }
  bool contains(const Vec3& p) const { return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all(); }
  Box clipped(const Box& o) const { return {lo.cwiseMax(o.lo), hi.cwiseMin(o.hi)}; }
  bool valid() const { return (lo.array() <= hi.array()).all(); }
  bool intersects(const Box& o) const { return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all(); }
};

// World box of the curve over [x0, x1]. Every world coordinate is affine in
// the in-plane (x, y), and y over an interval peaks at an end and bottoms at
// an end or the vertex, so the corners of the in-plane box bound it.
inline Box curve_box(const CatenaryCurve& k, double x0, double x1) {
  const double y0 = evaluate(k, x0), y1 = evaluate(k, x1);
  double ylo = std::min(y0, y1);
  const double yhi = std::max(y0, y1);
  if (k.m > x0 && k.m < x1) ylo = std::min(ylo, k.c + k.a);
  Box b;
  for (double x : {x0, x1})
    for (double y : {ylo, yhi}) b.add(k.frame.lift({x, y}));
  return b;
}

inline double safe_extent_box(const CatenaryCurve& k, double margin, Box& out) {
  try {
    out = curve_box(k, k.x_min - margin, k.x_max + margin);
    return 0.0;
  } catch (const OverflowError&) {
    out = Box{};
    return -1.0;
  }
}

using Cell = std::array<std::int64_t, 3>;

struct CellHash {
  std::size_t operator()(const Cell& k) const {
    std::uint64_t h = 0x9E3779B97F4A7C15ull;
    for (std::int64_t v : k) h = (h ^ static_cast<std::uint64_t>(v)) * 0x100000001B3ull + (h >> 29);
    return static_cast<std::size_t>(h);
  }
};

inline Cell cell_of(const Vec3& p, double size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / size)), static_cast<std::int64_t>(std::floor(p.y() / size)),
          static_cast<std::int64_t>(std::floor(p.z() / size))};
}

// Uniform grid over cluster boxes for candidate lookup.
class BoxGrid {
 public:
  BoxGrid(std::span<const Box> boxes, double cell) : cell_(cell) {
    for (std::size_t c = 0; c < boxes.size(); ++c) {
      const Box& b = boxes[c];
      if (!(b.lo.array() <= b.hi.array()).all()) continue;
      const Cell lo = cell_of(b.lo, cell_), hi = cell_of(b.hi, cell_);
      for (std::int64_t x = lo[0]; x <= hi[0]; ++x)
        for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
          for (std::int64_t z = lo[2]; z <= hi[2]; ++z) cells_[{x, y, z}].push_back(c);
    }
  }

  const std::vector<std::size_t>* candidates(const Vec3& p) const {
    auto it = cells_.find(cell_of(p, cell_));
    return it == cells_.end() ? nullptr : &it->second;
  }

 private:
  double cell_;
  std::unordered_map<Cell, std::vector<std::size_t>, CellHash> cells_;
};

template <class T>
std::vector<Vec3> gather_points(std::span<const Vec3> pts, const std::vector<T>& idx) {
  std::vector<Vec3> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(pts[static_cast<std::size_t>(i)]);
  return out;
}

inline std::vector<Vec3> even_subsample(const std::vector<Vec3>& pts, std::size_t cap) {
  if (cap == 0 || pts.size() <= cap) return pts;
  std::vector<Vec3> out;
  out.reserve(cap);
  for (std::size_t k = 0; k < cap; ++k) out.push_back(pts[(k * (pts.size() - 1)) / (cap - 1)]);
  return out;
}

// Up to `cap` members chosen by a fixed hash of the point index, so a small
// change of membership barely changes the sample. Returns sorted indices.
inline std::vector<std::size_t> stable_sample(const std::vector<std::size_t>& members, std::size_t cap) {
  if (members.size() <= cap) return members;
  const auto mix = [](std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ull;
    return x ^ (x >> 33);
  };
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  keyed.reserve(members.size());
  for (std::size_t i : members) keyed.emplace_back(mix(i), i);
  std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(cap), keyed.end());
  std::vector<std::size_t> out;
  out.reserve(cap);
  for (std::size_t k = 0; k < cap; ++k) out.push_back(keyed[k].second);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Nearest curve within T for every point (ties go to the lower cluster
/// index); extents grow to cover new members. Returns the label per point.
inline std::vector<std::int64_t> assign_points(std::span<const Vec3> pts, std::vector<WireCluster>& clusters,
                                               const RefineConfig& cfg, double* objective = nullptr) {
  const double T = cfg.deviation_threshold;
  detail::Box cloud;
  for (const Vec3& p : pts) cloud.add(p);
  std::vector<detail::Box> boxes(clusters.size());
  double diag = 0.0;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (detail::safe_extent_box(clusters[c].curve, cfg.extent_margin, boxes[c]) < 0.0) continue;
    // a steep curve can have a box far larger than the data; only the part
    // holding points matters
    boxes[c] = boxes[c].inflated(T).clipped(cloud);
    if (!boxes[c].valid()) continue;
    diag = std::max(diag, (boxes[c].hi - boxes[c].lo).maxCoeff());
  }
  const detail::BoxGrid grid(boxes, std::clamp(diag / 8.0, 2.0 * T + 1e-9, 50.0));

  std::vector<std::int64_t> label(pts.size(), detail::kUnassigned);
  std::vector<double> xs(pts.size(), 0.0);
  double obj = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto* cand = grid.candidates(pts[i]);
    if (!cand) {
      obj += T * T;
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c : *cand) {
      if (!boxes[c].contains(pts[i])) continue;
      // the offset from the curve plane bounds the distance from below
      const double off = std::abs((pts[i] - clusters[c].curve.frame.origin).dot(clusters[c].curve.frame.normal));
      if (off > T || off > best) continue;
      const ClosestPoint3 cp = closest_point_3d(clusters[c].curve, pts[i]);
      if (cp.distance < best || (cp.distance == best && static_cast<std::int64_t>(c) < label[i])) {
        best = cp.distance;
        label[i] = static_cast<std::int64_t>(c);
        xs[i] = cp.x;
      }
    }
    if (best > T) label[i] = detail::kUnassigned;
    obj += std::min(best, T) * std::min(best, T);
  }
  for (auto& c : clusters) c.member_indices.clear();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (label[i] == detail::kUnassigned) continue;
    WireCluster& c = clusters[static_cast<std::size_t>(label[i])];
    c.member_indices.push_back(i);
    c.curve.x_min = std::min(c.curve.x_min, xs[i]);
    c.curve.x_max = std::max(c.curve.x_max, xs[i]);
  }
  if (objective) *objective = obj;
  return label;
}

namespace detail {

// Members split at the median of their main horizontal direction, or nothing
// when either half would be below min_points or min_wire_length.
inline std::optional<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> split_in_two(
    const std::vector<Vec3>& sub, const std::vector<std::size_t>& members, const RefineConfig& cfg) {
  if (sub.size() < 2 * cfg.min_points) return std::nullopt;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const Vec3& p : sub) mean += p.head<2>();
  mean /= static_cast<double>(sub.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const Vec3& p : sub) cov.noalias() += (p.head<2>() - mean) * (p.head<2>() - mean).transpose();
  const Eigen::Vector2d dir = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvectors().col(1);
  std::vector<std::pair<double, std::size_t>> t;
  t.reserve(sub.size());
  for (std::size_t k = 0; k < sub.size(); ++k) t.emplace_back((sub[k].head<2>() - mean).dot(dir), members[k]);
  std::sort(t.begin(), t.end());
  const std::size_t half = t.size() / 2;
  if (t[half].first - t.front().first < cfg.min_wire_length || t.back().first - t[half].first < cfg.min_wire_length)
    return std::nullopt;
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t k = 0; k < t.size(); ++k) (k < half ? out.first : out.second).push_back(t[k].second);
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

}  // namespace detail

/// Refits every cluster on its members. Undersized clusters are removed, and
/// so are clusters whose fit fails, unless split_failed is set: those are cut
/// in two along their main direction and each piece is fitted in turn.
/// Returns the number dissolved.
inline std::size_t update_curves(std::span<const Vec3> pts, std::vector<WireCluster>& clusters,
                                 const RefineConfig& cfg) {
  FitConfig fc = cfg.fit;
  fc.deviation_threshold = cfg.deviation_threshold;
  fc.min_points = cfg.min_points;
  fc.trust_warm_start = true;
  std::vector<WireCluster> kept;
  kept.reserve(clusters.size());
  std::size_t dissolved = 0;
  // work list in reverse so pieces of a split cluster are handled next, in order
  std::vector<WireCluster> todo(std::make_move_iterator(clusters.rbegin()), std::make_move_iterator(clusters.rend()));
  while (!todo.empty()) {
    WireCluster c = std::move(todo.back());
    todo.pop_back();
    if (c.member_indices.size() < cfg.min_points) {
      ++dissolved;
      continue;
    }
    const auto sub = detail::gather_points(pts, c.member_indices);
    const CatenaryCurve* warm = c.fitted ? &c.curve : nullptr;
    const bool thin = cfg.max_fit_points > 0 && sub.size() > cfg.max_fit_points;
    std::vector<Vec3> thinned;
    if (thin) thinned = detail::gather_points(pts, detail::stable_sample(c.member_indices, cfg.max_fit_points));
    const FitResult r = robust_fit(std::span<const Vec3>(thin ? thinned : sub), fc, warm);
    if (!r.ok()) {
      auto halves = cfg.split_failed ? detail::split_in_two(sub, c.member_indices, cfg) : std::nullopt;
      if (!halves) {
        ++dissolved;
        continue;
      }
      todo.push_back(WireCluster{{}, std::move(halves->second), 0.0, false, false});
      todo.push_back(WireCluster{{}, std::move(halves->first), 0.0, false, false});
      continue;
    }
    WireCluster out;
    out.fitted = true;
    out.curve = r.curve;
    out.rms = r.rms;
    if (!thin) {
      out.member_indices.reserve(r.inliers.size());
      for (std::size_t k : r.inliers) out.member_indices.push_back(c.member_indices[k]);
    } else {
      double ss = 0.0;
      for (std::size_t k = 0; k < sub.size(); ++k) {
        const ClosestPoint3 cp = closest_point_3d(out.curve, sub[k]);
        if (cp.distance > cfg.deviation_threshold) continue;
        out.member_indices.push_back(c.member_indices[k]);
        out.curve.x_min = std::min(out.curve.x_min, cp.x);
        out.curve.x_max = std::max(out.curve.x_max, cp.x);
        ss += cp.distance * cp.distance;
      }
      if (out.member_indices.size() < cfg.min_points) {
        ++dissolved;
        continue;
      }
      out.rms = std::sqrt(ss / static_cast<double>(out.member_indices.size()));
    }
    kept.push_back(std::move(out));
  }
  clusters = std::move(kept);
  return dissolved;
}

namespace detail {

// Largest distance from samples of `a` over its extent to the whole curve `b`.
inline double max_sample_distance(const CatenaryCurve& a, const CatenaryCurve& b, int samples = 24) {
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const double x = a.x_min + (a.x_max - a.x_min) * s / (samples - 1);
    double y;
    try {
      y = evaluate(a, x);
    } catch (const OverflowError&) {
      return std::numeric_limits<double>::infinity();
    }
    worst = std::max(worst, closest_point_3d(b, a.frame.lift({x, y})).distance);
  }
  return worst;
}

struct MergeTrial {
  bool accept = false;
  WireCluster merged;
};

inline MergeTrial try_merge(std::span<const Vec3> pts, const WireCluster& a, const WireCluster& b,
                            const RefineConfig& cfg) {
  MergeTrial out;
  std::vector<std::size_t> idx;
  idx.reserve(a.member_indices.size() + b.member_indices.size());
  std::merge(a.member_indices.begin(), a.member_indices.end(), b.member_indices.begin(), b.member_indices.end(),
             std::back_inserter(idx));
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  const auto all = gather_points(pts, idx);
  const auto sub = even_subsample(all, cfg.merge_fit_points);
  FitConfig fc = cfg.fit;
  fc.deviation_threshold = cfg.deviation_threshold;
  fc.min_points = 3;
  const WireCluster& larger = a.member_indices.size() >= b.member_indices.size() ? a : b;
  const FitResult r = fit_all_points(std::span<const Vec3>(sub), fc, &larger.curve);
  if (!r.ok()) return out;
  double ss = 0.0, worst = 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Vec3& p : all) {
    const ClosestPoint3 cp = closest_point_3d(r.curve, p);
    ss += cp.distance * cp.distance;
    worst = std::max(worst, cp.distance);
    lo = std::min(lo, cp.x);
    hi = std::max(hi, cp.x);
  }
  const double rms = std::sqrt(ss / static_cast<double>(all.size()));
  if (rms > cfg.merge_rms_factor * std::max(a.rms, b.rms) || worst > cfg.deviation_threshold) return out;
  out.accept = true;
  out.merged.fitted = true;
  out.merged.curve = r.curve;
  out.merged.curve.x_min = lo;
  out.merged.curve.x_max = hi;
  out.merged.rms = rms;
  out.merged.member_indices = std::move(idx);
  return out;
}

}  // namespace detail

/// Merges pairs of clusters lying within wire_separation of each other when
/// their union fits about as well as the parts. Returns the number of merges.
inline std::size_t merge_similar(std::span<const Vec3> pts, std::vector<WireCluster>& clusters,
                                 const RefineConfig& cfg) {
  std::size_t merges = 0;
  // pairs already tested and rejected, keyed by member counts so changes retest
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> rejected;
  for (;;) {
    const std::size_t k = clusters.size();
    std::vector<detail::Box> boxes(k);
    for (std::size_t c = 0; c < k; ++c) {
      if (detail::safe_extent_box(clusters[c].curve, 0.0, boxes[c]) < 0.0) continue;
      boxes[c] = boxes[c].inflated(cfg.wire_separation);
    }
    // candidates: boxes touch and one curve stays within the separation of the other
    std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) {
        if (!boxes[i].intersects(boxes[j])) continue;
        const auto key = std::make_tuple(clusters[i].member_indices.front(), clusters[i].member_indices.size(),
                                         clusters[j].member_indices.front(), clusters[j].member_indices.size());
        if (std::find(rejected.begin(), rejected.end(), key) != rejected.end()) continue;
        const double d = std::min(detail::max_sample_distance(clusters[i].curve, clusters[j].curve),
                                  detail::max_sample_distance(clusters[j].curve, clusters[i].curve));
        if (d <= cfg.wire_separation) cand.emplace_back(d, i, j);
      }
    std::sort(cand.begin(), cand.end());
    bool merged = false;
    for (const auto& [d, i, j] : cand) {
      detail::MergeTrial t = detail::try_merge(pts, clusters[i], clusters[j], cfg);
      if (!t.accept) {
        rejected.emplace_back(clusters[i].member_indices.front(), clusters[i].member_indices.size(),
                              clusters[j].member_indices.front(), clusters[j].member_indices.size());
        continue;
      }
      clusters[i] = std::move(t.merged);
      clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(j));
      ++merges;
      merged = true;
      break;
    }
    if (!merged) break;
  }
  return merges;
}

/// Length of the curve over its extent.
inline double cluster_length(const WireCluster& c) {
  try {
    return c.curve.length();
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

/// Alternates refit, merge and reassignment until memberships settle.
/// Initial clusters carry member indices; their curves may be unset.
inline RefineResult refine(std::span<const Vec3> pts, std::vector<WireCluster> clusters, const RefineConfig& cfg) {
  RefineResult res;
  for (auto& c : clusters) std::sort(c.member_indices.begin(), c.member_indices.end());
  std::vector<std::int64_t> prev;
  for (int round = 0; round < std::max(1, cfg.max_rounds); ++round) {
    res.rounds = round + 1;
    res.dissolved += update_curves(pts, clusters, cfg);
    const std::size_t merged = merge_similar(pts, clusters, cfg);
    res.merges += merged;
    res.merged_in_round.push_back(merged > 0);
    double obj = 0.0;
    std::vector<std::int64_t> label = assign_points(pts, clusters, cfg, &obj);
    res.objective_history.push_back(obj);
    // clusters left empty by reassignment are dropped, relabeling the rest
    std::vector<WireCluster> kept;
    std::vector<std::int64_t> remap(clusters.size(), detail::kUnassigned);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (clusters[c].member_indices.empty()) {
        ++res.dissolved;
        continue;
      }
      remap[c] = static_cast<std::int64_t>(kept.size());
      kept.push_back(std::move(clusters[c]));
    }
    for (auto& l : label)
      if (l != detail::kUnassigned) l = remap[static_cast<std::size_t>(l)];
    clusters = std::move(kept);
    std::size_t changed = pts.size();
    if (prev.size() == label.size()) {
      changed = 0;
      for (std::size_t i = 0; i < label.size(); ++i) changed += label[i] != prev[i];
    }
    res.changed_per_round.push_back(changed);
    if (changed == 0 || (merged == 0 && static_cast<double>(changed) <= cfg.settle_fraction * static_cast<double>(pts.size()))) {
      res.converged = true;
      break;
    }
    prev = std::move(label);
  }

  // Too-short wires go; their points may still fall to a remaining curve.
  std::vector<WireCluster> kept;
  for (auto& c : clusters) {
    if (cluster_length(c) >= cfg.min_wire_length) kept.push_back(std::move(c));
    else ++res.dissolved;
  }
  clusters = std::move(kept);
  const std::vector<std::int64_t> label = assign_points(pts, clusters, cfg);
  for (auto& c : clusters) c.stable = res.converged;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (label[i] == detail::kUnassigned) res.unassigned.push_back(i);
  res.clusters = std::move(clusters);
  return res;
}

/// Claims unassigned points that lie within T of a curve and within `radius`
/// of one of its end points, extending the extent over them.
inline std::size_t extend_ends(std::span<const Vec3> pts, std::vector<WireCluster>& clusters,
                               std::vector<std::size_t>& unassigned, double radius, double T) {
  // ends are fixed up front so claims do not chain outward
  std::vector<std::array<Vec3, 2>> ends(clusters.size());
  std::vector<bool> usable(clusters.size(), true);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const CatenaryCurve& k = clusters[c].curve;
    try {
      ends[c] = {k.frame.lift({k.x_min, evaluate(k, k.x_min)}), k.frame.lift({k.x_max, evaluate(k, k.x_max)})};
    } catch (const OverflowError&) {
      usable[c] = false;
    }
  }
  std::size_t claimed = 0;
  std::vector<std::size_t> left;
  for (std::size_t i : unassigned) {
    std::int64_t best_c = detail::kUnassigned;
    double best = std::numeric_limits<double>::infinity(), best_x = 0.0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      if (!usable[c]) continue;
      const CatenaryCurve& k = clusters[c].curve;
      if ((pts[i] - ends[c][0]).norm() > radius && (pts[i] - ends[c][1]).norm() > radius) continue;
      const ClosestPoint3 cp = closest_point_3d(k, pts[i]);
      if (cp.distance <= T && cp.distance < best) {
        best = cp.distance;
        best_c = static_cast<std::int64_t>(c);
        best_x = cp.x;
      }
    }
    if (best_c == detail::kUnassigned) {
      left.push_back(i);
      continue;
    }
    WireCluster& c = clusters[static_cast<std::size_t>(best_c)];
    c.member_indices.insert(std::upper_bound(c.member_indices.begin(), c.member_indices.end(), i), i);
    c.curve.x_min = std::min(c.curve.x_min, best_x);
    c.curve.x_max = std::max(c.curve.x_max, best_x);
    ++claimed;
  }
  unassigned = std::move(left);
  return claimed;
}

}  // namespace catline
