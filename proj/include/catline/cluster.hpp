#pragma once

// Turning a spanning forest into ordered combined polylines.
//
// Leaves are peeled round by round. Each node carries the polylines that
// arrived from already-peeled neighbors; a peeled node either stores its
// long polylines (junction) or forwards one polyline, extended by a combined
// point, to its remaining neighbor. Once every node is isolated the
// remaining polylines are merged through their node.
//
// Nodes are indices into a position array. Callers that pre-group source
// points pass the group positions and expand the node indices afterwards.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "catline/geometry.hpp"
#include "catline/mst.hpp"

namespace catline {

struct ClusterConfig {
  std::size_t n_min = 5;
  std::size_t n_max = 50;
  double ratio_threshold = 0.25;
};

struct CombinedPoint {
  std::vector<std::size_t> point_indices;
  Vec3 representative = Vec3::Zero();  // centroid of the members
};

enum class SizeClass { small, neither, not_small };

struct CombinedPolyline {
  std::vector<CombinedPoint> combined_points;
  SizeClass size_class = SizeClass::small;

  std::size_t size() const { return combined_points.size(); }
  std::size_t point_count() const {
    std::size_t n = 0;
    for (const auto& c : combined_points) n += c.point_indices.size();
    return n;
  }
};

/// sqrt(median / largest) covariance eigenvalue of the points is at most
/// ratio_threshold.
inline bool is_prolongated(std::span<const Vec3> pts, double ratio_threshold) {
  if (pts.size() < 2) return false;
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov.noalias() += (p - mean) * (p - mean).transpose();
  const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov, Eigen::EigenvaluesOnly).eigenvalues();
  const double largest = std::max(ev(2), 0.0);
  if (!(largest > 0.0)) return false;
  return std::sqrt(std::max(ev(1), 0.0) / largest) <= ratio_threshold;
}

/// Prolongation of a polyline over all member source points.
inline bool is_prolongated(const CombinedPolyline& poly, std::span<const Vec3> source, double ratio_threshold) {
  std::vector<Vec3> pts;
  for (const auto& c : poly.combined_points)
    for (std::size_t i : c.point_indices) pts.push_back(source[i]);
  return is_prolongated(std::span<const Vec3>(pts), ratio_threshold);
}

namespace detail {

// Working polyline: node lists plus running moments for the prolongation test.
struct WorkPolyline {
  std::vector<std::vector<std::size_t>> cps;  // node indices per combined point
  bool forced_not_small = false;
  std::size_t min_node = std::numeric_limits<std::size_t>::max();
  std::size_t node_total = 0;
  Vec3 sum = Vec3::Zero();
  Eigen::Matrix3d sum_sq = Eigen::Matrix3d::Zero();
  int cached = -1;  // -1 unknown, 0 small, 1 not small

  void add_nodes(const std::vector<std::size_t>& nodes, std::span<const Vec3> pos, const Vec3& ref) {
    for (std::size_t v : nodes) {
      const Vec3 p = pos[v] - ref;
      sum += p;
      sum_sq.noalias() += p * p.transpose();
      min_node = std::min(min_node, v);
    }
    node_total += nodes.size();
    cached = -1;
  }
};

class Reducer {
 public:
  Reducer(const WireGraph& g, std::span<const Vec3> pos, const ClusterConfig& cfg)
      : pos_(pos), cfg_(cfg), adj_(g.node_count), degree_(g.node_count, 0), held_(g.node_count) {
    ref_ = Vec3::Zero();
    for (const Vec3& p : pos) ref_ += p;
    if (!pos.empty()) ref_ /= static_cast<double>(pos.size());
    for (const auto& e : g.edges) {
      adj_[e.i].push_back(e.j);
      adj_[e.j].push_back(e.i);
      ++degree_[e.i];
      ++degree_[e.j];
    }
    alive_.assign(g.node_count, 1);
  }

  std::vector<std::vector<std::vector<std::size_t>>> run() {
    const std::size_t n = adj_.size();
    std::vector<std::size_t> ends;
    for (;;) {
      ends.clear();
      for (std::size_t v = 0; v < n; ++v)
        if (alive_[v] && degree_[v] == 1) ends.push_back(v);
      if (ends.empty()) break;
      for (std::size_t v : ends) {
        if (degree_[v] != 1) continue;  // neighbor was peeled this round
        peel(v);
      }
    }
    for (std::size_t v = 0; v < n; ++v)
      if (alive_[v]) finish(v);
    return std::move(out_);
  }

 private:
  bool not_small(std::size_t id) {
    WorkPolyline& p = pool_[id];
    if (p.forced_not_small) return true;
    const std::size_t count = p.cps.size();
    if (count <= cfg_.n_min) return false;
    if (count > cfg_.n_max) return true;
    if (p.cached < 0) {
      const double k = static_cast<double>(p.node_total);
      const Vec3 mean = p.sum / k;
      const Eigen::Matrix3d cov = p.sum_sq / k - mean * mean.transpose();
      const Eigen::Vector3d ev =
          Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov, Eigen::EigenvaluesOnly).eigenvalues();
      const double largest = std::max(ev(2), 0.0);
      const bool prolongated =
          p.node_total >= 2 && largest > 0.0 && std::sqrt(std::max(ev(1), 0.0) / largest) <= cfg_.ratio_threshold;
      p.cached = prolongated ? 1 : 0;
    }
    return p.cached == 1;
  }

  // Sort key: not-small first, then longer, then smaller node index.
  auto rank(std::size_t id) {
    return std::make_tuple(!not_small(id), -static_cast<std::int64_t>(pool_[id].cps.size()), pool_[id].min_node);
  }

  std::size_t other_neighbor(std::size_t v) const {
    for (std::size_t u : adj_[v])
      if (alive_[u]) return u;
    return kNone;
  }

  std::size_t new_polyline() {
    pool_.emplace_back();
    return pool_.size() - 1;
  }

  void append_cp(std::size_t id, std::vector<std::size_t> nodes) {
    pool_[id].add_nodes(nodes, pos_, ref_);
    pool_[id].cps.push_back(std::move(nodes));
  }

  // All nodes of the given polylines plus v, as one combined point.
  std::vector<std::size_t> gather(std::size_t v, const std::vector<std::size_t>& ids) {
    std::vector<std::size_t> nodes;
    for (std::size_t id : ids)
      for (auto& cp : pool_[id].cps) nodes.insert(nodes.end(), cp.begin(), cp.end());
    nodes.push_back(v);
    std::sort(nodes.begin(), nodes.end());
    return nodes;
  }

  void emit(std::size_t id) {
    if (!pool_[id].cps.empty()) out_.push_back(std::move(pool_[id].cps));
  }

  // Discarded polylines and the node itself stay together so that no point
  // is lost: the longest of them keeps its order, the rest collapse into a
  // combined point with the node.
  void emit_residual(std::size_t v, std::vector<std::size_t> ids) {
    if (ids.empty()) {
      out_.push_back({{v}});
      return;
    }
    std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) { return rank(a) < rank(b); });
    const std::size_t keep = ids.front();
    ids.erase(ids.begin());
    append_cp(keep, gather(v, ids));
    emit(keep);
  }

  void remove_node(std::size_t v) {
    alive_[v] = 0;
    for (std::size_t u : adj_[v])
      if (alive_[u]) --degree_[u];
    degree_[v] = 0;
  }

  void peel(std::size_t v) {
    const std::size_t u = other_neighbor(v);
    std::vector<std::size_t>& here = held_[v];
    std::vector<std::size_t> big, rest;
    for (std::size_t id : here) (not_small(id) ? big : rest).push_back(id);

    if (big.size() > 1) {
      for (std::size_t id : big) emit(id);
      emit_residual(v, rest);
      const std::size_t sentinel = new_polyline();
      pool_[sentinel].forced_not_small = true;
      held_[u].push_back(sentinel);
    } else if (here.empty()) {
      const std::size_t id = new_polyline();
      append_cp(id, {v});
      held_[u].push_back(id);
    } else {
      std::vector<std::size_t> order = here;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rank(a) < rank(b); });
      const bool tie = order.size() > 1 && std::get<0>(rank(order[0])) == std::get<0>(rank(order[1])) &&
                       std::get<1>(rank(order[0])) == std::get<1>(rank(order[1]));
      if (!tie) {
        const std::size_t keep = order.front();
        order.erase(order.begin());
        append_cp(keep, gather(v, order));
        held_[u].push_back(keep);
      } else {
        const std::size_t id = new_polyline();
        append_cp(id, gather(v, order));
        held_[u].push_back(id);
      }
    }
    here.clear();
    remove_node(v);
  }

  void finish(std::size_t v) {
    std::vector<std::size_t>& here = held_[v];
    std::vector<std::size_t> big, rest;
    for (std::size_t id : here) (not_small(id) ? big : rest).push_back(id);
    if (big.size() > 2) {
      for (std::size_t id : big) emit(id);
      emit_residual(v, rest);
    } else if (big.empty()) {
      emit_residual(v, rest);
    } else {
      std::sort(big.begin(), big.end(), [&](std::size_t a, std::size_t b) { return rank(a) < rank(b); });
      const std::size_t first = big[0];
      append_cp(first, gather(v, rest));
      if (big.size() == 2) {
        auto& tail = pool_[big[1]].cps;
        for (auto it = tail.rbegin(); it != tail.rend(); ++it) pool_[first].cps.push_back(std::move(*it));
        tail.clear();
      }
      emit(first);
    }
    here.clear();
    alive_[v] = 0;
  }

  std::span<const Vec3> pos_;
  ClusterConfig cfg_;
  Vec3 ref_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<std::size_t> degree_;
  std::vector<std::uint8_t> alive_;
  std::vector<std::vector<std::size_t>> held_;
  std::vector<WorkPolyline> pool_;
  std::vector<std::vector<std::vector<std::size_t>>> out_;
};

}  // namespace detail

/// Combined polylines of the forest; every node appears in exactly one
/// combined point of one polyline.
inline std::vector<CombinedPolyline> reduce_graph(const WireGraph& g, std::span<const Vec3> pos,
                                                  const ClusterConfig& cfg = {}) {
  detail::Reducer reducer(g, pos, cfg);
  auto raw = reducer.run();
  std::vector<CombinedPolyline> out;
  out.reserve(raw.size());
  for (auto& poly : raw) {
    CombinedPolyline p;
    p.combined_points.reserve(poly.size());
    std::vector<Vec3> all;
    for (auto& nodes : poly) {
      CombinedPoint cp;
      for (std::size_t v : nodes) {
        cp.representative += pos[v];
        all.push_back(pos[v]);
      }
      cp.representative /= static_cast<double>(nodes.size());
      cp.point_indices = std::move(nodes);
      p.combined_points.push_back(std::move(cp));
    }
    if (p.size() <= cfg.n_min) p.size_class = SizeClass::small;
    else if (p.size() > cfg.n_max) p.size_class = SizeClass::not_small;
    else p.size_class = is_prolongated(std::span<const Vec3>(all), cfg.ratio_threshold) ? SizeClass::not_small : SizeClass::small;
    out.push_back(std::move(p));
  }
  return out;
}

/// Replaces node indices by the source indices each node stands for and
/// recomputes representatives from the source points.
inline std::vector<CombinedPolyline> expand_groups(std::vector<CombinedPolyline> polys,
                                                   std::span<const std::vector<std::size_t>> members,
                                                   std::span<const Vec3> source) {
  for (auto& poly : polys) {
    for (auto& cp : poly.combined_points) {
      std::vector<std::size_t> idx;
      for (std::size_t g : cp.point_indices) idx.insert(idx.end(), members[g].begin(), members[g].end());
      std::sort(idx.begin(), idx.end());
      Vec3 s = Vec3::Zero();
      for (std::size_t i : idx) s += source[i];
      cp.representative = s / static_cast<double>(idx.size());
      cp.point_indices = std::move(idx);
    }
  }
  return polys;
}

}  // namespace catline
