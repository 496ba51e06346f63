#pragma once

// Euclidean minimum spanning forest restricted to edges no longer than a gap.
//
// Boruvka rounds: every component picks its lightest outgoing edge, found by
// a nearest-foreign-neighbor query per point on a kd-tree whose nodes know
// when their whole subtree lies in one component. Edges are totally ordered
// by (squared length, smaller index, larger index), so the forest is unique.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "catline/geometry.hpp"

namespace catline {

struct WireEdge {
  std::size_t i = 0;
  std::size_t j = 0;
  double length = 0.0;
};

struct WireGraph {
  std::size_t node_count = 0;
  std::vector<WireEdge> edges;

  double total_weight() const {
    double w = 0.0;
    for (const auto& e : edges) w += e.length;
    return w;
  }
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

namespace detail {

inline constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct EdgeKey {
  double d2 = std::numeric_limits<double>::infinity();
  std::size_t lo = kNone;
  std::size_t hi = kNone;

  bool valid() const { return lo != kNone; }
  bool operator<(const EdgeKey& o) const { return std::tie(d2, lo, hi) < std::tie(o.d2, o.lo, o.hi); }
};

class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> pts, std::size_t leaf_size = 12) : pts_(pts), leaf_(leaf_size) {
    perm_.resize(pts.size());
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    nodes_.reserve(2 * pts.size() / leaf_ + 2);
    if (!pts.empty()) build(0, pts.size());
  }

  // Marks subtrees whose points all share one component.
  void label(std::span<const std::size_t> comp) {
    if (!nodes_.empty()) label_node(0, comp);
  }

  // Lightest edge from point i to a point of another component, limited to
  // squared length gap2.
  EdgeKey nearest_foreign(std::size_t i, std::span<const std::size_t> comp, double gap2) const {
    EdgeKey best;
    if (!nodes_.empty()) query(0, i, comp, gap2, best);
    return best;
  }

  // Indices of all points within radius r of q.
  template <class F>
  void for_each_within(const Vec3& q, double r, F&& f) const {
    if (!nodes_.empty()) within(0, q, r * r, f);
  }

 private:
  struct Node {
    Vec3 lo, hi;
    std::size_t begin = 0, end = 0;
    std::int64_t left = -1, right = -1;
    std::size_t comp = kNone;
  };

  std::int64_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int64_t>(nodes_.size());
    nodes_.push_back({});
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t k = begin; k < end; ++k) {
      lo = lo.cwiseMin(pts_[perm_[k]]);
      hi = hi.cwiseMax(pts_[perm_[k]]);
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin > leaf_) {
      int axis = 0;
      (hi - lo).maxCoeff(&axis);
      const std::size_t mid = begin + (end - begin) / 2;
      std::nth_element(perm_.begin() + static_cast<std::ptrdiff_t>(begin), perm_.begin() + static_cast<std::ptrdiff_t>(mid),
                       perm_.begin() + static_cast<std::ptrdiff_t>(end),
                       [&](std::size_t a, std::size_t b) {
                         return pts_[a][axis] < pts_[b][axis] || (pts_[a][axis] == pts_[b][axis] && a < b);
                       });
      const std::int64_t l = build(begin, mid);
      const std::int64_t r = build(mid, end);
      nodes_[id].left = l;
      nodes_[id].right = r;
    }
    return id;
  }

  std::size_t label_node(std::int64_t id, std::span<const std::size_t> comp) {
    Node& n = nodes_[id];
    if (n.left < 0) {
      std::size_t c = comp[perm_[n.begin]];
      for (std::size_t k = n.begin + 1; k < n.end && c != kNone; ++k)
        if (comp[perm_[k]] != c) c = kNone;
      n.comp = c;
    } else {
      const std::size_t a = label_node(n.left, comp);
      const std::size_t b = label_node(n.right, comp);
      nodes_[id].comp = (a == b) ? a : kNone;
    }
    return nodes_[id].comp;
  }

  static double box_dist2(const Node& n, const Vec3& q) {
    const Vec3 d = (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  void query(std::int64_t id, std::size_t i, std::span<const std::size_t> comp, double gap2, EdgeKey& best) const {
    const Node& n = nodes_[id];
    const std::size_t ci = comp[i];
    if (n.comp == ci) return;
    const Vec3& q = pts_[i];
    const double limit = best.valid() ? best.d2 : gap2;
    if (box_dist2(n, q) > limit) return;
    if (n.left < 0) {
      for (std::size_t k = n.begin; k < n.end; ++k) {
        const std::size_t j = perm_[k];
        if (comp[j] == ci) continue;
        const double d2 = (pts_[j] - q).squaredNorm();
        const EdgeKey cand{d2, std::min(i, j), std::max(i, j)};
        if (best.valid() ? cand < best : d2 <= gap2) best = cand;
      }
      return;
    }
    const double dl = box_dist2(nodes_[n.left], q);
    const double dr = box_dist2(nodes_[n.right], q);
    if (dl <= dr) {
      query(n.left, i, comp, gap2, best);
      query(n.right, i, comp, gap2, best);
    } else {
      query(n.right, i, comp, gap2, best);
      query(n.left, i, comp, gap2, best);
    }
  }

  template <class F>
  void within(std::int64_t id, const Vec3& q, double r2, F& f) const {
    const Node& n = nodes_[id];
    if (box_dist2(n, q) > r2) return;
    if (n.left < 0) {
      for (std::size_t k = n.begin; k < n.end; ++k)
        if ((pts_[perm_[k]] - q).squaredNorm() <= r2) f(perm_[k]);
      return;
    }
    within(n.left, q, r2, f);
    within(n.right, q, r2, f);
  }

  std::span<const Vec3> pts_;
  std::size_t leaf_;
  std::vector<std::size_t> perm_;
  std::vector<Node> nodes_;
};

}  // namespace detail

/// Minimum spanning forest of the points using only edges of length <= max_gap.
inline WireGraph build_mst(std::span<const Vec3> pts, double max_gap) {
  if (!(max_gap > 0.0)) throw std::invalid_argument("build_mst: max_gap must be positive");
  WireGraph g;
  g.node_count = pts.size();
  if (pts.empty()) return g;
  const double gap2 = max_gap * max_gap;
  detail::KdTree tree(pts);
  UnionFind uf(pts.size());
  std::vector<std::size_t> comp(pts.size());
  std::vector<detail::EdgeKey> best(pts.size());
  g.edges.reserve(pts.size());

  // Points that found no foreign neighbor within the gap never will again:
  // components only grow, so the candidate set only shrinks.
  std::vector<std::uint8_t> exhausted(pts.size(), 0);
  for (;;) {
    for (std::size_t i = 0; i < pts.size(); ++i) comp[i] = uf.find(i);
    tree.label(comp);
    std::fill(best.begin(), best.end(), detail::EdgeKey{});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (exhausted[i]) continue;
      const detail::EdgeKey e = tree.nearest_foreign(i, comp, gap2);
      if (!e.valid()) {
        exhausted[i] = 1;
        continue;
      }
      detail::EdgeKey& b = best[comp[i]];
      if (!b.valid() || e < b) b = e;
    }
    bool added = false;
    for (std::size_t c = 0; c < pts.size(); ++c) {
      const detail::EdgeKey& e = best[c];
      if (!e.valid()) continue;
      if (uf.unite(e.lo, e.hi)) {
        g.edges.push_back({e.lo, e.hi, std::sqrt(e.d2)});
        added = true;
      }
    }
    if (!added) break;
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const WireEdge& a, const WireEdge& b) {
    return std::tie(a.length, a.i, a.j) < std::tie(b.length, b.i, b.j);
  });
  return g;
}

inline WireGraph build_mst(std::span<const Point3> pts, double max_gap) {
  std::vector<Vec3> v;
  v.reserve(pts.size());
  for (const auto& p : pts) v.push_back(p.vec());
  return build_mst(std::span<const Vec3>(v), max_gap);
}

}  // namespace catline
