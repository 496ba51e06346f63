#pragma once

// End-to-end extraction: group -> spanning forest -> combined polylines ->
// optimal division -> refinement -> final fit -> densified polylines.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "catline/cluster.hpp"
#include "catline/fit.hpp"
#include "catline/mst.hpp"
#include "catline/refine.hpp"
#include "catline/segment.hpp"

namespace catline {

struct PipelineConfig {
  int wire_class_code = 14;
  double point_tolerance = 0.8;         // T
  double wire_separation = 1.0;
  double max_sampling_gap = 15.0;
  double output_line_tolerance = 0.01;
  double min_wind_span = 60.0;
  double max_deviation_angle_deg = 10.0;
  bool wind_correction = true;
  double min_wire_length = 5.0;
  double end_search_radius = 10.0;
  std::size_t n_min = 5;
  std::size_t n_max = 50;
  double ratio_threshold = 0.25;
  std::size_t small_partition_size = 5;
  double merge_rms_factor = 1.25;
  int max_rounds = 20;
  std::size_t min_points = 8;
  std::uint64_t seed = 0;  // recorded only; every stage is deterministic

  // Performance knobs. Points are grouped in cubes of `group_cell` (0 picks
  // separation / 4) before the spanning forest; combined points are merged
  // along each polyline until they span `coarsen_length`.
  double group_cell = 0.0;
  double coarsen_length = 2.0;
  std::size_t segment_fit_points = 128;
  std::size_t segment_window = 400;
  std::size_t refine_fit_points = 5000;
  double segment_prune_margin = 2.0;  // see SegmentPenaltyConfig::prune_margin
  double refine_extent_margin = 0.0;  // 0 picks the end search radius
  double refine_settle_fraction = 1e-5;
  // A polyline with no admissible division (every run through some stretch is
  // rejected as not a catenary) is handed to refinement in pieces of this length.
  double fallback_piece_length = 50.0;
  bool recovery_pass = true;

  double effective_group_cell() const { return group_cell > 0 ? group_cell : wire_separation / 4.0; }

  void validate() const {
    const double lengths[] = {point_tolerance, wire_separation, max_sampling_gap, output_line_tolerance,
                              min_wind_span, min_wire_length, end_search_radius, coarsen_length};
    for (double v : lengths)
      if (!(v > 0) || !std::isfinite(v)) throw std::invalid_argument("config: every length must be positive");
    if (!(output_line_tolerance < point_tolerance))
      throw std::invalid_argument("config: output line tolerance must be below the point tolerance");
    if (!(max_deviation_angle_deg >= 0 && max_deviation_angle_deg < 90))
      throw std::invalid_argument("config: deviation angle must be in [0, 90)");
    if (n_min < 1 || n_max < n_min) throw std::invalid_argument("config: need 1 <= N_min <= N_max");
    if (!(ratio_threshold > 0 && ratio_threshold <= 1)) throw std::invalid_argument("config: ratio threshold in (0, 1]");
    if (!(merge_rms_factor >= 1)) throw std::invalid_argument("config: merge rms factor must be >= 1");
    if (max_rounds < 1 || min_points < 3) throw std::invalid_argument("config: max_rounds >= 1, min_points >= 3");
    if (group_cell < 0 || group_cell >= max_sampling_gap) throw std::invalid_argument("config: group cell must be below the gap");
  }

  FitConfig fit_config() const {
    FitConfig f;
    f.deviation_threshold = point_tolerance;
    f.min_points = min_points;
    f.wind.enabled = wind_correction;
    f.wind.min_span = min_wind_span;
    f.wind.max_deviation_angle_deg = max_deviation_angle_deg;
    return f;
  }
};

struct WirePolyline {
  std::vector<Vec3> vertices;
  std::size_t source_cluster = 0;
  CatenaryCurve curve;
  double rms = 0.0;
  std::size_t point_count = 0;    // inliers of the final fit
  std::size_t outlier_count = 0;  // members rejected by the final fit
  double tilt_deg = 0.0;
  bool stable = false;
  std::vector<std::size_t> members;  // inlier indices into the input
};

struct PipelineReport {
  std::size_t input_points = 0;
  std::size_t groups = 0;
  std::size_t mst_edges = 0;
  std::size_t combined_polylines = 0;
  std::size_t partitions = 0;
  std::size_t infeasible_polylines = 0;  // cut into fixed pieces instead
  std::size_t initial_clusters = 0;
  int refine_rounds = 0;
  bool refine_converged = false;
  std::size_t merges = 0;
  std::size_t recovered_clusters = 0;  // fitted pieces found among leftover points
  std::size_t end_claimed = 0;
  std::size_t assigned = 0;
  std::size_t outliers = 0;
  std::size_t unassigned = 0;
  std::map<std::string, std::size_t> rejections;  // dissolved clusters by reason
  std::vector<std::pair<std::string, double>> stage_seconds;

  bool conserved() const { return assigned + outliers + unassigned == input_points; }
};

struct PipelineResult {
  std::vector<WirePolyline> wires;
  std::vector<std::size_t> unassigned;
  PipelineReport report;
};

/// Vertices on the curve from x_min to x_max such that every chord stays
/// within `tolerance` of the curve. A chord over [x, x + h] deviates by at
/// most K h^2 / 8 where K bounds y'' = cosh((x - m) / a) / a on the interval.
inline std::vector<Vec3> densify(const CatenaryCurve& k, double tolerance) {
  if (!(tolerance > 0)) throw std::invalid_argument("densify: tolerance must be positive");
  std::vector<Vec3> out;
  const auto lift = [&](double x) { return k.frame.lift({x, evaluate(k, x)}); };
  const auto curvature = [&](double x) { return std::cosh((x - k.m) / k.a) / k.a; };
  double x = k.x_min;
  out.push_back(lift(x));
  while (x < k.x_max) {
    double h = std::sqrt(8.0 * tolerance / curvature(x));
    // y'' peaks at the end farther from the vertex
    h = std::sqrt(8.0 * tolerance / std::max(curvature(x), curvature(std::min(x + h, k.x_max))));
    x = x + h >= k.x_max ? k.x_max : x + h;
    out.push_back(lift(x));
  }
  return out;
}

namespace detail {

struct Grouping {
  std::vector<Vec3> centers;
  std::vector<std::vector<std::size_t>> members;
};

// Cube grouping in order of first occurrence.
inline Grouping group_points(std::span<const Vec3> pts, double cell) {
  Grouping g;
  std::unordered_map<Cell, std::size_t, CellHash> index;
  index.reserve(pts.size() / 4 + 16);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    auto [it, fresh] = index.try_emplace(cell_of(pts[i], cell), g.members.size());
    if (fresh) g.members.emplace_back();
    g.members[it->second].push_back(i);
  }
  g.centers.reserve(g.members.size());
  for (const auto& m : g.members) {
    Vec3 s = Vec3::Zero();
    for (std::size_t i : m) s += pts[i];
    g.centers.push_back(s / static_cast<double>(m.size()));
  }
  return g;
}

// Merges consecutive combined points until each spans `length`.
inline std::vector<std::vector<std::size_t>> coarsen(const CombinedPolyline& poly, double length) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  Vec3 anchor = Vec3::Zero();
  for (const auto& cp : poly.combined_points) {
    if (cur.empty()) anchor = cp.representative;
    cur.insert(cur.end(), cp.point_indices.begin(), cp.point_indices.end());
    if ((cp.representative - anchor).norm() >= length) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) {
    if (out.empty()) out.push_back(std::move(cur));
    else out.back().insert(out.back().end(), cur.begin(), cur.end());
  }
  return out;
}

// Consecutive coarse groups joined into pieces whose centroids span `length`.
inline std::vector<std::vector<std::size_t>> cut_pieces(const std::vector<std::vector<Vec3>>& pos,
                                                        const std::vector<std::vector<std::size_t>>& groups,
                                                        double length) {
  std::vector<std::vector<std::size_t>> out(1);
  Vec3 prev = Vec3::Zero();
  double run = 0.0;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : pos[k]) c += p;
    c /= static_cast<double>(pos[k].size());
    if (k > 0) run += (c - prev).norm();
    prev = c;
    if (run >= length) {
      out.emplace_back();
      run = 0.0;
    }
    out.back().insert(out.back().end(), groups[k].begin(), groups[k].end());
  }
  return out;
}

class StageClock {
 public:
  explicit StageClock(PipelineReport& r) : report_(r), last_(std::chrono::steady_clock::now()) {}
  void lap(const char* name) {
    const auto now = std::chrono::steady_clock::now();
    report_.stage_seconds.emplace_back(name, std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }

 private:
  PipelineReport& report_;
  std::chrono::steady_clock::time_point last_;
};

// Forest, polylines and optimal division of `pts`: the initial clusters of
// refinement, with member indices into `pts`.
inline std::vector<WireCluster> initial_clusters(std::span<const Vec3> pts, const PipelineConfig& cfg,
                                                 PipelineReport& rep, StageClock* clock) {
  const detail::Grouping groups = detail::group_points(pts, cfg.effective_group_cell());
  rep.groups += groups.centers.size();
  if (clock) clock->lap("group");

  const WireGraph graph = build_mst(std::span<const Vec3>(groups.centers), cfg.max_sampling_gap);
  rep.mst_edges += graph.edges.size();
  if (clock) clock->lap("spanning_forest");

  ClusterConfig cc{cfg.n_min, cfg.n_max, cfg.ratio_threshold};
  auto polys = reduce_graph(graph, std::span<const Vec3>(groups.centers), cc);
  polys = expand_groups(std::move(polys), std::span<const std::vector<std::size_t>>(groups.members), pts);
  rep.combined_polylines += polys.size();
  if (clock) clock->lap("polylines");

  SegmentPenaltyConfig sc;
  sc.deviation_threshold = cfg.point_tolerance;
  sc.small_partition_size = cfg.small_partition_size;
  sc.max_window = cfg.segment_window;
  sc.max_fit_points = cfg.segment_fit_points;
  sc.prune_margin = cfg.segment_prune_margin;
  sc.fit = cfg.fit_config();
  std::vector<WireCluster> init;
  for (const auto& poly : polys) {
    if (poly.point_count() < cfg.min_points) continue;
    const auto cps = detail::coarsen(poly, cfg.coarsen_length);
    std::vector<std::vector<Vec3>> pos(cps.size());
    for (std::size_t k = 0; k < cps.size(); ++k) pos[k] = detail::gather_points(pts, cps[k]);
    const Division d = segment_polyline(std::span<const std::vector<Vec3>>(pos), sc);
    if (!(d.total_score > -std::numeric_limits<double>::infinity())) {
      ++rep.infeasible_polylines;
      for (auto& piece : detail::cut_pieces(pos, cps, cfg.fallback_piece_length)) {
        ++rep.partitions;
        if (piece.size() < cfg.min_points) continue;
        WireCluster c;
        c.member_indices = std::move(piece);
        init.push_back(std::move(c));
      }
      continue;
    }
    rep.partitions += d.partition_count();
    for (std::size_t p = 0; p < d.partition_count(); ++p) {
      const std::size_t lo = p == 0 ? 0 : d.cut_indices[p - 1];
      const std::size_t hi = p < d.cut_indices.size() ? d.cut_indices[p] : cps.size();
      WireCluster c;
      for (std::size_t k = lo; k < hi; ++k) c.member_indices.insert(c.member_indices.end(), cps[k].begin(), cps[k].end());
      if (std::isfinite(d.partition_penalties[p]) && d.curves[p].is_valid() && d.curves[p].x_max > d.curves[p].x_min) {
        c.curve = d.curves[p];
        c.fitted = true;
      }
      if (c.member_indices.size() >= cfg.min_points) init.push_back(std::move(c));
    }
  }
  return init;
}

}  // namespace detail

/// Extracts one densified polyline per wire span from already filtered points.
inline PipelineResult run_pipeline(std::span<const Vec3> pts, const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult res;
  PipelineReport& rep = res.report;
  rep.input_points = pts.size();
  if (pts.empty()) return res;
  detail::StageClock clock(rep);

  std::vector<WireCluster> init = detail::initial_clusters(pts, cfg, rep, &clock);
  rep.initial_clusters = init.size();
  clock.lap("segmentation");

  RefineConfig rc;
  rc.deviation_threshold = cfg.point_tolerance;
  rc.wire_separation = cfg.wire_separation;
  rc.max_rounds = cfg.max_rounds;
  rc.merge_rms_factor = cfg.merge_rms_factor;
  rc.min_points = cfg.min_points;
  rc.min_wire_length = cfg.min_wire_length;
  rc.max_fit_points = cfg.refine_fit_points;
  rc.settle_fraction = cfg.refine_settle_fraction;
  rc.split_failed = true;
  rc.extent_margin = cfg.refine_extent_margin > 0 ? cfg.refine_extent_margin : cfg.end_search_radius;
  rc.fit = cfg.fit_config();
  RefineResult refined = refine(pts, std::move(init), rc);
  rep.refine_rounds = refined.rounds;
  rep.refine_converged = refined.converged;
  rep.merges = refined.merges;
  if (refined.dissolved > 0) rep.rejections["dissolved_during_refinement"] += refined.dissolved;
  clock.lap("refinement");

  // Points orphaned by dissolved clusters get a second chance: the leftover
  // points go through the forest and division again, and the pieces
  // join the surviving clusters for another refinement.
  if (cfg.recovery_pass && refined.unassigned.size() >= cfg.min_points) {
    const std::vector<Vec3> left = detail::gather_points(pts, refined.unassigned);
    PipelineReport scratch;
    std::vector<WireCluster> extra = detail::initial_clusters(left, cfg, scratch, nullptr);
    if (!extra.empty()) {
      rep.recovered_clusters = extra.size();
      for (auto& c : extra)
        for (auto& i : c.member_indices) i = refined.unassigned[i];
      std::vector<WireCluster> clusters = std::move(refined.clusters);
      clusters.insert(clusters.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
      refined = refine(pts, std::move(clusters), rc);
      rep.refine_rounds += refined.rounds;
      rep.refine_converged = rep.refine_converged && refined.converged;
      rep.merges += refined.merges;
      if (refined.dissolved > 0) rep.rejections["dissolved_during_refinement"] += refined.dissolved;
    }
    clock.lap("recovery");
  }

  rep.end_claimed =
      extend_ends(pts, refined.clusters, refined.unassigned, cfg.end_search_radius, cfg.point_tolerance);
  clock.lap("end_extension");

  // Final fit on every member; rejected members are reported as outliers.
  FitConfig fc = cfg.fit_config();
  std::vector<bool> taken(pts.size(), false);
  std::size_t id = 0;
  for (auto& c : refined.clusters) {
    const auto sub = detail::gather_points(pts, c.member_indices);
    const FitResult r = robust_fit(std::span<const Vec3>(sub), fc, &c.curve);
    std::string reason;
    if (!r.ok()) reason = std::string("final_fit_") + to_string(r.status);
    else if (r.curve.length() < cfg.min_wire_length) reason = "shorter_than_min_wire_length";
    if (!reason.empty()) {
      ++rep.rejections[reason];
      continue;
    }
    WirePolyline w;
    w.source_cluster = id++;
    w.curve = r.curve;
    w.rms = r.rms;
    w.point_count = r.inliers.size();
    w.outlier_count = r.outliers.size();
    w.stable = c.stable;
    w.tilt_deg = std::asin(std::clamp(r.curve.frame.normal.z(), -1.0, 1.0)) * 180.0 / std::numbers::pi;
    for (std::size_t k : r.inliers) w.members.push_back(c.member_indices[k]);
    for (std::size_t k : c.member_indices) taken[k] = true;
    w.vertices = densify(w.curve, cfg.output_line_tolerance);
    rep.assigned += w.point_count;
    rep.outliers += w.outlier_count;
    res.wires.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (!taken[i]) res.unassigned.push_back(i);
  rep.unassigned = res.unassigned.size();
  clock.lap("final_fit");
  return res;
}

}  // namespace catline
