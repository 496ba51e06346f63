#pragma once

// File formats: point input (CSV, fixed binary records), polyline export
// (GeoJSON, CSV) and the JSON documents used by the command-line tool.
//
// Binary point record: x, y, z as little-endian float64, then a uint8 class.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "catline/pipeline.hpp"
#include "catline/scene.hpp"

namespace catline {

using Json = nlohmann::ordered_json;

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input record; `line` is 1-based (a record number for binary input).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class PointFormat { csv, binary };

inline PointFormat parse_point_format(std::string_view s) {
  if (s == "csv") return PointFormat::csv;
  if (s == "bin" || s == "binary") return PointFormat::binary;
  throw std::invalid_argument("unknown point format '" + std::string(s) + "' (csv or binary)");
}

/// Guess from the extension: .bin is binary, everything else CSV.
inline PointFormat point_format_for(const std::string& path) {
  const auto dot = path.rfind('.');
  return dot != std::string::npos && path.substr(dot) == ".bin" ? PointFormat::binary : PointFormat::csv;
}

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::size_t> records;  // source line (CSV) or record number (binary), 1-based
  std::size_t total_records = 0;     // before the class filter
  bool has_class = false;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kBinaryRecordSize = 25;

namespace detail {

inline std::string fmt_double(double v) {
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  const auto is_sep = [](char ch) { return ch == ',' || ch == ';' || ch == ' ' || ch == '\t'; };
  const bool commas = line.find_first_of(",;") != std::string_view::npos;
  std::size_t i = 0;
  while (i <= line.size()) {
    std::size_t j = i;
    if (commas) {
      while (j < line.size() && line[j] != ',' && line[j] != ';') ++j;
    } else {
      while (i < line.size() && is_sep(line[i])) ++i;
      if (i == line.size()) break;
      j = i;
      while (j < line.size() && !is_sep(line[j])) ++j;
    }
    out.push_back(line.substr(i, j - i));
    i = j + 1;
  }
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
  while (!out.empty() && std::isspace(static_cast<unsigned char>(out.front()))) out.erase(out.begin());
  return out;
}

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int k = 0; k < 8; ++k) r |= ((v >> (8 * k)) & 0xFFu) << (56 - 8 * k);
    return r;
  }
  return v;
}

inline PointCloud load_csv(std::istream& in, std::optional<int> class_filter) {
  PointCloud pc;
  std::array<int, 4> col{0, 1, 2, -1};  // x, y, z, class
  bool layout_known = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto fields = split_fields(line);
    if (!layout_known) {
      layout_known = true;
      double probe = 0.0;
      if (!parse_double(fields[0], probe)) {
        // header row: locate columns by name
        col = {-1, -1, -1, -1};
        for (std::size_t k = 0; k < fields.size(); ++k) {
          const std::string name = lower(fields[k]);
          if (name == "x") col[0] = static_cast<int>(k);
          else if (name == "y") col[1] = static_cast<int>(k);
          else if (name == "z") col[2] = static_cast<int>(k);
          else if (name == "class" || name == "classification") col[3] = static_cast<int>(k);
        }
        if (col[0] < 0 || col[1] < 0 || col[2] < 0) throw ParseError(line_no, "header lacks x, y or z column");
        pc.has_class = col[3] >= 0;
        continue;
      }
      if (fields.size() < 3) throw ParseError(line_no, "expected at least 3 fields");
      if (fields.size() >= 4) col[3] = 3;
      pc.has_class = col[3] >= 0;
    }
    const int need = *std::max_element(col.begin(), col.end());
    if (static_cast<int>(fields.size()) <= need) throw ParseError(line_no, "expected " + std::to_string(need + 1) + " fields");
    Vec3 p;
    for (int k = 0; k < 3; ++k)
      if (!parse_double(fields[static_cast<std::size_t>(col[static_cast<std::size_t>(k)])], p[k]) || !std::isfinite(p[k]))
        throw ParseError(line_no, "bad coordinate '" + std::string(fields[static_cast<std::size_t>(col[static_cast<std::size_t>(k)])]) + "'");
    ++pc.total_records;
    if (pc.has_class) {
      double cls = 0.0;
      const auto f = fields[static_cast<std::size_t>(col[3])];
      if (!parse_double(f, cls) || cls != std::floor(cls)) throw ParseError(line_no, "bad class '" + std::string(f) + "'");
      if (class_filter && static_cast<long long>(cls) != *class_filter) continue;
    }
    pc.points.push_back(p);
    pc.records.push_back(line_no);
  }
  return pc;
}

inline PointCloud load_binary(std::istream& in, std::optional<int> class_filter) {
  PointCloud pc;
  pc.has_class = true;
  std::array<char, kBinaryRecordSize> rec{};
  std::size_t n = 0;
  while (true) {
    in.read(rec.data(), rec.size());
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    ++n;
    if (got != rec.size()) throw ParseError(n, "truncated binary record (" + std::to_string(got) + " of 25 bytes)");
    Vec3 p;
    for (int k = 0; k < 3; ++k) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, rec.data() + 8 * k, 8);
      bits = to_le(bits);
      p[k] = std::bit_cast<double>(bits);
    }
    if (!p.allFinite()) throw ParseError(n, "non-finite coordinate");
    ++pc.total_records;
    const int cls = static_cast<unsigned char>(rec[24]);
    if (class_filter && cls != *class_filter) continue;
    pc.points.push_back(p);
    pc.records.push_back(n);
  }
  return pc;
}

}  // namespace detail

/// Points whose class matches the filter, in input order. Without a class
/// column every point is kept and a warning is recorded.
inline PointCloud load_points(std::istream& in, PointFormat format, std::optional<int> class_filter) {
  PointCloud pc = format == PointFormat::csv ? detail::load_csv(in, class_filter) : detail::load_binary(in, class_filter);
  if (class_filter && !pc.has_class)
    pc.warnings.push_back("input has no class column; class filter " + std::to_string(*class_filter) +
                          " ignored, all points kept");
  return pc;
}

inline PointCloud load_points(const std::string& path, PointFormat format, std::optional<int> class_filter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return load_points(in, format, class_filter);
}

inline void write_points_csv(std::ostream& out, std::span<const Vec3> pts, std::optional<int> cls) {
  out << (cls ? "x,y,z,class\n" : "x,y,z\n");
  for (const auto& p : pts) {
    out << detail::fmt_double(p.x()) << ',' << detail::fmt_double(p.y()) << ',' << detail::fmt_double(p.z());
    if (cls) out << ',' << *cls;
    out << '\n';
  }
}

inline void write_points_binary(std::ostream& out, std::span<const Vec3> pts, std::uint8_t cls) {
  std::array<char, kBinaryRecordSize> rec{};
  for (const auto& p : pts) {
    for (int k = 0; k < 3; ++k) {
      const std::uint64_t bits = detail::to_le(std::bit_cast<std::uint64_t>(p[k]));
      std::memcpy(rec.data() + 8 * k, &bits, 8);
    }
    rec[24] = static_cast<char>(cls);
    out.write(rec.data(), rec.size());
  }
}

inline void write_points(const std::string& path, std::span<const Vec3> pts, PointFormat format, int cls) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  if (format == PointFormat::csv) write_points_csv(out, pts, cls);
  else write_points_binary(out, pts, static_cast<std::uint8_t>(cls));
  if (!out) throw IoError("write failed: " + path);
}

/// Length in meters from "0.8", "0.8m", "80cm" or "800mm".
inline double parse_length(const std::string& text) {
  std::string_view s = text;
  double scale = 1.0;
  if (s.ends_with("mm")) scale = 1e-3, s.remove_suffix(2);
  else if (s.ends_with("cm")) scale = 1e-2, s.remove_suffix(2);
  else if (s.ends_with("m")) s.remove_suffix(1);
  double v = 0.0;
  if (!detail::parse_double(s, v) || !std::isfinite(v)) throw std::invalid_argument("bad length '" + text + "' (e.g. 0.8m, 80cm)");
  return v * scale;
}

/// Degrees, with an optional "deg" suffix.
inline double parse_angle(const std::string& text) {
  std::string_view s = text;
  if (s.ends_with("deg")) s.remove_suffix(3);
  double v = 0.0;
  if (!detail::parse_double(s, v) || !std::isfinite(v)) throw std::invalid_argument("bad angle '" + text + "'");
  return v;
}

// ---- JSON documents ----

inline Json to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Json to_json(const PlaneFrame& f) {
  return Json{{"origin", to_json(f.origin)}, {"axis_x", to_json(f.axis_x)}, {"axis_y", to_json(f.axis_y)},
              {"normal", to_json(f.normal)}};
}

inline Json to_json(const CatenaryCurve& k) {
  return Json{{"frame", to_json(k.frame)}, {"c", k.c}, {"a", k.a}, {"m", k.m}, {"x_min", k.x_min}, {"x_max", k.x_max}};
}

inline CatenaryCurve curve_from_json(const Json& j) {
  CatenaryCurve k;
  const Json& f = j.at("frame");
  k.frame.origin = vec3_from_json(f.at("origin"));
  k.frame.axis_x = vec3_from_json(f.at("axis_x"));
  k.frame.axis_y = vec3_from_json(f.at("axis_y"));
  k.frame.normal = vec3_from_json(f.at("normal"));
  k.c = j.at("c").get<double>();
  k.a = j.at("a").get<double>();
  k.m = j.at("m").get<double>();
  k.x_min = j.value("x_min", 0.0);
  k.x_max = j.value("x_max", 0.0);
  return k;
}

inline Json polylines_geojson(const std::vector<WirePolyline>& wires) {
  Json features = Json::array();
  for (const auto& w : wires) {
    Json coords = Json::array();
    for (const auto& v : w.vertices) coords.push_back(to_json(v));
    features.push_back(Json{{"type", "Feature"},
                            {"geometry", {{"type", "LineString"}, {"coordinates", std::move(coords)}}},
                            {"properties",
                             {{"cluster_id", w.source_cluster},
                              {"rms", w.rms},
                              {"point_count", w.point_count},
                              {"outlier_count", w.outlier_count},
                              {"c", w.curve.c},
                              {"a", w.curve.a},
                              {"m", w.curve.m},
                              {"x_min", w.curve.x_min},
                              {"x_max", w.curve.x_max},
                              {"tilt_deg", w.tilt_deg},
                              {"frame", to_json(w.curve.frame)}}}});
  }
  return Json{{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

inline void write_polylines_geojson(std::ostream& out, const std::vector<WirePolyline>& wires) {
  out << polylines_geojson(wires).dump(1) << '\n';
}

/// wire_id,seq,x,y,z rows; coordinates in shortest round-trip form.
inline void write_polylines_csv(std::ostream& out, const std::vector<WirePolyline>& wires) {
  out << "wire_id,seq,x,y,z\n";
  for (const auto& w : wires)
    for (std::size_t k = 0; k < w.vertices.size(); ++k) {
      const Vec3& v = w.vertices[k];
      out << w.source_cluster << ',' << k << ',' << detail::fmt_double(v.x()) << ',' << detail::fmt_double(v.y()) << ','
          << detail::fmt_double(v.z()) << '\n';
    }
}

enum class PolylineFormat { geojson, csv };

inline PolylineFormat parse_polyline_format(std::string_view s) {
  if (s == "geojson" || s == "json") return PolylineFormat::geojson;
  if (s == "csv") return PolylineFormat::csv;
  throw std::invalid_argument("unknown output format '" + std::string(s) + "' (geojson or csv)");
}

inline void export_polylines(const std::vector<WirePolyline>& wires, const std::string& path, PolylineFormat format) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  if (format == PolylineFormat::geojson) write_polylines_geojson(out, wires);
  else write_polylines_csv(out, wires);
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

inline Json to_json(const PipelineReport& r) {
  Json stages = Json::object();
  for (const auto& [name, sec] : r.stage_seconds) stages[name] = sec;
  Json rej = Json::object();
  for (const auto& [name, n] : r.rejections) rej[name] = n;
  return Json{{"input_points", r.input_points},
              {"assigned", r.assigned},
              {"outliers", r.outliers},
              {"unassigned", r.unassigned},
              {"conserved", r.conserved()},
              {"groups", r.groups},
              {"mst_edges", r.mst_edges},
              {"combined_polylines", r.combined_polylines},
              {"partitions", r.partitions},
              {"infeasible_polylines", r.infeasible_polylines},
              {"initial_clusters", r.initial_clusters},
              {"refine_rounds", r.refine_rounds},
              {"refine_converged", r.refine_converged},
              {"merges", r.merges},
              {"recovered_clusters", r.recovered_clusters},
              {"end_claimed", r.end_claimed},
              {"rejections", std::move(rej)},
              {"stage_seconds", std::move(stages)}};
}

/// Reads every key present in `j` into `cfg`; unknown keys are an error.
inline void apply_config_json(const Json& j, PipelineConfig& cfg) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  // lengths and angles may be numbers or strings with a unit
  const auto length = [](const Json& v) { return v.is_string() ? parse_length(v.get<std::string>()) : v.get<double>(); };
  const auto angle = [](const Json& v) { return v.is_string() ? parse_angle(v.get<std::string>()) : v.get<double>(); };
  for (const auto& [key, v] : j.items()) {
    if (key == "class") cfg.wire_class_code = v.get<int>();
    else if (key == "tolerance") cfg.point_tolerance = length(v);
    else if (key == "separation") cfg.wire_separation = length(v);
    else if (key == "max_gap") cfg.max_sampling_gap = length(v);
    else if (key == "line_tol") cfg.output_line_tolerance = length(v);
    else if (key == "wind_span") cfg.min_wind_span = length(v);
    else if (key == "max_angle") cfg.max_deviation_angle_deg = angle(v);
    else if (key == "wind_correction") cfg.wind_correction = v.get<bool>();
    else if (key == "min_length") cfg.min_wire_length = length(v);
    else if (key == "end_radius") cfg.end_search_radius = length(v);
    else if (key == "n_min") cfg.n_min = v.get<std::size_t>();
    else if (key == "n_max") cfg.n_max = v.get<std::size_t>();
    else if (key == "ratio_threshold") cfg.ratio_threshold = v.get<double>();
    else if (key == "small_partition_size") cfg.small_partition_size = v.get<std::size_t>();
    else if (key == "merge_rms_factor") cfg.merge_rms_factor = v.get<double>();
    else if (key == "max_rounds") cfg.max_rounds = v.get<int>();
    else if (key == "min_points") cfg.min_points = v.get<std::size_t>();
    else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

inline SceneSpec scene_spec_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("scene spec: expected a JSON object");
  SceneSpec s;
  for (const auto& [key, v] : j.items()) {
    if (key == "wires") s.wires = v.get<int>();
    else if (key == "spans") s.spans = v.get<int>();
    else if (key == "span_length") s.span_length = v.get<double>();
    else if (key == "separation") s.separation = v.get<double>();
    else if (key == "tower_height") s.tower_height = v.get<double>();
    else if (key == "height_jitter") s.height_jitter = v.get<double>();
    else if (key == "a_min") s.a_min = v.get<double>();
    else if (key == "a_max") s.a_max = v.get<double>();
    else if (key == "max_turn_deg") s.max_turn_deg = v.get<double>();
    else if (key == "noise_sigma") s.noise_sigma = v.get<double>();
    else if (key == "outlier_fraction") s.outlier_fraction = v.get<double>();
    else if (key == "points") s.points = v.get<std::size_t>();
    else if (key == "origin") s.origin = vec3_from_json(v);
    else if (key == "seed") s.seed = v.get<std::uint64_t>();
    else if (key == "gaps") {
      for (const auto& g : v)
        s.gaps.push_back({g.at("wire").get<int>(), g.at("span").get<int>(), g.value("start", 0.5), g.value("length", 20.0)});
    } else {
      throw std::invalid_argument("scene spec: unknown key '" + key + "'");
    }
  }
  validate(s);
  return s;
}

inline Json truth_json(const Scene& scene) {
  Json curves = Json::array();
  for (std::size_t i = 0; i < scene.curves.size(); ++i) {
    Json c = to_json(scene.curves[i].curve);
    c["id"] = i;
    c["wire"] = scene.curves[i].wire;
    c["span"] = scene.curves[i].span;
    curves.push_back(std::move(c));
  }
  return Json{{"curves", std::move(curves)}, {"source", scene.source}};
}

}  // namespace catline
