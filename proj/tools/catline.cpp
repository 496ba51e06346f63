// catline: extract wire polylines from a point cloud, generate synthetic
// scenes, and query the brute-force closest-point oracle.
//
// Exit codes: 0 success, 1 usage, 2 input/output, 3 internal error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "catline/io.hpp"
#include "catline/oracle.hpp"
#include "catline/pipeline.hpp"
#include "catline/scene.hpp"

namespace {

using namespace catline;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(1) << '\n';
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

struct ExtractArgs {
  std::string input, out, format = "geojson", input_format, config, report;
  std::optional<int> cls;
  std::string tolerance, separation, max_gap, line_tol, wind_span, max_angle, min_length;
  std::optional<std::uint64_t> seed;
  bool no_wind = false;
  bool quiet = false;
};

int run_extract(const ExtractArgs& a) {
  PipelineConfig cfg;
  if (!a.config.empty()) {
    try {
      apply_config_json(read_json_file(a.config), cfg);
    } catch (const Json::exception& e) {
      throw UsageError(a.config + ": " + e.what());
    }
  }
  if (a.cls) cfg.wire_class_code = *a.cls;
  if (!a.tolerance.empty()) cfg.point_tolerance = parse_length(a.tolerance);
  if (!a.separation.empty()) cfg.wire_separation = parse_length(a.separation);
  if (!a.max_gap.empty()) cfg.max_sampling_gap = parse_length(a.max_gap);
  if (!a.line_tol.empty()) cfg.output_line_tolerance = parse_length(a.line_tol);
  if (!a.wind_span.empty()) cfg.min_wind_span = parse_length(a.wind_span);
  if (!a.max_angle.empty()) cfg.max_deviation_angle_deg = parse_angle(a.max_angle);
  if (!a.min_length.empty()) cfg.min_wire_length = parse_length(a.min_length);
  if (a.seed) cfg.seed = *a.seed;
  if (a.no_wind) cfg.wind_correction = false;
  cfg.validate();
  const PolylineFormat out_format = parse_polyline_format(a.format);
  const PointFormat in_format = a.input_format.empty() ? point_format_for(a.input) : parse_point_format(a.input_format);

  const PointCloud pc = load_points(a.input, in_format, cfg.wire_class_code);
  for (const auto& w : pc.warnings) std::cerr << "warning: " << w << '\n';
  const PipelineResult res = run_pipeline(pc.points, cfg);
  if (!res.report.conserved()) throw InternalError("point counts do not add up to the input");
  for (const auto& w : res.wires)
    if (w.vertices.size() < 2) throw InternalError("polyline with fewer than two vertices");
  export_polylines(res.wires, a.out, out_format);

  Json report = to_json(res.report);
  report["input_records"] = pc.total_records;
  report["seed"] = cfg.seed;
  Json wires = Json::array();
  for (const auto& w : res.wires)
    wires.push_back({{"cluster_id", w.source_cluster}, {"rms", w.rms}, {"point_count", w.point_count},
                     {"outlier_count", w.outlier_count}, {"vertices", w.vertices.size()}, {"a", w.curve.a},
                     {"tilt_deg", w.tilt_deg}, {"stable", w.stable}});
  report["wires"] = std::move(wires);
  if (!a.report.empty()) write_json_file(a.report, report);
  if (!a.quiet)
    std::cerr << res.wires.size() << " wires from " << pc.points.size() << " points (" << res.report.outliers
              << " outliers, " << res.report.unassigned << " unassigned)\n";
  return 0;
}

int run_synth(const std::string& spec_path, const std::string& out, const std::string& truth, int cls) {
  SceneSpec spec;
  try {
    spec = scene_spec_from_json(read_json_file(spec_path));
  } catch (const Json::exception& e) {
    throw UsageError(spec_path + ": " + e.what());
  }
  const Scene scene = generate_scene(spec);
  write_points(out, scene.points, point_format_for(out), cls);
  if (!truth.empty()) write_json_file(truth, truth_json(scene));
  return 0;
}

// Rows "x,y" are plane points of the curve; rows "x,y,z" are world points in
// the default frame (plane x along world x, plane y along world z).
int run_oracle(const std::string& curve_text, const std::string& points_path, std::size_t samples) {
  CatenaryCurve k;
  {
    std::vector<double> v;
    for (auto f : detail::split_fields(curve_text)) {
      double x = 0.0;
      if (!detail::parse_double(f, x)) throw UsageError("--curve expects c,a,m");
      v.push_back(x);
    }
    if (v.size() != 3 || !(v[1] > 0)) throw UsageError("--curve expects c,a,m with a > 0");
    k.c = v[0];
    k.a = v[1];
    k.m = v[2];
  }
  std::ifstream in(points_path);
  if (!in) throw IoError("cannot open " + points_path);
  std::string line;
  std::size_t line_no = 0;
  std::vector<Vec3> pts;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto f = detail::split_fields(line);
    double c[3] = {0, 0, 0};
    bool ok = f.size() == 2 || f.size() == 3;
    for (std::size_t i = 0; ok && i < f.size(); ++i) ok = detail::parse_double(f[i], c[i]);
    if (!ok && std::exchange(header_allowed, false)) continue;
    if (!ok) throw ParseError(line_no, "expected x,y or x,y,z");
    header_allowed = false;
    pts.push_back(f.size() == 2 ? k.frame.lift({c[0], c[1]}) : Vec3(c[0], c[1], c[2]));
  }
  const auto d = oracle_closest(k, pts, samples);
  std::cout << "index,distance\n";
  for (std::size_t i = 0; i < d.size(); ++i) std::cout << i << ',' << detail::fmt_double(d[i]) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extract power line catenaries from classified point clouds"};
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Fit one catenary polyline per wire span");
  extract->add_option("input", ex.input, "Point file (CSV x,y,z[,class] or 25-byte binary records)")->required();
  extract->add_option("-o,--out", ex.out, "Output polylines")->required();
  extract->add_option("-f,--format", ex.format, "geojson or csv")->check(CLI::IsMember({"geojson", "json", "csv"}));
  extract->add_option("--input-format", ex.input_format, "csv or binary (default: by extension)");
  extract->add_option("--config", ex.config, "JSON config; command-line flags take precedence");
  extract->add_option("--report", ex.report, "Write the run report as JSON");
  extract->add_option("--class", ex.cls, "Wire class code (default 14)");
  extract->add_option("--tolerance", ex.tolerance, "Point tolerance, e.g. 0.8m");
  extract->add_option("--separation", ex.separation, "Wire separation, e.g. 1m");
  extract->add_option("--max-gap", ex.max_gap, "Maximum sampling gap, e.g. 15m");
  extract->add_option("--line-tol", ex.line_tol, "Output line tolerance, e.g. 1cm");
  extract->add_option("--wind-span", ex.wind_span, "Minimum span for wind correction, e.g. 60m");
  extract->add_option("--max-angle", ex.max_angle, "Maximum wind deviation angle in degrees");
  extract->add_option("--min-length", ex.min_length, "Minimum wire length, e.g. 5m");
  extract->add_option("--seed", ex.seed, "Recorded in the report");
  extract->add_flag("--no-wind", ex.no_wind, "Keep every plane vertical");
  extract->add_flag("-q,--quiet", ex.quiet, "No summary on stderr");

  std::string spec_path, synth_out, truth_out;
  int synth_class = 14;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
  synth->add_option("spec", spec_path, "Scene spec JSON")->required();
  synth->add_option("-o,--out", synth_out, "Points (.csv or .bin)")->required();
  synth->add_option("--truth", truth_out, "Ground truth JSON");
  synth->add_option("--class", synth_class, "Class code written with every point");

  std::string curve_text, oracle_points;
  std::size_t samples = 4096;
  auto* oracle = app.add_subcommand("oracle", "Brute-force distances from points to a catenary");
  oracle->add_option("--curve", curve_text, "c,a,m")->required();
  oracle->add_option("--points", oracle_points, "CSV of x,y (plane) or x,y,z (world) rows")->required();
  oracle->add_option("--samples", samples, "Samples per branch before local refinement");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*extract) return run_extract(ex);
    if (*synth) return run_synth(spec_path, synth_out, truth_out, synth_class);
    if (*oracle) return run_oracle(curve_text, oracle_points, samples);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
