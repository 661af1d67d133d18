#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "satstereo/dsm.hpp"
#include "satstereo/dsm_eval.hpp"
#include "satstereo/errors.hpp"
#include "satstereo/harness.hpp"
#include "satstereo/matches.hpp"
#include "satstereo/orientation.hpp"
#include "satstereo/pair_selection.hpp"
#include "satstereo/rpc.hpp"
#include "satstereo/rpc_io.hpp"

namespace py = pybind11;
using namespace satstereo;

namespace {

using Row = std::tuple<double, double, double, double, std::optional<double>>;

py::dict load_report(const MatchLoadReport& r) {
  std::vector<Row> rows;
  rows.reserve(r.set.size());
  for (const auto& m : r.set.matches) rows.emplace_back(m.p1.sample, m.p1.line, m.p2.sample, m.p2.line, m.score);
  std::vector<std::pair<std::size_t, std::string>> rejected;
  for (const auto& x : r.rejected) rejected.emplace_back(x.line, x.reason);
  py::dict d;
  d["matches"] = rows;
  d["rejected"] = rejected;
  d["duplicates"] = r.duplicates;
  return d;
}

MatchSet to_set(const std::vector<Row>& rows) {
  MatchSet s;
  for (const auto& [x1, y1, x2, y2, score] : rows) s.matches.push_back({{x1, y1}, {x2, y2}, score});
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Satellite stereo engine: RPC geometry, match files and metrics";

  // Translators run newest first, so the base class goes in before its subclasses.
  py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<RpcModel>(m, "RpcModel")
      .def("project",
           [](const RpcModel& r, double lat, double lon, double h) {
             const ImagePoint p = project(r, {lat, lon, h});
             return std::make_pair(p.sample, p.line);
           },
           py::arg("lat"), py::arg("lon"), py::arg("h"))
      .def("inverse_project",
           [](const RpcModel& r, double sample, double line, double h) {
             const GroundPoint g = inverse_project(r, {sample, line}, h);
             return std::make_pair(g.lat, g.lon);
           },
           py::arg("sample"), py::arg("line"), py::arg("h"));

  m.def("load_rpc", &load_rpc, py::arg("path"));
  m.def("triangulate",
        [](const RpcModel& a, const RpcModel& b, std::pair<double, double> p1,
           std::pair<double, double> p2) {
          const Triangulation t = triangulate(a, b, {p1.first, p1.second}, {p2.first, p2.second});
          return std::make_tuple(t.point.lat, t.point.lon, t.point.h, t.residual_px);
        });

  m.def("parse_matches",
        [](const std::string& text, std::pair<int, int> size_a, std::pair<int, int> size_b) {
          return load_report(parse_matches(text, "", "", {size_a.first, size_a.second},
                                           {size_b.first, size_b.second}));
        },
        py::arg("text"), py::arg("size_a"), py::arg("size_b"));
  m.def("load_matches",
        [](const std::filesystem::path& path, std::pair<int, int> size_a, std::pair<int, int> size_b) {
          return load_report(load_matches(path, "", "", {size_a.first, size_a.second},
                                          {size_b.first, size_b.second}));
        },
        py::arg("path"), py::arg("size_a"), py::arg("size_b"));
  m.def("format_matches", [](const std::vector<Row>& rows) { return format_matches(to_set(rows)); },
        py::arg("rows"));

  m.def("month_diff", &month_diff);
  m.def("relative_change", &relative_change, py::arg("m_lsm"), py::arg("m_plain"));
  m.def("five_number", [](std::vector<double> v) -> std::optional<py::dict> {
    const auto f = five_number(std::move(v));
    if (!f) return std::nullopt;
    py::dict d;
    d["min"] = f->min;
    d["q1"] = f->q1;
    d["median"] = f->median;
    d["q3"] = f->q3;
    d["max"] = f->max;
    return d;
  });
  m.def("orientation_gate",
        [](std::size_t inliers, double rms, double threshold, int min_inliers) {
          OrientationConfig cfg;
          cfg.max_epipolar_rms = threshold;
          cfg.min_inliers = min_inliers;
          return orientation_gate(inliers, rms, cfg);
        },
        py::arg("inliers"), py::arg("epipolar_rms"), py::arg("threshold") = 5.0,
        py::arg("min_inliers") = 5);
  m.def("dsm_scores",
        [](const std::filesystem::path& generated, const std::filesystem::path& truth) {
          const DsmScores s = evaluate_dsm(read_ascii_grid(generated), read_ascii_grid(truth));
          py::dict d;
          d["completeness"] = s.completeness;
          d["rmse"] = s.rmse;
          d["shift"] = std::make_tuple(s.registration.shift.dx, s.registration.shift.dy,
                                       s.registration.shift.dz);
          d["registered"] = s.registered;
          return d;
        },
        py::arg("generated"), py::arg("truth"));
}
