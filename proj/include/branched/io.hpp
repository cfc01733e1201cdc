#pragma once

// Text formats.
//
// Measure:   {"dim": 2, "L": 1, "origin": [0,0], "atoms": [{"x": [..], "m": ..}, ..]}
// Instance:  {"dim": 2, "L": 1, "origin": [0,0], "mu0": [atoms], "mu1": [atoms]}
// Plan:      {"dim": 2, "L": 1, "origin": [0,0],
//             "curves": [{"mass": .., "times": [..], "points": [[..], ..]}, ..]}
// Path CSV:  time,atom,x0..,mass,v0..   one row per atom per grid node
//
// "origin" is optional and defaults to the zero vector.

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "branched/dynamical_paths.hpp"
#include "branched/errors.hpp"
#include "branched/exact_ot.hpp"
#include "branched/geometry.hpp"
#include "branched/traffic_plans.hpp"

namespace branched {

struct Instance {
  DomainBox box;
  AtomicMeasure mu0;
  AtomicMeasure mu1;
};

namespace detail {

using json = nlohmann::json;

inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

inline json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": " + line_col(text, e.byte == 0 ? 0 : e.byte - 1) + ": malformed JSON");
  }
}

inline const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing field \"" + key + "\"");
  return *it;
}

inline double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ParseError(where + ": expected a number");
  return v.get<double>();
}

inline Point point(const json& v, std::size_t dim, const std::string& where) {
  if (!v.is_array() || v.size() != dim)
    throw ParseError(where + ": expected an array of " + std::to_string(dim) + " numbers");
  std::vector<double> c;
  for (std::size_t i = 0; i < dim; ++i) c.push_back(number(v[i], where + "[" + std::to_string(i) + "]"));
  return Point(std::move(c));
}

inline DomainBox parse_box(const json& doc, const std::string& where) {
  const json& dj = field(doc, "dim", where);
  if (!dj.is_number_integer() || dj.get<long long>() < 1) throw ParseError(where + ".dim: expected a positive integer");
  const auto dim = static_cast<std::size_t>(dj.get<long long>());
  const double L = number(field(doc, "L", where), where + ".L");
  Point origin(dim);
  if (doc.contains("origin")) origin = point(doc["origin"], dim, where + ".origin");
  DomainBox box{dim, L, origin};
  try {
    box.validate();
  } catch (const Error& e) {
    throw ParseError(where + ": " + e.what());
  }
  return box;
}

inline std::vector<Atom> parse_atoms(const json& arr, const DomainBox& box, const std::string& where) {
  if (!arr.is_array()) throw ParseError(where + ": expected an array of atoms");
  std::vector<Atom> atoms;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    atoms.push_back({point(field(arr[i], "x", w), box.dim, w + ".x"), number(field(arr[i], "m", w), w + ".m")});
  }
  return atoms;
}

inline json box_json(const DomainBox& box) {
  return {{"dim", box.dim}, {"L", box.edge}, {"origin", box.origin.vec()}};
}

inline json atoms_json(const AtomicMeasure& mu) {
  json arr = json::array();
  for (const Atom& a : mu.atoms()) arr.push_back({{"x", a.x.vec()}, {"m", a.mass}});
  return arr;
}

inline std::string slurp(std::istream& in) {
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline std::string slurp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  return slurp(in);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Measures and instances

inline AtomicMeasure parse_measure(const std::string& text, const std::string& source = "measure") {
  const auto doc = detail::parse_json(text, source);
  const DomainBox box = detail::parse_box(doc, source);
  return make_measure(detail::parse_atoms(detail::field(doc, "atoms", source), box, source + ".atoms"), box);
}

inline Instance parse_instance(const std::string& text, const std::string& source = "instance") {
  const auto doc = detail::parse_json(text, source);
  const DomainBox box = detail::parse_box(doc, source);
  AtomicMeasure mu0 = make_measure(detail::parse_atoms(detail::field(doc, "mu0", source), box, source + ".mu0"), box);
  AtomicMeasure mu1 = make_measure(detail::parse_atoms(detail::field(doc, "mu1", source), box, source + ".mu1"), box);
  return {box, std::move(mu0), std::move(mu1)};
}

inline AtomicMeasure read_measure_file(const std::string& path) { return parse_measure(detail::slurp_file(path), path); }
inline Instance read_instance_file(const std::string& path) { return parse_instance(detail::slurp_file(path), path); }

inline nlohmann::json measure_to_json(const AtomicMeasure& mu) {
  auto doc = detail::box_json(mu.box());
  doc["atoms"] = detail::atoms_json(mu);
  return doc;
}

inline nlohmann::json instance_to_json(const AtomicMeasure& mu0, const AtomicMeasure& mu1) {
  auto doc = detail::box_json(mu0.box());
  doc["mu0"] = detail::atoms_json(mu0);
  doc["mu1"] = detail::atoms_json(mu1);
  return doc;
}

inline void write_measure(std::ostream& os, const AtomicMeasure& mu) {
  os << measure_to_json(mu).dump(2) << '\n';
}

inline void write_instance(std::ostream& os, const AtomicMeasure& mu0, const AtomicMeasure& mu1) {
  os << instance_to_json(mu0, mu1).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Traffic plans

inline TrafficPlan parse_plan(const std::string& text, const std::string& source = "plan") {
  const auto doc = detail::parse_json(text, source);
  TrafficPlan q{detail::parse_box(doc, source), {}};
  const auto& curves = detail::field(doc, "curves", source);
  if (!curves.is_array()) throw ParseError(source + ".curves: expected an array");
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const std::string w = source + ".curves[" + std::to_string(c) + "]";
    const double mass = detail::number(detail::field(curves[c], "mass", w), w + ".mass");
    const auto& tj = detail::field(curves[c], "times", w);
    const auto& pj = detail::field(curves[c], "points", w);
    if (!tj.is_array() || !pj.is_array() || tj.size() != pj.size())
      throw ParseError(w + ": times and points must be arrays of equal length");
    std::vector<double> times;
    std::vector<Point> points;
    for (std::size_t s = 0; s < tj.size(); ++s) {
      times.push_back(detail::number(tj[s], w + ".times[" + std::to_string(s) + "]"));
      points.push_back(detail::point(pj[s], q.box.dim, w + ".points[" + std::to_string(s) + "]"));
    }
    try {
      q.curves.emplace_back(std::move(times), std::move(points), mass);
    } catch (const PreconditionError& e) {
      throw ParseError(w + ": " + e.what());
    }
  }
  return q;
}

inline TrafficPlan read_plan_file(const std::string& path) { return parse_plan(detail::slurp_file(path), path); }

inline nlohmann::json plan_to_json(const TrafficPlan& q) {
  auto doc = detail::box_json(q.box);
  auto curves = nlohmann::json::array();
  for (const MassCurve& c : q.curves) {
    auto pts = nlohmann::json::array();
    for (const Point& p : c.points) pts.push_back(p.vec());
    curves.push_back({{"mass", c.mass}, {"times", c.times}, {"points", pts}});
  }
  doc["curves"] = curves;
  return doc;
}

inline void write_plan(std::ostream& os, const TrafficPlan& q) { os << plan_to_json(q).dump(2) << '\n'; }

// ---------------------------------------------------------------------------
// Dynamical paths

inline void write_path_csv(std::ostream& os, const DynamicalPath& path) {
  const std::size_t d = path.box().dim;
  os << "time,atom";
  for (std::size_t c = 0; c < d; ++c) os << ",x" << c;
  os << ",mass";
  for (std::size_t c = 0; c < d; ++c) os << ",v" << c;
  os << '\n' << std::setprecision(17);
  for (const TimeSlice& s : path.slices())
    for (std::size_t a = 0; a < s.atoms.size(); ++a) {
      os << s.time << ',' << a;
      for (std::size_t c = 0; c < d; ++c) os << ',' << s.atoms[a].x[c];
      os << ',' << s.atoms[a].mass;
      for (std::size_t c = 0; c < d; ++c) os << ',' << s.atoms[a].v[c];
      os << '\n';
    }
}

/// Reads the CSV written by write_path_csv. The file does not store links;
/// they are rebuilt interval by interval as the optimal quadratic coupling
/// between the predicted arrivals x + v dt and the atoms of the next slice,
/// which recovers the original links whenever arrivals are distinct.
inline DynamicalPath parse_path_csv(const std::string& text, const DomainBox& box,
                                    const std::string& source = "path") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": empty file");
  const std::size_t d = box.dim;
  std::size_t columns = 1;
  for (char ch : line) columns += ch == ',' ? 1 : 0;
  if (columns != 3 + 2 * d || line.rfind("time,atom", 0) != 0)
    throw ParseError(source + ": line 1: header must be time,atom,x0..,mass,v0.. for dimension " + std::to_string(d));
  std::vector<TimeSlice> slices;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(source + ": line " + std::to_string(lineno) + ": column " + std::to_string(vals.size() + 1) +
                         ": not a number: \"" + cell + "\"");
      }
    }
    if (vals.size() != columns)
      throw ParseError(source + ": line " + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                       " fields, got " + std::to_string(vals.size()));
    const double t = vals[0];
    if (slices.empty() || slices.back().time != t) {
      if (!slices.empty() && !(t > slices.back().time))
        throw ParseError(source + ": line " + std::to_string(lineno) + ": times must increase");
      slices.push_back({t, {}});
    }
    if (static_cast<std::size_t>(vals[1]) != slices.back().atoms.size())
      throw ParseError(source + ": line " + std::to_string(lineno) + ": atom ids must count up from 0 in each slice");
    std::vector<double> x(vals.begin() + 2, vals.begin() + 2 + static_cast<std::ptrdiff_t>(d));
    std::vector<double> v(vals.begin() + 3 + static_cast<std::ptrdiff_t>(d), vals.end());
    slices.back().atoms.push_back({Point(std::move(x)), vals[2 + d], Point(std::move(v))});
  }
  if (slices.size() < 2) throw ParseError(source + ": a path needs at least two time nodes");
  std::vector<std::vector<Link>> links(slices.size() - 1);
  for (std::size_t k = 0; k + 1 < slices.size(); ++k) {
    const double dt = slices[k + 1].time - slices[k].time;
    std::vector<Atom> arrivals;
    for (const PathAtom& a : slices[k].atoms) arrivals.push_back({a.x + a.v * dt, a.mass});
    const std::vector<Atom> next = slices[k + 1].as_atoms();
    try {
      const OtSolution sol = solve_transport(arrivals, next, 2.0);
      for (const PlanEntry& e : sol.plan.entries) links[k].push_back({e.i, e.k, e.mass});
    } catch (const BalanceError& e) {
      throw ParseError(source + ": slices at t=" + std::to_string(slices[k].time) + " and t=" +
                       std::to_string(slices[k + 1].time) + " carry different masses");
    }
  }
  return DynamicalPath(box, std::move(slices), std::move(links));
}

inline DynamicalPath read_path_csv_file(const std::string& path, const DomainBox& box) {
  return parse_path_csv(detail::slurp_file(path), box, path);
}

}  // namespace branched
