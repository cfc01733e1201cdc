#pragma once

// Experiment drivers behind the command-line tool. Each run_* writes a JSON
// summary to `os`, optionally a CSV table to config.out, and returns the
// process exit code.

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "branched/branched_graph.hpp"
#include "branched/branched_solver.hpp"
#include "branched/dynamical_paths.hpp"
#include "branched/errors.hpp"
#include "branched/exact_ot.hpp"
#include "branched/geometry.hpp"
#include "branched/io.hpp"
#include "branched/random_instances.hpp"
#include "branched/traffic_plans.hpp"

namespace branched {

enum ExitCode : int { kExitOk = 0, kExitPrecondition = 2, kExitProperty = 3, kExitConvergence = 4 };

/// Environment variable overriding the worker count of run_verify.
inline constexpr const char* kThreadsEnv = "BRANCHED_THREADS";

struct ExperimentConfig {
  std::string command;
  std::vector<std::string> inputs;
  double alpha = 0.5;
  std::optional<double> p;  // defaults to 1/alpha
  int j_min = 0;
  int j_max = 5;
  std::size_t grid = kDefaultGridSize;
  std::string mode;  // distance: enumerate|heuristic, dyadic: bound|probe
  std::uint64_t seed = 42;
  long long trials = 100;
  std::string out;
  std::size_t dim = 2;  // dyadic runs on the unit cube when no input is given
  bool inject_sentinel = false;

  double exponent_p() const { return p ? *p : 1.0 / alpha; }

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw PreconditionError("--alpha must lie in (0,1]");
    if (j_min < 0 || j_max < j_min) throw PreconditionError("--j-min/--j-max must satisfy 0 <= j-min <= j-max");
    if (grid < 1) throw PreconditionError("--grid must be >= 1");
    if (dim < 1) throw PreconditionError("--dim must be >= 1");
  }
};

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline const std::string& single_input(const ExperimentConfig& cfg) {
  if (cfg.inputs.size() != 1) throw PreconditionError(cfg.command + ": exactly one --input is required");
  return cfg.inputs.front();
}

template <typename Fn>
void write_out(const ExperimentConfig& cfg, Fn&& fn) {
  if (cfg.out.empty()) return;
  std::ofstream f(cfg.out);
  if (!f) throw PreconditionError("cannot open output file " + cfg.out);
  fn(f);
}

// int F dt; at alpha = 1 the integrand is |q|(Omega).
inline double path_cost(const DynamicalPath& path, double alpha) {
  if (alpha < 1.0) return total_F(path, alpha);
  double total = 0.0;
  for (std::size_t k = 0; k < path.intervals(); ++k) total += flux_mass(path.slice(k)) * path.duration(k);
  return total;
}

inline ordered_json number_or_string(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// d_alpha with its graph, the W_{1/alpha} lower bound, and the cost of the
/// dynamical path induced by the graph's synchronized traffic plan.
inline int run_distance(const ExperimentConfig& cfg, std::ostream& os) {
  cfg.validate();
  const Instance inst = read_instance_file(detail::single_input(cfg));
  DalphaMode mode = DalphaMode::enumerate;
  if (cfg.mode == "heuristic") mode = DalphaMode::heuristic;
  else if (!cfg.mode.empty() && cfg.mode != "enumerate")
    throw PreconditionError("distance: --mode must be enumerate or heuristic");
  const DalphaResult res = compute_dalpha(inst.mu0, inst.mu1, cfg.alpha, mode);
  const double lower = dalpha_lower_bound(inst.mu0, inst.mu1, cfg.alpha);
  double e = 0.0, c = 0.0, f = 0.0;
  if (!res.graph.edges.empty()) {
    const TrafficPlan plan = graph_to_traffic_plan(res.graph);
    e = energy_E(plan, cfg.alpha);
    c = energy_C(plan, cfg.alpha);
    f = detail::path_cost(plan_to_path(plan, cfg.grid), cfg.alpha);
  }
  ordered_json rep;
  rep["command"] = "distance";
  rep["alpha"] = cfg.alpha;
  rep["mode"] = mode == DalphaMode::enumerate ? "enumerate" : "heuristic";
  rep["dalpha"] = res.value;
  rep["exact"] = res.exact;
  rep["topologies_tried"] = res.topologies_tried;
  rep["w_lower"] = lower;
  rep["energy_E"] = e;
  rep["energy_C"] = c;
  rep["path_F"] = f;
  ordered_json edges = ordered_json::array();
  for (const GraphEdge& ed : res.graph.edges)
    edges.push_back({{"tail", res.graph.vertices[ed.tail].x.vec()},
                     {"head", res.graph.vertices[ed.head].x.vec()},
                     {"flux", ed.flux},
                     {"length", res.graph.edge_length(ed)}});
  rep["edges"] = edges;
  const bool agrees = std::abs(f - res.value) <= 1e-6 * std::max(1.0, res.value);
  rep["path_matches_dalpha"] = agrees;
  os << rep.dump(2) << '\n';
  detail::write_out(cfg, [&](std::ostream& f_out) { write_graph_csv(f_out, res.graph); });
  if (!agrees)
    throw PropertyError("distance: path cost " + std::to_string(f) + " differs from d_alpha " +
                        std::to_string(res.value));
  return kExitOk;
}

/// Lower/upper bounds, the ratio to W_p^(d(alpha-1)+1) and the per-level
/// dyadic routes.
inline int run_bounds(const ExperimentConfig& cfg, std::ostream& os) {
  cfg.validate();
  const Instance inst = read_instance_file(detail::single_input(cfg));
  const BoundReport r = sandwich_report(inst.mu0, inst.mu1, cfg.alpha, cfg.exponent_p(), cfg.j_min, cfg.j_max);
  ordered_json rep;
  rep["command"] = "bounds";
  rep["alpha"] = r.alpha;
  rep["p"] = r.p;
  rep["dim"] = r.dim;
  rep["w_lower"] = r.record.w_lower;
  rep["dalpha_upper"] = r.record.dalpha_upper;
  rep["upper_exact"] = r.record.upper_exact;
  rep["w_p"] = r.record.w_p;
  rep["exponent"] = r.record.exponent;
  rep["ratio"] = r.record.ratio;
  rep["j_star"] = r.record.j_star;
  ordered_json rows = ordered_json::array();
  for (const DyadicRecord& d : r.dyadic)
    rows.push_back({{"j", d.j},
                    {"hierarchical", d.hierarchical},
                    {"rhs", d.rhs},
                    {"middle", d.middle},
                    {"middle_bound", d.middle_bound},
                    {"middle_support", d.middle_support},
                    {"route", d.route}});
  rep["dyadic"] = rows;
  os << rep.dump(2) << '\n';
  detail::write_out(cfg, [&](std::ostream& f) {
    f << "j,hierarchical,rhs,middle,middle_bound,middle_support,route\n";
    for (const DyadicRecord& d : r.dyadic)
      f << d.j << ',' << detail::csv_number(d.hierarchical) << ',' << detail::csv_number(d.rhs) << ','
        << detail::csv_number(d.middle) << ',' << detail::csv_number(d.middle_bound) << ',' << d.middle_support
        << ',' << detail::csv_number(d.route) << '\n';
  });
  return kExitOk;
}

/// Relative slack when comparing a hierarchical cost with the closed-form
/// bound; the Lebesgue measure attains the bound, so only rounding separates
/// the two.
inline constexpr double kDyadicSlack = 1e-12;

/// Dyadic table. Bound mode compares the hierarchical cost with the closed
/// form bound; probe mode reports the cost from level 0 to j and its log2
/// slope in j, for any alpha.
inline int run_dyadic(const ExperimentConfig& cfg, std::ostream& os) {
  cfg.validate();
  const bool probe = cfg.mode == "probe";
  if (!probe && !cfg.mode.empty() && cfg.mode != "bound")
    throw PreconditionError("dyadic: --mode must be bound or probe");
  std::optional<AtomicMeasure> atomic;
  std::optional<CellWeights> cells;
  if (cfg.inputs.empty()) {
    cells = CellWeights::lebesgue(DomainBox{cfg.dim, 1.0, Point(cfg.dim)});
  } else {
    atomic = read_measure_file(detail::single_input(cfg));
  }
  const DomainBox box = atomic ? atomic->box() : cells->box;
  const double mass = atomic ? atomic->total_mass() : cells->total_mass();
  const bool above = cfg.alpha > 1.0 - 1.0 / static_cast<double>(box.dim);
  if (!probe && !above) detail::check_threshold(box.dim, cfg.alpha, "dyadic");

  struct Row {
    int j;
    double cost, rhs;
  };
  std::vector<Row> rows;
  for (int j = cfg.j_min; j <= cfg.j_max; ++j) {
    double cost = 0.0;
    if (probe) cost = atomic ? dyadic_probe_cost(*atomic, j, cfg.alpha) : dyadic_probe_cost(*cells, j, cfg.alpha);
    else cost = atomic ? dyadic_upper_bound(*atomic, j, cfg.alpha) : dyadic_upper_bound(*cells, j, cfg.alpha);
    const double rhs = above ? std::pow(mass, cfg.alpha) * dyadic_rhs_bound(box.dim, cfg.alpha, box.edge, j)
                             : std::numeric_limits<double>::quiet_NaN();
    rows.push_back({j, cost, rhs});
  }
  ordered_json rep;
  rep["command"] = "dyadic";
  rep["mode"] = probe ? "probe" : "bound";
  rep["measure"] = atomic ? "atomic" : cells->name;
  rep["dim"] = box.dim;
  rep["alpha"] = cfg.alpha;
  rep["threshold"] = 1.0 - 1.0 / static_cast<double>(box.dim);
  bool all_within = true;
  ordered_json table = ordered_json::array();
  std::vector<double> xs, ys;
  for (const Row& r : rows) {
    ordered_json row{{"j", r.j}, {probe ? "probe_cost" : "hierarchical", r.cost}};
    if (above) {
      row["rhs"] = r.rhs;
      row["ratio"] = r.cost / r.rhs;
      if (!probe) {
        const bool within = r.cost <= r.rhs * (1.0 + kDyadicSlack);
        row["within"] = within;
        all_within = all_within && within;
      }
    } else {
      row["rhs"] = "threshold";
    }
    table.push_back(row);
    if (r.cost > 0.0) {
      xs.push_back(r.j);
      ys.push_back(r.cost);
    }
  }
  rep["rows"] = table;
  if (xs.size() >= 2) rep["log2_slope"] = log2_slope(xs, ys);
  if (above) rep["predicted_slope"] = static_cast<double>(box.dim) * (1.0 - cfg.alpha) - 1.0;
  if (!probe) rep["all_within"] = all_within;
  os << rep.dump(2) << '\n';
  detail::write_out(cfg, [&](std::ostream& f) {
    f << "j," << (probe ? "probe_cost" : "hierarchical") << ",rhs,ratio\n";
    for (const Row& r : rows)
      f << r.j << ',' << detail::csv_number(r.cost) << ',' << detail::csv_number(r.rhs) << ','
        << detail::csv_number(r.cost / r.rhs) << '\n';
  });
  return all_within ? kExitOk : kExitProperty;
}

/// Energies of a traffic plan and of its dynamical path.
inline int run_energies(const ExperimentConfig& cfg, std::ostream& os) {
  cfg.validate();
  const TrafficPlan q = read_plan_file(detail::single_input(cfg));
  const DynamicalPath path = plan_to_path(q, cfg.grid);
  const auto [m0, m1] = endpoint_marginals(q);
  ordered_json rep;
  rep["command"] = "energies";
  rep["alpha"] = cfg.alpha;
  rep["curves"] = q.curves.size();
  rep["total_mass"] = q.total_mass();
  rep["source_atoms"] = m0.size();
  rep["target_atoms"] = m1.size();
  rep["energy_E"] = energy_E(q, cfg.alpha);
  rep["energy_C"] = energy_C(q, cfg.alpha);
  rep["path_F"] = detail::number_or_string(detail::path_cost(path, cfg.alpha));
  rep["grid_nodes"] = path.slices().size();
  rep["benamou_brenier"] = benamou_brenier_Ap(path, cfg.exponent_p());
  os << rep.dump(2) << '\n';
  detail::write_out(cfg, [&](std::ostream& f) { write_path_csv(f, path); });
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Property suite

struct PropertyOutcome {
  bool pass = true;
  std::string detail;
  ordered_json replay;  // the failing input
};

struct Property {
  std::string name;
  std::function<PropertyOutcome(Rng&, long long trial, const ExperimentConfig&)> check;
};

namespace detail {

inline ordered_json slice_json(const TimeSlice& s) {
  ordered_json atoms = ordered_json::array();
  for (const PathAtom& a : s.atoms) atoms.push_back({{"x", a.x.vec()}, {"m", a.mass}, {"v", a.v.vec()}});
  return atoms;
}

inline PropertyOutcome check_slice(Rng& rng, long long trial, const ExperimentConfig& cfg) {
  const std::size_t d = 1 + std::uniform_int_distribution<std::size_t>(0, 2)(rng);
  const DomainBox box{d, 1.0, Point(d)};
  TimeSlice s = random_slice(rng, box, 1 + std::uniform_int_distribution<std::size_t>(0, 7)(rng));
  const double alpha = uniform(rng, 0.05, 0.95);
  if (cfg.inject_sentinel && trial == 0) {
    Point v(d);
    v[0] = 1.0;
    s.atoms.push_back({random_point(rng, box), 0.0, v});
  }
  const double f = slice_F(s, alpha);
  const double n = velocity_norm(s, 1.0 / alpha);
  const double q = flux_mass(s);
  PropertyOutcome out;
  const double tol = 1e-12 * std::max(1.0, f);
  if (is_infinite_energy(f)) {
    out = {false, "slice_F is the infinite-energy sentinel", {}};
  } else if (!(f + tol >= n && n + tol >= q)) {
    out = {false, "slice_F >= ||v||_{1/alpha} >= |q| violated", {}};
  }
  if (!out.pass) out.replay = {{"alpha", alpha}, {"dim", d}, {"slice", slice_json(s)}};
  return out;
}

inline PropertyOutcome check_e_le_c(Rng& rng, long long, const ExperimentConfig&) {
  const DomainBox box{2, 1.0, Point(2)};
  const TrafficPlan q = random_plan(rng, box, 1 + std::uniform_int_distribution<std::size_t>(0, 5)(rng));
  const double alpha = uniform(rng, 0.1, 1.0);
  const double e = energy_E(q, alpha), c = energy_C(q, alpha);
  if (e <= c + 1e-9) return {};
  return {false, "energy_E > energy_C", {{"alpha", alpha}, {"plan", plan_to_json(q)}}};
}

inline PropertyOutcome check_path_le_c(Rng& rng, long long, const ExperimentConfig&) {
  const DomainBox box{2, 1.0, Point(2)};
  const TrafficPlan q = random_plan(rng, box, 1 + std::uniform_int_distribution<std::size_t>(0, 5)(rng));
  const double alpha = uniform(rng, 0.1, 0.99);
  const double f = total_F(plan_to_path(q, 16), alpha), c = energy_C(q, alpha);
  if (f <= c + 1e-9) return {};
  return {false, "total_F(plan_to_path) > energy_C", {{"alpha", alpha}, {"plan", plan_to_json(q)}}};
}

inline PropertyOutcome check_reparam(Rng& rng, long long, const ExperimentConfig&) {
  const DomainBox box{2, 1.0, Point(2)};
  const TrafficPlan q = random_plan(rng, box, 1 + std::uniform_int_distribution<std::size_t>(0, 3)(rng));
  const DynamicalPath path = plan_to_path(q, 8);
  const double alpha = uniform(rng, 0.1, 0.99);
  const int which = std::uniform_int_distribution<int>(0, 2)(rng);
  const double knot = uniform(rng, 0.2, 0.8), value = uniform(rng, 0.2, 0.8);
  std::function<double(double)> phi;
  if (which == 0) phi = [](double t) { return t * t; };
  else if (which == 1) phi = [](double t) { return std::sqrt(t); };
  else phi = [=](double t) { return t < knot ? value * t / knot : value + (1.0 - value) * (t - knot) / (1.0 - knot); };
  const double before = total_F(path, alpha), after = total_F(reparametrize(path, phi), alpha);
  if (std::abs(after - before) <= 1e-9) return {};
  return {false, "total_F changed under reparametrization",
          {{"alpha", alpha}, {"map", which}, {"knot", knot}, {"value", value}, {"plan", plan_to_json(q)}}};
}

inline PropertyOutcome check_acyclic(Rng& rng, long long, const ExperimentConfig&) {
  const DomainBox box{2, 1.0, Point(2)};
  const std::size_t n = uniform(rng) < 0.5 ? 4 : 16;
  const AtomicMeasure a = random_measure(rng, box, n), b = random_measure(rng, box, n);
  const double p = uniform(rng) < 0.5 ? 1.0 : 2.0;
  const OtSolution sol = solve_kantorovich(a, b, p);
  if (sol.is_vertex && assert_acyclic_support(sol)) return {};
  return {false, "vertex plan has a cyclic or oversized support", {{"p", p}, {"instance", instance_to_json(a, b)}}};
}

inline PropertyOutcome check_sandwich(Rng& rng, long long, const ExperimentConfig&) {
  const DomainBox box{2, 1.0, Point(2)};
  const AtomicMeasure a = random_measure(rng, box, 1 + std::uniform_int_distribution<std::size_t>(0, 2)(rng));
  const AtomicMeasure b = random_measure(rng, box, 1 + std::uniform_int_distribution<std::size_t>(0, 2)(rng));
  static constexpr double alphas[] = {0.6, 0.75, 0.9};
  const double alpha = alphas[std::uniform_int_distribution<int>(0, 2)(rng)];
  const double w = dalpha_lower_bound(a, b, alpha);
  const double d = compute_dalpha(a, b, alpha).value;
  if (w <= d + 1e-9) return {};
  return {false, "W_{1/alpha} > d_alpha", {{"alpha", alpha}, {"instance", instance_to_json(a, b)}}};
}

inline unsigned worker_count() {
  if (const char* env = std::getenv(kThreadsEnv)) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

}  // namespace detail

inline std::vector<Property> verify_properties() {
  return {{"slice_inequalities", detail::check_slice},   {"energy_E_le_C", detail::check_e_le_c},
          {"path_F_le_C", detail::check_path_le_c},      {"reparametrization", detail::check_reparam},
          {"acyclic_support", detail::check_acyclic},    {"sandwich_lower", detail::check_sandwich}};
}

/// Randomized property suite. Trials run on worker threads; every trial
/// draws from its own seeded stream and results are reported in trial order,
/// so the report does not depend on the thread count.
inline int run_verify(const ExperimentConfig& cfg, std::ostream& os) {
  cfg.validate();
  if (cfg.trials < 1) throw PreconditionError("verify: --trials must be >= 1 (empty suite)");
  const std::vector<Property> props = verify_properties();
  const auto trials = static_cast<std::size_t>(cfg.trials);
  std::vector<std::vector<PropertyOutcome>> results(trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next++) < trials;) {
      results[t].resize(props.size());
      for (std::size_t k = 0; k < props.size(); ++k) {
        Rng rng = trial_rng(cfg.seed, t * props.size() + k);
        try {
          results[t][k] = props[k].check(rng, static_cast<long long>(t), cfg);
        } catch (const std::exception& e) {
          results[t][k] = {false, std::string("exception: ") + e.what(), {}};
        }
      }
    }
  };
  const unsigned threads = std::min<unsigned>(detail::worker_count(), static_cast<unsigned>(trials));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();

  ordered_json rep;
  rep["command"] = "verify";
  rep["seed"] = cfg.seed;
  rep["trials"] = cfg.trials;
  ordered_json summary = ordered_json::object();
  ordered_json failures = ordered_json::array();
  bool all = true;
  for (std::size_t k = 0; k < props.size(); ++k) {
    std::size_t passed = 0, failed = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const PropertyOutcome& o = results[t][k];
      if (o.pass) {
        ++passed;
        continue;
      }
      ++failed;
      failures.push_back({{"property", props[k].name}, {"trial", t}, {"detail", o.detail}, {"input", o.replay}});
    }
    summary[props[k].name] = {{"passed", passed}, {"failed", failed}};
    all = all && failed == 0;
  }
  rep["properties"] = summary;
  rep["all_passed"] = all;
  if (!all) {
    const std::string path = cfg.out.empty() ? std::string("verify_failures.json") : cfg.out;
    std::ofstream f(path);
    if (f) {
      f << ordered_json{{"seed", cfg.seed}, {"trials", cfg.trials}, {"failures", failures}}.dump(2) << '\n';
      rep["replay"] = path;
    }
  }
  os << rep.dump(2) << '\n';
  return all ? kExitOk : kExitProperty;
}

/// Dispatches on config.command; errors are left to the caller.
inline int run(const ExperimentConfig& cfg, std::ostream& os) {
  if (cfg.command == "distance") return run_distance(cfg, os);
  if (cfg.command == "bounds") return run_bounds(cfg, os);
  if (cfg.command == "dyadic") return run_dyadic(cfg, os);
  if (cfg.command == "energies") return run_energies(cfg, os);
  if (cfg.command == "verify") return run_verify(cfg, os);
  throw PreconditionError("unknown command \"" + cfg.command + "\" (distance, bounds, dyadic, energies, verify)");
}

/// Maps library errors to the documented exit codes and prints the message.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const PropertyError*>(&e)) return kExitProperty;
  if (dynamic_cast<const ConvergenceFailure*>(&e)) return kExitConvergence;
  if (dynamic_cast<const Error*>(&e)) return kExitPrecondition;
  return 1;
}

}  // namespace branched
