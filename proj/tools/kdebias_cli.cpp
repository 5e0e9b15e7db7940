// kdebias: command-line front end for the KDE bias lab.
//
// Every subcommand resolves its configuration from an optional --config JSON
// file overlaid with explicit flags, validates inputs and output locations,
// computes, then writes outputs atomically. The resolved configuration
// (without the thread count) is echoed into every JSON output.
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "kdebias/io.hpp"
#include "kdebias/kdebias.hpp"

namespace {

namespace kb = kdebias;
namespace fs = std::filesystem;
using kb::io::json;

constexpr int kFormatVersion = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

[[noreturn]] void invalid(const std::string& msg) { throw kb::Error(kb::ErrorCode::InvalidArgument, msg); }

/// A flag value holding inline JSON, a path to a JSON file, or a bare word.
json flag_json(const std::string& s) {
  if (s.empty()) invalid("empty flag value");
  const char c = s.front();
  if (c == '{' || c == '[' || c == '"' || c == '-' || c == '.' || std::isdigit(static_cast<unsigned char>(c)))
    return kb::io::parse_json(s, "flag value");
  if (fs::is_regular_file(s)) return kb::io::parse_json(kb::io::read_text(s), s);
  return json(s);
}

/// "x1,x2,..." -> [x1, x2, ...]
json point_flag(const std::string& s) {
  json p = json::array();
  for (const auto& cell : kb::io::split(s, ',')) p.push_back(kb::io::parse_number(cell, "point '" + s + "'"));
  return p;
}

/// Flags that override config keys (JSON pointers) only when given.
class Overrides {
 public:
  template <class T>
  CLI::Option* value(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto store = std::make_shared<T>();
    CLI::Option* o = app->add_option(flag, *store, help);
    setters_.push_back([o, store, key](json& cfg) {
      if (o->count() > 0) cfg[json::json_pointer(key)] = *store;
    });
    return o;
  }

  CLI::Option* spec(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto store = std::make_shared<std::string>();
    CLI::Option* o = app->add_option(flag, *store, help);
    setters_.push_back([o, store, key](json& cfg) {
      if (o->count() > 0) cfg[json::json_pointer(key)] = flag_json(*store);
    });
    return o;
  }

  CLI::Option* spec_list(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto store = std::make_shared<std::vector<std::string>>();
    CLI::Option* o = app->add_option(flag, *store, help);
    setters_.push_back([o, store, key](json& cfg) {
      if (o->count() == 0) return;
      json arr = json::array();
      for (const auto& s : *store) arr.push_back(flag_json(s));
      cfg[json::json_pointer(key)] = arr;
    });
    return o;
  }

  CLI::Option* points(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto store = std::make_shared<std::vector<std::string>>();
    CLI::Option* o = app->add_option(flag, *store, help);
    setters_.push_back([o, store, key](json& cfg) {
      if (o->count() == 0) return;
      json arr = json::array();
      for (const auto& s : *store) arr.push_back(point_flag(s));
      cfg[json::json_pointer(key)] = arr;
    });
    return o;
  }

  void apply(json& cfg) const {
    for (const auto& s : setters_) s(cfg);
  }

 private:
  std::vector<std::function<void(json&)>> setters_;
};

struct Command {
  CLI::App* app = nullptr;
  Overrides flags;
  std::string config_path;
  unsigned threads = kb::default_thread_count();
  std::function<int(json&, unsigned)> run;
};

void add_common(Command& c) {
  c.app->add_option("--config", c.config_path, "JSON config file; flags override its values");
  c.app->add_option("--threads", c.threads, "worker threads (default: hardware concurrency)");
  c.flags.value<std::uint64_t>(c.app, "--seed", "/seed", "RNG seed (default 0)");
  c.flags.value<double>(c.app, "--quad-rel-tol", "/quad/rel_tol", "quadrature relative tolerance");
  c.flags.value<double>(c.app, "--quad-abs-tol", "/quad/abs_tol", "quadrature absolute tolerance");
  c.flags.value<int>(c.app, "--quad-max-depth", "/quad/max_depth", "maximum subdivision depth");
  c.flags.value<std::string>(c.app, "--out", "/out", "primary output file");
  c.flags.value<std::string>(c.app, "--csv", "/csv", "CSV summary output file");
}

// ---- config helpers ----

template <class T>
T take(json& cfg, const char* key, T def) {
  if (!cfg.contains(key) || cfg[key].is_null()) cfg[key] = def;
  try {
    return cfg[key].get<T>();
  } catch (const json::exception&) {
    invalid(std::string("config key '") + key + "' has the wrong type");
  }
}

json take_json(json& cfg, const char* key, const json& def) {
  if (!cfg.contains(key) || cfg[key].is_null()) cfg[key] = def;
  return cfg[key];
}

std::optional<fs::path> path_key(json& cfg, const char* key) {
  if (!cfg.contains(key) || cfg[key].is_null()) {
    cfg[key] = nullptr;
    return std::nullopt;
  }
  if (!cfg[key].is_string()) invalid(std::string("config key '") + key + "' must be a path string");
  return fs::path(cfg[key].get<std::string>());
}

void check_input(const fs::path& p) {
  if (!fs::is_regular_file(p)) invalid("input file not found: " + p.string());
}

void check_output(const std::optional<fs::path>& p) {
  if (!p) return;
  if (fs::is_directory(*p)) invalid("output path is a directory: " + p->string());
  const fs::path parent = p->parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) invalid("output directory does not exist: " + parent.string());
}

kb::QuadOptions resolve_quad(json& cfg, std::size_t d) {
  kb::QuadOptions q = kb::QuadOptions::for_dim(d);
  json j = cfg.contains("quad") && cfg["quad"].is_object() ? cfg["quad"] : json::object();
  q.rel_tol = j.value("rel_tol", q.rel_tol);
  q.abs_tol = j.value("abs_tol", q.abs_tol);
  q.max_depth = j.value("max_depth", q.max_depth);
  if (!(q.rel_tol > 0.0) || q.abs_tol < 0.0 || q.max_depth < 1) invalid("quadrature tolerances must be positive");
  cfg["quad"] = {{"rel_tol", q.rel_tol}, {"abs_tol", q.abs_tol}, {"max_depth", q.max_depth}};
  return q;
}

/// Kernel spec with the dimension defaulted to d; echoes the resolved spec.
kb::Kernel resolve_kernel(json& cfg, std::size_t d, const json& def) {
  json spec = take_json(cfg, "kernel", def);
  if (spec.is_string()) spec = {{"kind", spec.get<std::string>()}};
  if (spec.is_object() && !spec.contains("dim")) spec["dim"] = d;
  const kb::Kernel k = kb::io::kernel_from_json(spec);
  cfg["kernel"] = kb::io::kernel_to_json(k);
  return k;
}

kb::Vector to_point(const json& j, std::size_t d) {
  kb::Vector p = kb::io::vector_from_json(j, "query point");
  if (p.size() != d) throw kb::Error(kb::ErrorCode::DimensionMismatch, "query point has wrong dimension");
  return p;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_point(const kb::Vector& p) {
  std::string s = "(";
  for (std::size_t i = 0; i < p.size(); ++i) s += (i ? "," : "") + fmt(p[i]);
  return s + ")";
}

json report_json(json& cfg, const std::string& command, json result) {
  json out = json::object();
  out["format_version"] = kFormatVersion;
  out["command"] = command;
  out["config"] = cfg;
  out["result"] = std::move(result);
  return out;
}

/// Runs fn; errors gain the cell description.
template <class F>
auto in_cell(const std::string& cell, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const kb::Error& e) {
    throw kb::Error(e.code(), "[" + cell + "] " + e.message());
  }
}

// ---- kernel-info ----

int run_kernel_info(json& cfg, unsigned) {
  const kb::Kernel k = resolve_kernel(cfg, 1, "gaussian");
  const int max_order = take<int>(cfg, "max_order", 4);
  if (max_order < 0 || max_order > 8) invalid("max_order must lie in [0, 8]");
  const int order = take<int>(cfg, "order", k.declared_order() > 0 ? k.declared_order() : 2);
  const json radii_j = take_json(cfg, "envelope_radii", json{0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0});
  const kb::Vector radii = kb::io::vector_from_json(radii_j, "envelope_radii");
  const auto out = path_key(cfg, "out");
  const auto csv = path_key(cfg, "csv");
  check_output(out);
  check_output(csv);

  kb::io::CsvTable table({"quantity", "argument", "value", "converged"});
  json moments = json::array();
  bool ok = true;
  for (int j = 0; j <= max_order; ++j) {
    const kb::MomentResult m = in_cell("moment j=" + std::to_string(j), [&] { return kb::moment(k, j); });
    ok = ok && m.converged;
    table.row().add("moment").add(static_cast<double>(j)).add(m.value).add(m.converged ? "true" : "false");
    moments.push_back({{"j", j}, {"value", m.value}, {"error_estimate", m.error_estimate}, {"converged", m.converged}});
  }
  json envelope = json::array();
  for (double r : radii) {
    const double v = kb::decay_envelope(k, r);
    table.row().add("envelope").add(r).add(v).add("true");
    envelope.push_back({{"r", r}, {"psi", v}});
  }
  json order_j = nullptr;
  if (k.dim() <= 3 && !k.is_spiky()) {
    const kb::OrderReport rep = in_cell("order " + std::to_string(order), [&] { return kb::verify_order(k, order); });
    json entries = json::array();
    for (const auto& e : rep.entries)
      entries.push_back({{"alpha", e.alpha}, {"value", e.value}, {"must_vanish", e.must_vanish}, {"pass", e.pass}});
    order_j = {{"order", rep.order}, {"mass", rep.mass}, {"mass_ok", rep.mass_ok}, {"verified", rep.verified},
               {"entries", entries}};
  }

  const std::string text = table.str();
  std::cout << text;
  if (out)
    kb::io::write_atomic(*out, kb::io::dump(report_json(cfg, "kernel-info",
                                                        {{"kernel", cfg["kernel"]},
                                                         {"moments", moments},
                                                         {"envelope", envelope},
                                                         {"order_check", order_j}})));
  if (csv) kb::io::write_atomic(*csv, text);
  return ok ? 0 : kExitNumerical;
}

// ---- estimate ----

int run_estimate(json& cfg, unsigned threads) {
  const auto samples_path = path_key(cfg, "samples");
  const auto queries_path = path_key(cfg, "queries");
  if (!samples_path || !queries_path) invalid("estimate needs samples and queries CSV paths");
  if (!cfg.contains("bandwidth")) invalid("estimate needs a bandwidth");
  const auto out = path_key(cfg, "out");
  if (!out) invalid("estimate needs an output CSV path (--out)");
  path_key(cfg, "csv");
  check_input(*samples_path);
  check_input(*queries_path);
  check_output(out);

  const kb::SampleSet samples = kb::io::read_samples_csv(*samples_path);
  const std::vector<kb::Vector> queries = kb::io::read_points_csv(*queries_path);
  const std::size_t d = samples.dim();
  const kb::Kernel k = resolve_kernel(cfg, d, "gaussian");
  const kb::BandwidthMatrix h = kb::io::bandwidth_from_json(cfg["bandwidth"], d);
  cfg["bandwidth"] = kb::io::bandwidth_to_json(h);

  const std::vector<double> est = kb::kde_estimate(samples, k, h, queries, threads);
  std::vector<std::string> cols;
  for (std::size_t i = 0; i < d; ++i) cols.push_back("x" + std::to_string(i + 1));
  cols.push_back("estimate");
  kb::io::CsvTable table(cols);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    table.row();
    for (double v : queries[q]) table.add(v);
    table.add(est[q]);
    std::cout << "query " << q << " x=" << fmt_point(queries[q]) << " estimate=" << fmt(est[q]) << "\n";
  }
  kb::io::write_atomic(*out, table.str());
  return 0;
}

// ---- bias-report ----

json bias_report_json(const kb::BiasReport& r) {
  return {{"x_query", r.x_query},
          {"h", kb::io::matrix_to_json(r.h)},
          {"h_norm", r.h_norm},
          {"k", r.k},
          {"exact_bias", r.exact_bias},
          {"exact_bias_error", r.exact_bias_error},
          {"converged", r.converged},
          {"moment_terms", r.moment_terms},
          {"empirical_remainder", r.empirical_remainder},
          {"delta_used", r.delta_used},
          {"bound_components", {{"tail_term", r.bound.tail_term}, {"taylor_term", r.bound.taylor_term}}},
          {"bound_total", r.bound_total},
          {"remainder_over_hk", r.remainder_over_hk},
          {"remainder_over_h2", r.remainder_over_h2},
          {"bound_satisfied", r.bound_satisfied},
          {"margin_ratio", r.margin_ratio}};
}

int run_bias_report(json& cfg, unsigned threads) {
  const kb::DensityModel m =
      kb::io::density_from_json(take_json(cfg, "density", {{"kind", "standard_gaussian"}, {"dim", 1}}));
  const std::size_t d = m.dim();
  const kb::Kernel k = resolve_kernel(cfg, d, "gaussian");
  const json bw = take_json(cfg, "bandwidths", json::array({0.5}));
  if (!bw.is_array() || bw.empty()) invalid("bandwidths must be a non-empty list");
  std::vector<kb::BandwidthMatrix> hs;
  json bw_resolved = json::array();
  for (const auto& b : bw) {
    hs.push_back(kb::io::bandwidth_from_json(b, d));
    bw_resolved.push_back(kb::io::bandwidth_to_json(hs.back()));
  }
  cfg["bandwidths"] = bw_resolved;
  const json qj = take_json(cfg, "queries", json::array({kb::Vector(d, 0.0)}));
  std::vector<kb::Vector> queries;
  for (const auto& q : qj) queries.push_back(to_point(q, d));
  if (queries.empty()) invalid("queries must be non-empty");
  const int order = take<int>(cfg, "k", 2);
  const double delta = take<double>(cfg, "delta", 0.0);
  const kb::QuadOptions opt = resolve_quad(cfg, d);
  const auto out = path_key(cfg, "out");
  const auto csv = path_key(cfg, "csv");
  check_output(out);
  check_output(csv);

  const std::size_t cells = hs.size() * queries.size();
  std::vector<kb::BiasReport> reps(cells);
  kb::parallel_for(cells, threads, [&](std::size_t c) {
    const std::size_t hi = c / queries.size(), qi = c % queries.size();
    const std::string cell = "h#" + std::to_string(hi) + " x=" + fmt_point(queries[qi]);
    reps[c] = in_cell(cell, [&] { return kb::bias_report(k, hs[hi], m, queries[qi], order, delta, opt); });
  });

  kb::io::CsvTable table({"h_index", "query_index", "h_norm", "exact_bias", "empirical_remainder", "bound_total",
                          "remainder_over_hk", "bound_satisfied", "margin_ratio", "converged"});
  json arr = json::array();
  bool ok = true;
  for (std::size_t c = 0; c < cells; ++c) {
    const auto& r = reps[c];
    const std::size_t hi = c / queries.size(), qi = c % queries.size();
    ok = ok && r.converged;
    arr.push_back(bias_report_json(r));
    table.row()
        .add(static_cast<double>(hi))
        .add(static_cast<double>(qi))
        .add(r.h_norm)
        .add(r.exact_bias)
        .add(r.empirical_remainder)
        .add(r.bound_total)
        .add(r.remainder_over_hk)
        .add(r.bound_satisfied ? "true" : "false")
        .add(r.margin_ratio)
        .add(r.converged ? "true" : "false");
    std::cout << "h#" << hi << " ||h||=" << fmt(r.h_norm) << " x=" << fmt_point(r.x_query)
              << " bias=" << fmt(r.exact_bias) << " remainder=" << fmt(r.empirical_remainder)
              << " bound=" << fmt(r.bound_total) << (r.bound_satisfied ? " ok" : " VIOLATED") << "\n";
  }
  if (out) kb::io::write_atomic(*out, kb::io::dump(report_json(cfg, "bias-report", {{"reports", arr}})));
  if (csv) kb::io::write_atomic(*csv, table.str());
  return ok ? 0 : kExitNumerical;
}

// ---- bias-scaling ----

std::vector<double> geometric(double start, double ratio, int steps) {
  if (!(start > 0.0) || !(ratio > 0.0) || steps < 1) invalid("geometric sequence needs start > 0, ratio > 0, steps >= 1");
  std::vector<double> v;
  double x = start;
  for (int i = 0; i < steps; ++i, x *= ratio) v.push_back(x);
  return v;
}

int run_bias_scaling(json& cfg, unsigned threads) {
  const kb::DensityModel m = kb::io::density_from_json(take_json(
      cfg, "density",
      {{"kind", "gaussian_mixture"},
       {"components",
        json::array({{{"weight", 0.6}, {"mean", {-0.4}}, {"cov", 0.64}},
                     {{"weight", 0.4}, {"mean", {0.9}}, {"cov", 0.36}}})}}));
  const std::size_t d = m.dim();
  const kb::Kernel k = resolve_kernel(cfg, d, "gaussian");
  std::vector<double> hv;
  if (cfg.contains("h_values") && !cfg["h_values"].is_null()) {
    hv = kb::io::vector_from_json(cfg["h_values"], "h_values");
  } else {
    hv = geometric(take<double>(cfg, "h_start", 0.25), take<double>(cfg, "h_ratio", 0.5), take<int>(cfg, "h_steps", 6));
  }
  cfg["h_values"] = hv;
  const json qj = take_json(cfg, "queries", json::array({{-1.5}, {1.2}, {2.0}}));
  std::vector<kb::Vector> queries;
  for (const auto& q : qj) queries.push_back(to_point(q, d));
  if (queries.empty()) invalid("queries must be non-empty");
  kb::QuadOptions opt = resolve_quad(cfg, d);
  const auto out = path_key(cfg, "out");
  const auto csv = path_key(cfg, "csv");
  check_output(out);
  check_output(csv);

  kb::io::CsvTable table({"query_index", "h", "exact_bias", "error_estimate", "included"});
  json arr = json::array();
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const kb::BiasScalingResult r = in_cell("x=" + fmt_point(queries[qi]), [&] {
      return kb::bias_scaling_study(k, m, queries[qi], hv, opt, threads);
    });
    json pts = json::array();
    for (const auto& p : r.points) {
      pts.push_back({{"h", p.h}, {"exact_bias", p.bias}, {"error_estimate", p.error_estimate},
                     {"converged", p.converged}, {"included", p.included}});
      table.row().add(static_cast<double>(qi)).add(p.h).add(p.bias).add(p.error_estimate).add(p.included ? "true" : "false");
      std::cout << "x=" << fmt_point(queries[qi]) << " h=" << fmt(p.h) << " bias=" << fmt(p.bias)
                << (p.included ? "" : " (excluded)") << "\n";
    }
    std::cout << "x=" << fmt_point(queries[qi]) << " slope=" << fmt(r.fit.slope) << " +- " << fmt(r.fit.slope_stderr)
              << "\n";
    arr.push_back({{"x_query", queries[qi]},
                   {"points", pts},
                   {"slope", r.fit.slope},
                   {"slope_stderr", r.fit.slope_stderr},
                   {"intercept", r.fit.intercept},
                   {"points_used", r.fit.points}});
  }
  if (out) kb::io::write_atomic(*out, kb::io::dump(report_json(cfg, "bias-scaling", {{"studies", arr}})));
  if (csv) kb::io::write_atomic(*csv, table.str());
  return 0;
}

// ---- mse-scaling ----

int run_mse_scaling(json& cfg, unsigned threads) {
  const kb::DensityModel m =
      kb::io::density_from_json(take_json(cfg, "density", {{"kind", "standard_gaussian"}, {"dim", 1}}));
  const std::size_t d = m.dim();
  const kb::Kernel k = resolve_kernel(cfg, d, "gaussian");
  const kb::Vector x = to_point(take_json(cfg, "query", kb::Vector(d, 0.0)), d);
  std::vector<std::size_t> nv;
  if (cfg.contains("n_values") && !cfg["n_values"].is_null()) {
    nv = cfg["n_values"].get<std::vector<std::size_t>>();
  } else {
    const int lo = take<int>(cfg, "n_min_log2", 10), hi = take<int>(cfg, "n_max_log2", 17);
    if (lo < 1 || hi < lo || hi > 24) invalid("n_min_log2/n_max_log2 must satisfy 1 <= min <= max <= 24");
    for (int e = lo; e <= hi; ++e) nv.push_back(std::size_t{1} << e);
  }
  cfg["n_values"] = nv;
  const auto reps = take<std::size_t>(cfg, "replicates", 200);
  const double c0 = take<double>(cfg, "c0", 1.06);
  const auto seed = take<std::uint64_t>(cfg, "seed", 0);
  const auto out = path_key(cfg, "out");
  const auto csv = path_key(cfg, "csv");
  check_output(out);
  check_output(csv);

  const kb::MseStudyResult r = kb::mse_study(k, m, x, nv, reps, seed, threads, c0);
  kb::io::CsvTable table({"n", "mse", "mean_bandwidth"});
  json pts = json::array();
  for (const auto& p : r.points) {
    table.row().add(static_cast<double>(p.n)).add(p.mse).add(p.mean_bandwidth);
    pts.push_back({{"n", p.n}, {"mse", p.mse}, {"mean_bandwidth", p.mean_bandwidth}});
    std::cout << "n=" << p.n << " mse=" << fmt(p.mse) << " h=" << fmt(p.mean_bandwidth) << "\n";
  }
  const double predicted = -4.0 / (4.0 + static_cast<double>(d));
  std::cout << "slope=" << fmt(r.fit.slope) << " +- " << fmt(r.fit.slope_stderr) << " predicted=" << fmt(predicted) << "\n";
  if (out)
    kb::io::write_atomic(*out, kb::io::dump(report_json(cfg, "mse-scaling",
                                                        {{"points", pts},
                                                         {"slope", r.fit.slope},
                                                         {"slope_stderr", r.fit.slope_stderr},
                                                         {"predicted_slope", predicted}})));
  if (csv) kb::io::write_atomic(*csv, table.str());
  return 0;
}

// ---- blowup-demo ----

int run_blowup(json& cfg, unsigned threads) {
  kb::AdversarialParams a;
  a.p = take<double>(cfg, "p", 1.0);
  a.ell = take<int>(cfg, "ell", 0);
  a.dim = take<std::size_t>(cfg, "dim", 2);
  a.n_max = take<long>(cfg, "n_max", 10000);
  a.validate();
  const std::string sched = take<std::string>(cfg, "schedule", "balanced");
  if (sched != "balanced" && sched != "unbalanced") invalid("schedule must be balanced or unbalanced");
  const kb::ScheduleKind kind = sched == "balanced" ? kb::ScheduleKind::Balanced : kb::ScheduleKind::Unbalanced;
  const std::vector<double> eps =
      geometric(take<double>(cfg, "eps_start", 0.5), take<double>(cfg, "eps_ratio", 0.5), take<int>(cfg, "eps_steps", 6));
  const double far_radius = take<double>(cfg, "far_radius", 1.05);
  const kb::QuadOptions opt = resolve_quad(cfg, a.dim);
  const auto out = path_key(cfg, "out");
  const auto csv = path_key(cfg, "csv");
  check_output(out);
  check_output(csv);

  const kb::BlowupRun run = kb::blowup_sweep(a, kind, eps, far_radius, opt, threads);
  kb::io::CsvTable table({"eps", "value", "predicted", "lower_envelope", "converged"});
  json steps = json::array();
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto& w = run.witnesses[i];
    table.row().add(eps[i]).add(run.values[i]).add(run.predicted[i]).add(w.lower_envelope).add(
        run.converged[i] ? "true" : "false");
    steps.push_back({{"eps", eps[i]},
                     {"eigenvalues", run.eig_schedule[i]},
                     {"value", run.values[i]},
                     {"error_estimate", run.errors[i]},
                     {"converged", static_cast<bool>(run.converged[i])},
                     {"predicted", run.predicted[i]},
                     {"lower_envelope", w.lower_envelope},
                     {"witness", {{"spike", w.spike}, {"center", w.center}, {"radius", w.radius}}}});
    std::cout << "eps=" << fmt(eps[i]) << " value=" << fmt(run.values[i]) << " predicted=" << fmt(run.predicted[i])
              << " envelope=" << fmt(w.lower_envelope) << "\n";
  }
  std::cout << "slope=" << fmt(run.fit.slope) << " predicted_slope=" << fmt(run.predicted_fit.slope)
            << " increasing=" << (run.strictly_increasing ? "yes" : "no") << "\n";
  json params = {{"p", run.params.p}, {"ell", run.params.ell}, {"dim", run.params.dim}, {"n_max", run.params.n_max},
                 {"c", run.params.c}};
  if (out)
    kb::io::write_atomic(*out, kb::io::dump(report_json(cfg, "blowup-demo",
                                                        {{"params", params},
                                                         {"schedule", sched},
                                                         {"steps", steps},
                                                         {"slope", run.fit.slope},
                                                         {"slope_stderr", run.fit.slope_stderr},
                                                         {"predicted_slope", run.predicted_fit.slope},
                                                         {"excluded", run.excluded},
                                                         {"envelope_ok", run.envelope_ok},
                                                         {"strictly_increasing", run.strictly_increasing}})));
  if (csv) kb::io::write_atomic(*csv, table.str());
  return 0;
}

// ---- moments ----

int run_moments(json& cfg, unsigned) {
  const kb::Kernel k =
      resolve_kernel(cfg, 1, {{"kind", "adversarial"}, {"dim", 1}, {"params", {{"p", 1.0}, {"ell", 2}}}});
  const int def = k.is_spiky() ? k.adversarial_params().ell : 4;
  const int j_max = take<int>(cfg, "j_max", def);
  if (j_max < 0 || j_max > 8) invalid("j_max must lie in [0, 8]");
  const auto out = path_key(cfg, "out");
  const auto csv = path_key(cfg, "csv");
  check_output(out);
  check_output(csv);

  bool ok = true;
  json rows = json::array();
  if (k.is_spiky()) {
    kb::AdversarialParams a = k.adversarial_params();
    a.c = 0.0;
    const auto report = kb::moment_finiteness_report(a, j_max);
    kb::io::CsvTable table({"j", "value", "value_2n", "value_4n", "rel_change_2n", "rel_change_4n", "converged"});
    for (const auto& r : report) {
      ok = ok && r.converged;
      table.row().add(static_cast<double>(r.j)).add(r.value).add(r.value_2n).add(r.value_4n).add(r.rel_change_2n).add(
          r.rel_change_4n).add(r.converged ? "true" : "false");
      rows.push_back({{"j", r.j},
                      {"value", r.value},
                      {"value_2n", r.value_2n},
                      {"value_4n", r.value_4n},
                      {"rel_change_2n", r.rel_change_2n},
                      {"rel_change_4n", r.rel_change_4n},
                      {"converged", r.converged}});
      std::cout << "j=" << r.j << " moment=" << fmt(r.value) << " doubling_change=" << fmt(r.rel_change_2n)
                << (r.converged ? " converged" : " NOT converged") << "\n";
    }
    if (csv) kb::io::write_atomic(*csv, table.str());
  } else {
    kb::io::CsvTable table({"j", "value", "error_estimate", "converged"});
    for (int j = 0; j <= j_max; ++j) {
      const kb::MomentResult m = in_cell("j=" + std::to_string(j), [&] { return kb::moment(k, j); });
      ok = ok && m.converged;
      table.row().add(static_cast<double>(j)).add(m.value).add(m.error_estimate).add(m.converged ? "true" : "false");
      rows.push_back({{"j", j}, {"value", m.value}, {"error_estimate", m.error_estimate}, {"converged", m.converged}});
      std::cout << "j=" << j << " moment=" << fmt(m.value) << (m.converged ? " converged" : " NOT converged") << "\n";
    }
    if (csv) kb::io::write_atomic(*csv, table.str());
  }
  if (out) kb::io::write_atomic(*out, kb::io::dump(report_json(cfg, "moments", {{"moments", rows}})));
  return ok ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kdebias: kernel density estimation bias lab"};
  app.require_subcommand(1);

  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const std::string& name, const std::string& help, std::function<int(json&, unsigned)> run) {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    c->run = std::move(run);
    add_common(*c);
    commands.push_back(std::move(c));
    return commands.back().get();
  };

  Command* ki = make("kernel-info", "moment table and decay envelope samples as CSV", run_kernel_info);
  ki->flags.spec(ki->app, "--kernel", "/kernel", "kernel spec: JSON, JSON file, or kind name");
  ki->flags.value<int>(ki->app, "--max-order", "/max_order", "largest moment order (default 4)");
  ki->flags.value<int>(ki->app, "--order", "/order", "order to verify (default: declared order)");
  ki->flags.value<std::vector<double>>(ki->app, "--radius", "/envelope_radii", "envelope sample radius (repeatable)");

  Command* es = make("estimate", "KDE values at query points", run_estimate);
  es->flags.value<std::string>(es->app, "--samples", "/samples", "samples CSV (header x1..xd)");
  es->flags.value<std::string>(es->app, "--queries", "/queries", "query points CSV (header x1..xd)");
  es->flags.spec(es->app, "--kernel", "/kernel", "kernel spec");
  es->flags.spec(es->app, "--bandwidth", "/bandwidth", "bandwidth matrix (JSON array or scalar)");

  Command* br = make("bias-report", "exact bias, moment terms and remainder bound per cell", run_bias_report);
  br->flags.spec(br->app, "--kernel", "/kernel", "kernel spec");
  br->flags.spec(br->app, "--density", "/density", "density spec (JSON or JSON file)");
  br->flags.spec_list(br->app, "--bandwidth", "/bandwidths", "bandwidth matrix (repeatable)");
  br->flags.points(br->app, "--query", "/queries", "query point 'x1,...,xd' (repeatable)");
  br->flags.value<int>(br->app, "--k", "/k", "expansion order (default 2)");
  br->flags.value<double>(br->app, "--delta", "/delta", "delta for the bound (default ||h||^(1/2))");

  Command* bs = make("bias-scaling", "log-log slope of |bias| against h", run_bias_scaling);
  bs->flags.spec(bs->app, "--kernel", "/kernel", "kernel spec");
  bs->flags.spec(bs->app, "--density", "/density", "density spec");
  bs->flags.points(bs->app, "--query", "/queries", "query point (repeatable)");
  bs->flags.value<std::vector<double>>(bs->app, "--h-value", "/h_values", "scalar bandwidth (repeatable)");
  bs->flags.value<double>(bs->app, "--h-start", "/h_start", "first bandwidth (default 0.25)");
  bs->flags.value<double>(bs->app, "--h-ratio", "/h_ratio", "bandwidth ratio (default 0.5)");
  bs->flags.value<int>(bs->app, "--h-steps", "/h_steps", "number of bandwidths (default 6)");

  Command* ms = make("mse-scaling", "empirical MSE rate over seeded replicates", run_mse_scaling);
  ms->flags.spec(ms->app, "--kernel", "/kernel", "kernel spec");
  ms->flags.spec(ms->app, "--density", "/density", "density spec");
  ms->flags.spec(ms->app, "--query", "/query", "query point as JSON array");
  ms->flags.value<int>(ms->app, "--n-min-log2", "/n_min_log2", "smallest n = 2^k (default 10)");
  ms->flags.value<int>(ms->app, "--n-max-log2", "/n_max_log2", "largest n = 2^k (default 17)");
  ms->flags.value<std::size_t>(ms->app, "--replicates", "/replicates", "replicates per n (default 200)");
  ms->flags.value<double>(ms->app, "--c0", "/c0", "normal-reference constant (default 1.06)");

  Command* bd = make("blowup-demo", "spike-train kernel blow-up sweep", run_blowup);
  bd->flags.value<double>(bd->app, "--p", "/p", "decay exponent p (default 1)");
  bd->flags.value<int>(bd->app, "--ell", "/ell", "moment order ell (default 0)");
  bd->flags.value<std::size_t>(bd->app, "--dim", "/dim", "dimension 1 or 2 (default 2)");
  bd->flags.value<long>(bd->app, "--n-max", "/n_max", "spike truncation (default 10000)");
  bd->flags.value<std::string>(bd->app, "--schedule", "/schedule", "balanced or unbalanced");
  bd->flags.value<double>(bd->app, "--eps-start", "/eps_start", "first eps (default 0.5)");
  bd->flags.value<double>(bd->app, "--eps-ratio", "/eps_ratio", "eps ratio per step (default 0.5)");
  bd->flags.value<int>(bd->app, "--eps-steps", "/eps_steps", "number of steps (default 6)");
  bd->flags.value<double>(bd->app, "--far-radius", "/far_radius", "far-mass radius R (default 1.05)");

  Command* mo = make("moments", "kernel moments; truncation doubling for the spike train", run_moments);
  mo->flags.spec(mo->app, "--kernel", "/kernel", "kernel spec");
  mo->flags.value<int>(mo->app, "--j-max", "/j_max", "largest order (default ell, or 4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  for (auto& c : commands) {
    if (!c->app->parsed()) continue;
    try {
      json cfg = json::object();
      if (!c->config_path.empty()) {
        check_input(c->config_path);
        cfg = kb::io::parse_json(kb::io::read_text(c->config_path), c->config_path);
        if (!cfg.is_object()) invalid("config file must hold a JSON object");
      }
      c->flags.apply(cfg);
      take<std::uint64_t>(cfg, "seed", 0);
      if (c->threads == 0) invalid("--threads must be >= 1");
      const int rc = c->run(cfg, c->threads);
      if (rc == kExitNumerical) std::cerr << "error: numerical failure (see converged flags in the output)\n";
      return rc;
    } catch (const kb::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return e.numerical() ? kExitNumerical : kExitValidation;
    } catch (const json::exception& e) {
      std::cerr << "error: config: " << e.what() << "\n";
      return kExitValidation;
    } catch (const fs::filesystem_error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitNumerical;
    }
  }
  return kExitValidation;
}
