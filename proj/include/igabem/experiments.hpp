#pragma once

// Experiment driver: the solve / estimate / mark / refine loop on a model
// problem, convergence tables with rate fitting, CSV export, and a small
// key/value config-file format for custom geometries.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igabem/adaptivity.hpp"
#include "igabem/boundary.hpp"
#include "igabem/configs.hpp"
#include "igabem/estimator.hpp"
#include "igabem/operators.hpp"

namespace igabem {

struct RunOptions {
  enum class Mode { Uniform, Adaptive };
  Mode mode = Mode::Adaptive;
  double theta = 0.75;
  // Stop after the first solved level whose knot count reaches this bound;
  // zero picks the default (1500 on closed curves, 1000 on open ones).
  long max_knots = 0;
  double min_estimator = 0.0;
  int quad_order = 16;
  int estimator_depth = 14;
  long max_levels = 100000;
  // Invoked after each solved level (progress reporting on long runs).
  std::function<void(const struct LevelRecord&)> on_level;
};

// One solved refinement level.  The first five fields form the convergence
// table proper; the rest are structural diagnostics recorded for invariant
// checks (shape regularity, weight range, multiplicity cap, localization
// assumptions, Galerkin orthogonality).
struct LevelRecord {
  int level = 0;
  long num_knots = 0;
  double estimator = 0.0;
  double error = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;

  double energy_sq = 0.0;
  double shape_reg = 0.0;
  double surrogate = 0.0;
  double max_rho = 0.0;
  bool support_ok = false;
  int max_multiplicity = 0;
  double min_weight = 0.0;
  double max_weight = 0.0;
  double max_arclength_fraction = 0.0;  // max_T |T| / |Gamma| (closed curves)
};

struct ConvergenceTable {
  bool has_error = false;  // reference energy configured
  std::vector<LevelRecord> rows;
};

struct RunResult {
  ConvergenceTable table;
  NurbsCurve curve;           // curve at the last solved level
  Eigen::ArrayXd indicators;  // per-node squared indicators at that level
  Eigen::VectorXd coeffs;     // Galerkin solution at that level
};

namespace detail {

inline long resolved_max_knots(const ExperimentConfig& cfg, const RunOptions& opts) {
  if (opts.max_knots > 0) return opts.max_knots;
  return cfg.curve.kv.topology == Topology::Closed ? 1500 : 1000;
}

}  // namespace detail

// Runs the adaptive (or uniform) Galerkin loop: assemble and solve, compute
// the node indicators of the residual, record a table row, then mark and
// refine until the knot count or estimator target is reached.
inline RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  validate_config(cfg);
  if (!(opts.theta > 0.0 && opts.theta < 1.0))
    throw std::invalid_argument("run_experiment: theta must lie in (0,1)");

  RunResult result;
  result.table.has_error = cfg.has_reference_energy();
  const long max_knots = detail::resolved_max_knots(cfg, opts);

  NurbsCurve curve = cfg.curve;
  const double kappa_limit = 2.0 * shape_regularity(build_mesh(curve));

  for (long level = 0; level < opts.max_levels; ++level) {
    const auto t0 = std::chrono::steady_clock::now();
    const BoundaryMesh mesh = build_mesh(curve);
    const LevelCache cache = build_cache(curve, mesh, opts.quad_order);
    const Eigen::MatrixXd V = assemble_single_layer(curve, mesh, cache);

    // Right-hand side and its pointwise evaluator (shared by the residual).
    std::function<double(int, double)> f_hat;
    std::shared_ptr<DoubleLayerTrace> trace;  // keeps the capture alive
    if (cfg.rhs_kind == ExperimentConfig::RhsKind::DirichletTrace) {
      trace = std::make_shared<DoubleLayerTrace>(curve, mesh, cache, cfg.g);
      f_hat = [trace](int e, double t) { return (*trace)(e, t); };
    } else {
      f_hat = [&cfg, &curve](int, double t) { return cfg.f_direct(curve.eval(t)); };
    }
    std::vector<Eigen::ArrayXd> f_hat_values;
    const Eigen::VectorXd rhs = assemble_rhs_pointwise(curve, mesh, cache, f_hat, &f_hat_values);
    const Eigen::VectorXd c = solve_spd(V, rhs);

    const SingleLayerPotential pot(curve, mesh, cache, c);
    std::vector<Eigen::ArrayXd> vphi_values(cache.elems.size());
    for (size_t e = 0; e < cache.elems.size(); ++e) {
      const ElementData& ed = cache.elems[e];
      const long nlo = ed.lad_lo.size();
      Eigen::ArrayXd v(nlo + ed.lad_hi.size());
      for (long k = 0; k < nlo; ++k) v[k] = pot(static_cast<int>(e), ed.lad_lo.t[k]);
      for (long k = 0; k < ed.lad_hi.size(); ++k)
        v[nlo + k] = pot(static_cast<int>(e), ed.lad_hi.t[k]);
      vphi_values[e] = v;
    }

    const PointFn residual = [&](int e, double t) { return f_hat(e, t) - pot(e, t); };
    const Eigen::ArrayXd eta_sq = compute_indicators(curve, mesh, residual, opts.estimator_depth);

    LevelRecord row;
    row.level = static_cast<int>(level);
    row.num_knots = static_cast<long>(curve.kv.knots.size());
    row.estimator = std::sqrt(eta_sq.sum());
    row.energy_sq = energy_norm_sq(V, c);
    if (result.table.has_error)
      row.error = std::sqrt(std::max(cfg.reference_energy_sq - row.energy_sq, 0.0));
    row.shape_reg = shape_regularity(mesh);
    row.surrogate = orthogonality_surrogate(curve, cache, f_hat_values, vphi_values);
    const MeshAssumptionReport rep = check_mesh_assumptions(curve.kv, curve.weights, curve, mesh);
    row.max_rho = rep.max_rho;
    row.support_ok = rep.support_ok;
    for (const MeshNode& nd : mesh.nodes)
      row.max_multiplicity = std::max(row.max_multiplicity, nd.multiplicity);
    row.min_weight = *std::min_element(curve.weights.begin(), curve.weights.end());
    row.max_weight = *std::max_element(curve.weights.begin(), curve.weights.end());
    row.max_arclength_fraction = mesh.max_arclength() / mesh.total_arclength;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.table.rows.push_back(row);
    if (opts.on_level) opts.on_level(row);

    result.curve = curve;
    result.indicators = eta_sq;
    result.coeffs = c;

    if (row.num_knots >= max_knots) break;
    if (row.estimator <= opts.min_estimator) break;

    if (opts.mode == RunOptions::Mode::Uniform) {
      curve = uniform_refine(curve, mesh);
    } else {
      const std::vector<int> marked = doerfler_mark(eta_sq, opts.theta);
      if (marked.empty()) break;  // estimator exactly zero
      const MarkingDecision d = decide_actions(mesh, curve.kv, marked);
      NurbsCurve next = refine(curve, mesh, d, kappa_limit);
      // All requested insertions hit the bisection floor: refinement has
      // saturated the parameter resolution, so stop instead of looping.
      if (next.kv.knots.size() == curve.kv.knots.size()) break;
      curve = std::move(next);
    }
  }
  return result;
}

// Least-squares slope of log(error) against log(N) over the last `window`
// rows with a positive error (the estimator column substitutes when no
// reference energy is configured).
inline double fit_rate(const ConvergenceTable& table, int window) {
  if (window < 2) throw std::invalid_argument("fit_rate: window must be at least 2");
  std::vector<double> lx, ly;
  for (const LevelRecord& r : table.rows) {
    const double e = table.has_error ? r.error : r.estimator;
    if (std::isfinite(e) && e > 0.0) {
      lx.push_back(std::log(static_cast<double>(r.num_knots)));
      ly.push_back(std::log(e));
    }
  }
  if (static_cast<int>(lx.size()) < window)
    throw std::invalid_argument("fit_rate: not enough rows with positive errors");
  const size_t first = lx.size() - static_cast<size_t>(window);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = first; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double n = static_cast<double>(window);
  const double denom = n * sxx - sx * sx;
  if (!(std::abs(denom) > 0.0)) throw std::invalid_argument("fit_rate: degenerate abscissae");
  return (n * sxy - sx * sy) / denom;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

inline std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace detail

// Writes convergence.csv (one row per level; the error field is empty when no
// reference energy is configured), knots.csv (breakpoints of the final mesh
// with multiplicities) and indicators.csv (per-node squared indicators).
// All numeric columns except the wall-time are deterministic for a fixed
// configuration.
inline void export_outputs(const ConvergenceTable& table, const BoundaryMesh& mesh,
                           const Eigen::ArrayXd& indicators,
                           const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  std::string conv = "level,N,estimator,error,seconds\n";
  for (const LevelRecord& r : table.rows) {
    conv += std::to_string(r.level) + "," + std::to_string(r.num_knots) + ",";
    conv += detail::format_double("%.12e", r.estimator) + ",";
    if (std::isfinite(r.error)) conv += detail::format_double("%.12e", r.error);
    conv += "," + detail::format_double("%.3f", r.seconds) + "\n";
  }
  detail::write_file(out_dir / "convergence.csv", conv);

  std::string knots = "parameter,multiplicity\n";
  for (const MeshNode& nd : mesh.nodes)
    knots += detail::format_double("%.17g", nd.z) + "," + std::to_string(nd.multiplicity) + "\n";
  detail::write_file(out_dir / "knots.csv", knots);

  if (indicators.size() != static_cast<long>(mesh.nodes.size()))
    throw std::invalid_argument("export_outputs: indicator count does not match the mesh");
  std::string ind = "parameter,multiplicity,eta2\n";
  for (size_t i = 0; i < mesh.nodes.size(); ++i) {
    const MeshNode& nd = mesh.nodes[i];
    ind += detail::format_double("%.17g", nd.z) + "," + std::to_string(nd.multiplicity) + "," +
           detail::format_double("%.12e", indicators[static_cast<long>(i)]) + "\n";
  }
  detail::write_file(out_dir / "indicators.csv", ind);
}

// ---------------------------------------------------------------------------
// Config files: a flat key = value format with [..] array literals and
// '#' comments.  Geometry keys: name, topology {open|closed}, degree, a, b,
// knots, weights, controls (x,y pairs).  Problem keys: rhs {dirichlet|direct}
// with the data given as a harmonic polynomial in z = x + iy,
//   value(x, y) = sum_k re[k] Re(z^k) + sum_k im[k] Im(z^k),
// via g_re/g_im (Dirichlet trace) or f_re/f_im (direct load); im[] starts at
// k = 1.  Optional: energy_ref (squared energy of the exact density).

namespace detail {

inline std::string trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s, const std::string& key) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number '" + s + "' for key '" + key + "'");
  }
  if (trim(s.substr(pos)) != "")
    throw std::invalid_argument("config: trailing text after number in key '" + key + "'");
  return v;
}

inline std::vector<double> parse_array(const std::string& s, const std::string& key) {
  const std::string t = trim(s);
  if (t.size() < 2 || t.front() != '[' || t.back() != ']')
    throw std::invalid_argument("config: key '" + key + "' expects an [..] array");
  std::string body = t.substr(1, t.size() - 2);
  for (char& ch : body)
    if (ch == ',') ch = ' ';
  std::vector<double> out;
  std::istringstream in(body);
  std::string tok;
  while (in >> tok) out.push_back(parse_double(tok, key));
  return out;
}

// value(x,y) = sum_k re[k] Re(z^k) + sum_{j} im[j] Im(z^{j+1}), z = x + iy.
inline std::function<double(const Vec2&)> harmonic_polynomial(std::vector<double> re,
                                                              std::vector<double> im) {
  return [re = std::move(re), im = std::move(im)](const Vec2& p) {
    double zr = 1.0, zi = 0.0;  // z^0
    double acc = re.empty() ? 0.0 : re[0];
    const size_t kmax = std::max(re.size(), im.size() + 1);
    for (size_t k = 1; k < kmax; ++k) {
      const double nr = zr * p.x() - zi * p.y();
      const double ni = zr * p.y() + zi * p.x();
      zr = nr;
      zi = ni;
      if (k < re.size()) acc += re[k] * zr;
      if (k - 1 < im.size()) acc += im[k - 1] * zi;
    }
    return acc;
  };
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config: empty key");
    if (!kv.emplace(key, val).second)
      throw std::invalid_argument("config: duplicate key '" + key + "'");
  }

  const auto take = [&kv](const std::string& key) -> std::string {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("config: missing key '" + key + "'");
    const std::string v = it->second;
    kv.erase(it);
    return v;
  };
  const auto take_or = [&kv](const std::string& key, const std::string& fallback) -> std::string {
    const auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const std::string v = it->second;
    kv.erase(it);
    return v;
  };

  ExperimentConfig cfg;
  cfg.name = take_or("name", "custom");
  const std::string topo = take("topology");
  if (topo == "open")
    cfg.curve.kv.topology = Topology::Open;
  else if (topo == "closed")
    cfg.curve.kv.topology = Topology::Closed;
  else
    throw std::invalid_argument("config: topology must be 'open' or 'closed'");
  cfg.curve.kv.degree = static_cast<int>(detail::parse_double(take("degree"), "degree"));
  cfg.curve.kv.a = detail::parse_double(take_or("a", "0"), "a");
  cfg.curve.kv.b = detail::parse_double(take_or("b", "1"), "b");
  cfg.curve.kv.knots = detail::parse_array(take("knots"), "knots");
  cfg.curve.weights = detail::parse_array(take("weights"), "weights");
  const std::vector<double> xy = detail::parse_array(take("controls"), "controls");
  if (xy.size() % 2 != 0)
    throw std::invalid_argument("config: controls must hold x,y pairs");
  for (size_t i = 0; i + 1 < xy.size(); i += 2) cfg.curve.controls.emplace_back(xy[i], xy[i + 1]);

  const std::string rhs = take("rhs");
  if (rhs == "dirichlet") {
    cfg.rhs_kind = ExperimentConfig::RhsKind::DirichletTrace;
    cfg.g = detail::harmonic_polynomial(detail::parse_array(take_or("g_re", "[]"), "g_re"),
                                        detail::parse_array(take_or("g_im", "[]"), "g_im"));
  } else if (rhs == "direct") {
    cfg.rhs_kind = ExperimentConfig::RhsKind::DirectLoad;
    cfg.f_direct = detail::harmonic_polynomial(detail::parse_array(take_or("f_re", "[]"), "f_re"),
                                               detail::parse_array(take_or("f_im", "[]"), "f_im"));
  } else {
    throw std::invalid_argument("config: rhs must be 'dirichlet' or 'direct'");
  }
  const std::string ref = take_or("energy_ref", "");
  if (!ref.empty()) cfg.reference_energy_sq = detail::parse_double(ref, "energy_ref");

  if (!kv.empty()) throw std::invalid_argument("config: unknown key '" + kv.begin()->first + "'");
  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace igabem
