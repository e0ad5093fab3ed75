#pragma once

// Built-in experiment configurations: geometry (NURBS curve), problem data,
// and reference energies for the model problems on the circle, the pacman
// domain, and the straight slit.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include "igabem/quadrature.hpp"
#include "igabem/splines.hpp"

namespace igabem {

// Weakly singular model problem V phi = f on a parametrized curve.  The
// right-hand side is either assembled from a Dirichlet trace g via the double
// layer identity f = (K + 1/2) g, or given directly as a function on the
// curve.
struct ExperimentConfig {
  enum class RhsKind { DirichletTrace, DirectLoad };

  std::string name;
  NurbsCurve curve;
  RhsKind rhs_kind = RhsKind::DirichletTrace;
  std::function<double(const Vec2&)> g;         // Dirichlet trace (RhsKind::DirichletTrace)
  std::function<double(const Vec2&)> f_direct;  // load on the curve (RhsKind::DirectLoad)
  // Squared energy norm |||phi|||^2 = <V phi, phi> of the exact density, when
  // known; NaN disables the error column.
  double reference_energy_sq = std::numeric_limits<double>::quiet_NaN();

  bool has_reference_energy() const { return std::isfinite(reference_energy_sq); }
};

namespace builtin {

// Circle of radius 1/10 around the origin, parametrized counterclockwise by
// four rational quadratic arcs; Dirichlet trace of the harmonic function
// u(x, y) = x^2 + 10 x y - y^2.
inline ExperimentConfig circle() {
  ExperimentConfig cfg;
  cfg.name = "circle";
  const double s = 1.0 / std::sqrt(2.0);
  NurbsCurve c;
  c.kv.topology = Topology::Closed;
  c.kv.degree = 2;
  c.kv.a = 0.0;
  c.kv.b = 1.0;
  c.kv.knots = {0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1.0, 1.0, 1.0};
  c.weights = {1.0, s, 1.0, s, 1.0, s, 1.0, 1.0, s};
  c.controls = {Vec2(0.0, 1.0),  Vec2(-1.0, 1.0), Vec2(-1.0, 0.0),
                Vec2(-1.0, -1.0), Vec2(0.0, -1.0), Vec2(1.0, -1.0),
                Vec2(1.0, 0.0),  Vec2(1.0, 0.0),  Vec2(1.0, 1.0)};
  for (auto& p : c.controls) p *= 0.1;
  c.validate();
  cfg.curve = std::move(c);
  cfg.rhs_kind = ExperimentConfig::RhsKind::DirichletTrace;
  cfg.g = [](const Vec2& v) { return v.x() * v.x() + 10.0 * v.x() * v.y() - v.y() * v.y(); };
  cfg.reference_energy_sq = 13.0 * M_PI / 5000.0;
  return cfg;
}

// Pacman domain: circular sector of radius 1/10 and opening angle 7pi/4
// centered at the origin, boundary parametrized counterclockwise starting on
// the arc at polar angle 0.  The reentrant corner sits at gamma(1/2) = 0 with
// interior angle 7pi/4; the mouth corners are at t = 1/3 and t = 2/3.
// Dirichlet trace of u(r, alpha) = r^tau cos(tau alpha) with tau = 4/7, which
// is harmonic and vanishes on both straight edges.
inline ExperimentConfig pacman() {
  ExperimentConfig cfg;
  cfg.name = "pacman";
  const double tau = 4.0 / 7.0;
  const double w = std::cos(M_PI / tau);  // = cos(7pi/4) = sqrt(2)/2
  // Control points on rays at angle steps of (pi/tau)/8 = 7pi/32.
  auto ray = [&](double k, double scale) {
    const double ang = 7.0 * M_PI / 32.0 * k;
    return Vec2(scale * 0.1 * std::cos(ang), scale * 0.1 * std::sin(ang));
  };
  NurbsCurve c;
  c.kv.topology = Topology::Closed;
  c.kv.degree = 2;
  c.kv.a = 0.0;
  c.kv.b = 1.0;
  const double s6 = 1.0 / 6.0;
  c.kv.knots = {s6, s6, 2 * s6, 2 * s6, 3 * s6, 3 * s6, 4 * s6, 4 * s6, 5 * s6, 5 * s6,
                1.0, 1.0, 1.0};
  c.weights = {1.0, w, 1.0, 1.0, 1.0, 1.0, 1.0, w, 1.0, w, 1.0, 1.0, w};
  c.controls = {ray(2, 1.0),
                ray(3, 1.0 / w),
                ray(4, 1.0),
                ray(4, 0.5),
                Vec2(0.0, 0.0),
                ray(-4, 0.5),
                ray(-4, 1.0),
                ray(-3, 1.0 / w),
                ray(-2, 1.0),
                ray(-1, 1.0 / w),
                ray(0, 1.0),
                ray(0, 1.0),
                ray(1, 1.0 / w)};
  c.validate();
  cfg.curve = std::move(c);
  cfg.rhs_kind = ExperimentConfig::RhsKind::DirichletTrace;
  cfg.g = [tau](const Vec2& v) {
    const double r = v.norm();
    if (r == 0.0) return 0.0;
    const double alpha = std::atan2(v.y(), v.x());
    return std::pow(r, tau) * std::cos(tau * alpha);
  };
  // Extrapolated squared energy of the exact density.
  cfg.reference_energy_sq = 0.083525924784082;
  return cfg;
}

// Straight slit [-1, 1] x {0} with the direct right-hand side f(x, 0) = -x/2;
// the exact density is phi(x) = -x / sqrt(1 - x^2) with squared energy pi/4.
inline ExperimentConfig slit() {
  ExperimentConfig cfg;
  cfg.name = "slit";
  NurbsCurve c;
  c.kv.topology = Topology::Open;
  c.kv.degree = 1;
  c.kv.a = 0.0;
  c.kv.b = 1.0;
  c.kv.knots = {0.0, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.0};
  c.weights = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  c.controls = {Vec2(-1.0, 0.0), Vec2(-0.6, 0.0), Vec2(-0.2, 0.0),
                Vec2(0.2, 0.0),  Vec2(0.6, 0.0),  Vec2(1.0, 0.0)};
  c.validate();
  cfg.curve = std::move(c);
  cfg.rhs_kind = ExperimentConfig::RhsKind::DirectLoad;
  cfg.f_direct = [](const Vec2& v) { return -0.5 * v.x(); };
  cfg.reference_energy_sq = M_PI / 4.0;
  return cfg;
}

}  // namespace builtin

// Looks up a built-in configuration by name.
inline ExperimentConfig builtin_config(const std::string& name) {
  if (name == "circle") return builtin::circle();
  if (name == "pacman") return builtin::pacman();
  if (name == "slit") return builtin::slit();
  throw std::invalid_argument("unknown experiment '" + name + "' (expected circle, pacman or slit)");
}

// Structural checks on a configuration: well-formed curve, matching problem
// data, and counterclockwise orientation for closed curves (the single layer
// operator's ellipticity scale and the double layer sign convention assume
// it).
inline void validate_config(const ExperimentConfig& cfg) {
  cfg.curve.validate();
  if (cfg.rhs_kind == ExperimentConfig::RhsKind::DirichletTrace && !cfg.g)
    throw std::invalid_argument("config '" + cfg.name + "': missing Dirichlet trace g");
  if (cfg.rhs_kind == ExperimentConfig::RhsKind::DirectLoad && !cfg.f_direct)
    throw std::invalid_argument("config '" + cfg.name + "': missing direct right-hand side");
  const NurbsCurve& c = cfg.curve;
  if (c.kv.topology == Topology::Closed) {
    const Vec2 xa = c.eval(c.kv.a), xb = c.eval(c.kv.b);
    if ((xa - xb).norm() > 1e-12)
      throw std::invalid_argument("config '" + cfg.name + "': curve does not close up");
    // Signed area via the shoelace integral (1/2) int gamma x gamma' dt.
    double area = 0.0;
    const QuadratureRule& q = gauss_legendre(16);
    std::vector<double> brk;
    for (double z : c.kv.knots)
      if (brk.empty() || z != brk.back()) brk.push_back(z);
    double lo = c.kv.a;
    for (double hi : brk) {
      for (int k = 0; k < q.size(); ++k) {
        const auto f = c.frame(lo + (hi - lo) * q.nodes[k]);
        area += 0.5 * (hi - lo) * q.weights[k] * (f.x.x() * f.dx.y() - f.x.y() * f.dx.x());
      }
      lo = hi;
    }
    if (!(area > 0.0))
      throw std::invalid_argument("config '" + cfg.name +
                                  "': closed curve must be counterclockwise");
  }
}

}  // namespace igabem
