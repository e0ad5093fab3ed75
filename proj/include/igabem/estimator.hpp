#pragma once

// Node-patch residual indicators: for every mesh node z the squared
// H^{1/2}-seminorm of a function u over the patch omega(z) (the one or two
// elements touching z),
//
//   eta(z)^2 = int_{omega(z)} int_{omega(z)} |u(x) - u(y)|^2 / |x - y|^2 ds_x ds_y,
//
// with |x - y| the Euclidean distance between curve points.  The integrand is
// bounded across the diagonal (the quotient tends to the tangential
// derivative) but u may have weak (x log x or fractional-power) layers at
// element endpoints, so each element carries a composite Gauss grid graded
// dyadically towards both of its endpoints.  The two integration directions
// use different Gauss orders so that no node pair ever coincides and the
// quotient needs no special casing.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "igabem/boundary.hpp"
#include "igabem/quadrature.hpp"
#include "igabem/splines.hpp"

namespace igabem {

// A function sampled along the curve, addressed as (element index, parameter).
using PointFn = std::function<double(int, double)>;

namespace detail {

// One direction's worth of quadrature data on a single element: nodes,
// weights, curve positions, speeds and sampled values of u.
struct RoleGrid {
  Eigen::ArrayXd t, w, x, y, J, R;

  long size() const { return t.size(); }
};

inline RoleGrid sample_role(const NurbsCurve& curve, int elem, double lo, double hi,
                            int depth, int order, const PointFn& u) {
  const QuadratureRule& q = gauss_legendre(order);
  std::vector<std::pair<double, double>> nw;
  nw.reserve(static_cast<size_t>(2 * (depth + 1) * order));
  const double whalf = 0.5 * (hi - lo);
  auto piece = [&](double plo, double w) {
    if (!(w > 0.0) || !(plo + w > plo)) return;
    for (int k = 0; k < q.size(); ++k)
      nw.emplace_back(plo + w * q.nodes[static_cast<size_t>(k)],
                      w * q.weights[static_cast<size_t>(k)]);
  };
  // Closing pieces next to the endpoints, then the dyadic ladders outward.
  piece(lo, whalf * std::ldexp(1.0, -depth));
  piece(hi - whalf * std::ldexp(1.0, -depth), whalf * std::ldexp(1.0, -depth));
  for (int d = depth - 1; d >= 0; --d) {
    const double w = whalf * std::ldexp(1.0, -d - 1);
    piece(lo + w, w);
    piece(hi - 2.0 * w, w);
  }

  RoleGrid g;
  const long n = static_cast<long>(nw.size());
  g.t.resize(n);
  g.w.resize(n);
  g.x.resize(n);
  g.y.resize(n);
  g.J.resize(n);
  g.R.resize(n);
  for (long k = 0; k < n; ++k) {
    const double t = nw[static_cast<size_t>(k)].first;
    const auto f = curve.frame(t);
    g.t[k] = t;
    g.w[k] = nw[static_cast<size_t>(k)].second;
    g.x[k] = f.x.x();
    g.y[k] = f.x.y();
    g.J[k] = f.speed;
    g.R[k] = u(elem, t);
  }
  return g;
}

// Plain single-piece Gauss variant, for well-separated element pairs.
inline RoleGrid sample_plain(const NurbsCurve& curve, int elem, double lo, double hi,
                             int order, const PointFn& u) {
  const QuadratureRule& q = gauss_legendre(order);
  std::vector<std::pair<double, double>> nw;
  for (int k = 0; k < q.size(); ++k)
    nw.emplace_back(lo + (hi - lo) * q.nodes[static_cast<size_t>(k)],
                    (hi - lo) * q.weights[static_cast<size_t>(k)]);
  RoleGrid g;
  const long n = static_cast<long>(nw.size());
  g.t.resize(n);
  g.w.resize(n);
  g.x.resize(n);
  g.y.resize(n);
  g.J.resize(n);
  g.R.resize(n);
  for (long k = 0; k < n; ++k) {
    const double t = nw[static_cast<size_t>(k)].first;
    const auto f = curve.frame(t);
    g.t[k] = t;
    g.w[k] = nw[static_cast<size_t>(k)].second;
    g.x[k] = f.x.x();
    g.y[k] = f.x.y();
    g.J[k] = f.speed;
    g.R[k] = u(elem, t);
  }
  return g;
}

// int_A int_B |u(x)-u(y)|^2 / |x-y|^2 ds_x ds_y from two sampled directions.
inline double pair_seminorm(const RoleGrid& a, const RoleGrid& b) {
  double total = 0.0;
  for (long i = 0; i < a.size(); ++i) {
    const Eigen::ArrayXd dx = b.x - a.x[i];
    const Eigen::ArrayXd dy = b.y - a.y[i];
    const Eigen::ArrayXd dR = b.R - a.R[i];
    const Eigen::ArrayXd q = dx.square() + dy.square();
    // Sample points from the two rules may collide bitwise once elements
    // shrink towards the parametric rounding limit; the difference quotient
    // vanishes there, so skip those pairs instead of forming 0/0.
    total += a.w[i] * a.J[i] * (q > 0.0).select(b.w * b.J * dR.square() / q, 0.0).sum();
  }
  return total;
}

struct SeminormGrid {
  RoleGrid s, t;  // the two integration directions (distinct Gauss orders)
};

inline std::vector<SeminormGrid> build_seminorm_grids(const NurbsCurve& curve,
                                                      const BoundaryMesh& mesh,
                                                      const PointFn& u, int depth) {
  std::vector<SeminormGrid> grids(mesh.elements.size());
  for (size_t e = 0; e < mesh.elements.size(); ++e) {
    const Element& el = mesh.elements[e];
    grids[e].s = sample_role(curve, static_cast<int>(e), el.lo, el.hi, depth, 8, u);
    grids[e].t = sample_role(curve, static_cast<int>(e), el.lo, el.hi, depth, 9, u);
  }
  return grids;
}

}  // namespace detail

// Squared patch seminorm indicators of u, one entry per mesh node (aligned
// with mesh.nodes).  For an interior or closed-curve node with elements L, R:
// eta^2 = self(L) + self(R) + 2 cross(L, R); at an open-curve tip the patch
// is the single adjacent element.
inline Eigen::ArrayXd compute_indicators(const NurbsCurve& curve, const BoundaryMesh& mesh,
                                         const PointFn& u, int depth = 14) {
  const auto grids = detail::build_seminorm_grids(curve, mesh, u, depth);
  std::vector<double> self(grids.size());
  for (size_t e = 0; e < grids.size(); ++e)
    self[e] = detail::pair_seminorm(grids[e].s, grids[e].t);

  Eigen::ArrayXd eta(static_cast<long>(mesh.nodes.size()));
  for (size_t i = 0; i < mesh.nodes.size(); ++i) {
    const MeshNode& nd = mesh.nodes[i];
    double v = 0.0;
    if (nd.left_elem >= 0) v += self[static_cast<size_t>(nd.left_elem)];
    if (nd.right_elem >= 0) v += self[static_cast<size_t>(nd.right_elem)];
    if (nd.left_elem >= 0 && nd.right_elem >= 0)
      v += 2.0 * detail::pair_seminorm(grids[static_cast<size_t>(nd.left_elem)].s,
                                       grids[static_cast<size_t>(nd.right_elem)].t);
    eta[static_cast<long>(i)] = v;
  }
  return eta;
}

// ||u||^2_{L^2} over the whole curve.
inline double l2_norm_sq(const NurbsCurve& curve, const BoundaryMesh& mesh, const PointFn& u,
                         int order = 16) {
  double total = 0.0;
  for (size_t e = 0; e < mesh.elements.size(); ++e) {
    const Element& el = mesh.elements[e];
    auto f = [&](double t) {
      const double v = u(static_cast<int>(e), t);
      return v * v * curve.frame(t).speed;
    };
    total += integrate(f, el.lo, el.hi, order);
  }
  return total;
}

// Squared H^{1/2}-seminorm of u over the whole curve: the double integral is
// split into element pairs; same-element and adjacent pairs use the graded
// grids, well-separated pairs plain Gauss.  Separated pairs of a re-entrant
// geometry may pass close to each other, where the plain rule is only
// moderately accurate; this routine backs global bounds and diagnostics, not
// the indicators themselves.
inline double seminorm_sq_global(const NurbsCurve& curve, const BoundaryMesh& mesh,
                                 const PointFn& u, int depth = 14) {
  const auto grids = detail::build_seminorm_grids(curve, mesh, u, depth);
  const int n = mesh.num_elements();
  std::vector<detail::RoleGrid> plain_s(static_cast<size_t>(n)),
      plain_t(static_cast<size_t>(n));
  for (int e = 0; e < n; ++e) {
    const Element& el = mesh.elements[static_cast<size_t>(e)];
    plain_s[static_cast<size_t>(e)] = detail::sample_plain(curve, e, el.lo, el.hi, 16, u);
    plain_t[static_cast<size_t>(e)] = detail::sample_plain(curve, e, el.lo, el.hi, 17, u);
  }
  const bool closed = mesh.topology == Topology::Closed;
  double total = 0.0;
  for (int a = 0; a < n; ++a) {
    total += detail::pair_seminorm(grids[static_cast<size_t>(a)].s,
                                   grids[static_cast<size_t>(a)].t);
    for (int b = a + 1; b < n; ++b) {
      const bool adjacent = (b == a + 1) || (closed && a == 0 && b == n - 1);
      const double cross =
          adjacent ? detail::pair_seminorm(grids[static_cast<size_t>(a)].s,
                                           grids[static_cast<size_t>(b)].t)
                   : detail::pair_seminorm(plain_s[static_cast<size_t>(a)],
                                           plain_t[static_cast<size_t>(b)]);
      total += 2.0 * cross;
    }
  }
  return total;
}

}  // namespace igabem
