#pragma once

// Boundary mesh induced by a NURBS knot vector: elements between distinct
// breakpoints, node patches, shape regularity, and verification of the
// assumptions the node-based error estimator relies on (each element carries
// a nonnegative trial function supported in a small neighbourhood and bounded
// away from zero on the element in mean square).

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "igabem/quadrature.hpp"
#include "igabem/splines.hpp"

namespace igabem {

// Parameter interval between two consecutive distinct knots.
struct Element {
  double lo = 0.0;
  double hi = 0.0;
  long span = 0;          // knot span index: (t_span, t_span+1) = (lo, hi)
  double arclength = 0.0;

  double param_length() const { return hi - lo; }
};

// Mesh node (breakpoint).  For closed curves every node has a left and a
// right element (wrapping across the seam); open endpoints have one.
struct MeshNode {
  double z = 0.0;
  int multiplicity = 0;
  int left_elem = -1;
  int right_elem = -1;
};

struct BoundaryMesh {
  Topology topology = Topology::Closed;
  double a = 0.0;
  double b = 1.0;
  std::vector<Element> elements;  // ascending
  std::vector<MeshNode> nodes;    // ascending z; closed: (a, b] with the seam node last
  double total_arclength = 0.0;

  int num_elements() const { return static_cast<int>(elements.size()); }
  int num_nodes() const { return static_cast<int>(nodes.size()); }

  double max_arclength() const {
    double h = 0.0;
    for (const auto& e : elements) h = std::max(h, e.arclength);
    return h;
  }
};

// Shape regularity in parameter lengths: the largest ratio h/h' over pairs of
// elements whose images touch (consecutive elements, including the wrap
// around the seam for closed curves).  Always >= 1.
inline double shape_regularity(const BoundaryMesh& mesh) {
  const int n = mesh.num_elements();
  double kappa = 1.0;
  auto ratio = [&](int i, int j) {
    const double hi = mesh.elements[static_cast<size_t>(i)].param_length();
    const double hj = mesh.elements[static_cast<size_t>(j)].param_length();
    kappa = std::max(kappa, std::max(hi / hj, hj / hi));
  };
  for (int i = 0; i + 1 < n; ++i) ratio(i, i + 1);
  if (mesh.topology == Topology::Closed && n >= 2) ratio(n - 1, 0);
  return kappa;
}

// Builds the mesh induced by the curve's knot vector and measures element
// arclengths with a Gauss rule of the given order.
inline BoundaryMesh build_mesh(const NurbsCurve& curve, int quad_order = 16) {
  const KnotVector& kv = curve.kv;
  BoundaryMesh mesh;
  mesh.topology = kv.topology;
  mesh.a = kv.a;
  mesh.b = kv.b;

  // Breakpoints zb[0..n] with zb[0] = a and zb[n] = b; element j = [zb_j, zb_{j+1}].
  std::vector<double> zb{kv.a};
  for (double z : kv.knots)
    if (z != zb.back()) zb.push_back(z);
  if (kv.topology == Topology::Open && zb.size() < 2)
    throw std::invalid_argument("build_mesh: knot vector induces no elements");

  const long n = static_cast<long>(zb.size()) - 1;
  if (kv.topology == Topology::Closed && n < 3)
    throw std::invalid_argument("build_mesh: closed meshes need at least 3 elements");

  const QuadratureRule& q = gauss_legendre(quad_order);
  for (long j = 0; j < n; ++j) {
    Element e;
    e.lo = zb[static_cast<size_t>(j)];
    e.hi = zb[static_cast<size_t>(j + 1)];
    // Span index: the knot of value e.hi with the lowest index i has
    // (t_{i-1}, t_i) = (e.lo, e.hi); spans are counted from t_0 = a.
    long span = 0;
    if (kv.topology == Topology::Closed) {
      span = std::lower_bound(kv.knots.begin(), kv.knots.end(), e.hi) - kv.knots.begin();
    } else {
      span = std::lower_bound(kv.knots.begin(), kv.knots.end(), e.hi) - kv.knots.begin() - 1;
    }
    e.span = span;
    if (kv.knot(span) != e.lo || kv.knot(span + 1) != e.hi)
      throw std::logic_error("build_mesh: span alignment failed");
    double arc = 0.0;
    for (int k = 0; k < q.size(); ++k)
      arc += q.weights[k] * curve.frame(e.lo + (e.hi - e.lo) * q.nodes[k]).speed;
    e.arclength = (e.hi - e.lo) * arc;
    mesh.total_arclength += e.arclength;
    mesh.elements.push_back(e);
  }

  if (kv.topology == Topology::Closed) {
    for (long j = 0; j < n; ++j) {
      MeshNode node;
      node.z = mesh.elements[static_cast<size_t>(j)].hi;
      node.multiplicity = kv.multiplicity(node.z);
      node.left_elem = static_cast<int>(j);
      node.right_elem = static_cast<int>((j + 1) % n);
      mesh.nodes.push_back(node);
    }
  } else {
    for (long j = 0; j <= n; ++j) {
      MeshNode node;
      node.z = zb[static_cast<size_t>(j)];
      node.multiplicity = kv.multiplicity(node.z);
      node.left_elem = (j > 0) ? static_cast<int>(j - 1) : -1;
      node.right_elem = (j < n) ? static_cast<int>(j) : -1;
      mesh.nodes.push_back(node);
    }
  }
  return mesh;
}

// Result of checking the estimator's mesh assumptions for a trial space on a
// mesh: each element T with knot index i (so T = (t_{i-1}, t_i)) is assigned
// the rational basis function psi_T = R_{i-m} with m = ceil(p/2), which must
// contain T in its support, be supported within the m-layer element
// neighbourhood of T, and satisfy
//   rho_T = int_{supp} (1 - psi_T)^2 |gamma'| / int_{supp} |gamma'|  < 1.
struct MeshAssumptionReport {
  bool support_ok = true;
  double max_rho = 0.0;
};

namespace detail {

// Evaluates the NURBS basis function of index i at an extended parameter
// (closed topology: B_{i+N}(t + period) = B_i(t)).
inline double nurbs_eval_extended(const KnotVector& kv, const std::vector<double>& weights,
                                  long i, double t) {
  if (kv.topology == Topology::Closed) {
    const double period = kv.b - kv.a;
    long shift = 0;
    while (t >= kv.b) {
      t -= period;
      shift += kv.count();
    }
    while (t < kv.a) {
      t += period;
      shift -= kv.count();
    }
    return nurbs_eval(kv, weights, i + shift, t);
  }
  return nurbs_eval(kv, weights, i, t);
}

}  // namespace detail

inline MeshAssumptionReport check_mesh_assumptions(const KnotVector& space_kv,
                                                   const std::vector<double>& space_weights,
                                                   const NurbsCurve& curve,
                                                   const BoundaryMesh& mesh,
                                                   int quad_order = 16) {
  const int p = space_kv.degree;
  const long m = (p + 1) / 2;
  const int n = mesh.num_elements();
  const double period = mesh.b - mesh.a;
  const QuadratureRule& q = gauss_legendre(quad_order);
  MeshAssumptionReport report;

  // Extended breakpoint accessor zb(j) for j in Z (closed) / clamped (open):
  // element j = [zb(j), zb(j+1)].
  auto zb = [&](long j) -> double {
    if (mesh.topology == Topology::Closed) {
      const long r = j - detail::floor_div(j, static_cast<long>(n)) * n;
      const double base = (r == 0) ? mesh.a : mesh.elements[static_cast<size_t>(r - 1)].hi;
      return base + static_cast<double>(detail::floor_div(j, static_cast<long>(n))) * period;
    }
    const long r = std::clamp(j, 0L, static_cast<long>(n));
    return (r == 0) ? mesh.a : mesh.elements[static_cast<size_t>(r - 1)].hi;
  };

  for (int j = 0; j < n; ++j) {
    const Element& e = mesh.elements[static_cast<size_t>(j)];
    // Locate the element in the space's knots: the index i with
    // (t_{i-1}, t_i) = (e.lo, e.hi).  The space may differ from the curve's
    // knot vector but must share its breakpoints.
    long i;
    if (space_kv.topology == Topology::Closed) {
      i = std::lower_bound(space_kv.knots.begin(), space_kv.knots.end(), e.hi) -
          space_kv.knots.begin() + 1;
    } else {
      i = std::lower_bound(space_kv.knots.begin(), space_kv.knots.end(), e.hi) -
          space_kv.knots.begin();
    }
    if (space_kv.knot(i - 1) != e.lo || space_kv.knot(i) != e.hi)
      throw std::invalid_argument(
          "check_mesh_assumptions: trial space does not resolve the mesh");
    const long psi = i - m;  // index of the element's patch function

    // Support of R_{i-m} clipped to the parameter interval (open) or taken in
    // extended coordinates (closed).
    double s_lo = space_kv.topology == Topology::Closed
                      ? space_kv.knot(psi - 1)
                      : std::max(space_kv.knot(std::max(psi - 1, 0L)), mesh.a);
    double s_hi = space_kv.topology == Topology::Closed
                      ? space_kv.knot(psi + p)
                      : std::min(space_kv.knot(std::min(psi + p, space_kv.count())), mesh.b);

    // T subset supp psi_T subset omega^m(T).
    if (!(s_lo <= e.lo && e.hi <= s_hi)) report.support_ok = false;
    if (!(zb(j - m) <= s_lo + 1e-14 && s_hi <= zb(j + 1 + m) + 1e-14)) report.support_ok = false;

    // rho_T over the support, integrating element by element.
    double num = 0.0, den = 0.0;
    std::vector<double> cuts{s_lo};
    for (long idx = psi - 1; idx <= psi + p; ++idx) {
      double t = space_kv.topology == Topology::Closed
                     ? space_kv.knot(idx)
                     : space_kv.knot(std::clamp(idx, 0L, space_kv.count()));
      t = std::clamp(t, s_lo, s_hi);
      if (t > cuts.back()) cuts.push_back(t);
    }
    if (cuts.back() < s_hi) cuts.push_back(s_hi);
    for (size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double lo = cuts[c], hi = cuts[c + 1];
      for (int k = 0; k < q.size(); ++k) {
        const double t = lo + (hi - lo) * q.nodes[k];
        double tr = t;
        if (mesh.topology == Topology::Closed) {
          while (tr >= mesh.b) tr -= period;
          while (tr < mesh.a) tr += period;
        }
        const double speed = curve.frame(tr).speed;
        const double v = detail::nurbs_eval_extended(space_kv, space_weights, psi, t);
        num += (hi - lo) * q.weights[k] * (1.0 - v) * (1.0 - v) * speed;
        den += (hi - lo) * q.weights[k] * speed;
      }
    }
    report.max_rho = std::max(report.max_rho, num / den);
  }
  return report;
}

}  // namespace igabem
