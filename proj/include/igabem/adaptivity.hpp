#pragma once

// Adaptive refinement driven by node indicators: Doerfler marking of nodes,
// the decision between raising a knot multiplicity and bisecting elements,
// and knot-insertion refinement with a shape-regularity closure loop.

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "igabem/boundary.hpp"
#include "igabem/splines.hpp"

namespace igabem {

// Minimal greedy marking: nodes in descending indicator order (ties broken by
// lower node index) until the marked mass reaches theta times the total.
// All-zero indicators yield the empty set.
inline std::vector<int> doerfler_mark(const Eigen::ArrayXd& eta_sq, double theta) {
  if (!(theta > 0.0 && theta < 1.0))
    throw std::invalid_argument("doerfler_mark: theta must lie in (0,1)");
  const double total = eta_sq.sum();
  std::vector<int> order(static_cast<size_t>(eta_sq.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (eta_sq[a] != eta_sq[b]) return eta_sq[a] > eta_sq[b];
    return a < b;
  });
  std::vector<int> marked;
  double acc = 0.0;
  for (int i : order) {
    if (acc >= theta * total || !(eta_sq[i] > 0.0)) break;
    marked.push_back(i);
    acc += eta_sq[i];
  }
  std::sort(marked.begin(), marked.end());
  return marked;
}

struct MarkingDecision {
  std::vector<int> marked_nodes;     // the Doerfler set
  std::vector<int> bisect_elements;  // element indices to bisect (sorted, unique)
  std::vector<int> raise_nodes;      // node indices whose multiplicity grows by one
};

// Whether bisecting the element keeps both children wide enough for their
// quadrature: near parameter t the representable doubles are ~|t| eps apart,
// and the innermost Gauss nodes sit at ~2e-3 of the child width from its
// endpoints, so children below ~1e-13 |t| would have nodes rounding onto the
// knots.  Elements at this floor are left alone; the associated boundary
// contribution is already at the rounding floor of the assembled energies.
inline bool bisectable(const Element& el) {
  const double scale = std::max({std::abs(el.lo), std::abs(el.hi), 1e-2});
  return el.param_length() > 2e-13 * scale;
}

// Translates marked nodes into refinement actions: an element with both
// endpoint nodes marked is bisected; every other marked node either gets its
// knot multiplicity raised (while below p+1) or, at the multiplicity cap,
// has its neighbouring elements bisected instead.
inline MarkingDecision decide_actions(const BoundaryMesh& mesh, const KnotVector& kv,
                                      const std::vector<int>& marked) {
  const int n_nodes = static_cast<int>(mesh.nodes.size());
  for (int z : marked)
    if (z < 0 || z >= n_nodes) throw std::invalid_argument("decide_actions: node out of range");

  MarkingDecision d;
  d.marked_nodes = marked;
  std::vector<char> is_marked(static_cast<size_t>(n_nodes), 0);
  for (int z : marked) is_marked[static_cast<size_t>(z)] = 1;

  // Endpoint nodes of each element, recovered from the node adjacency.
  const int n_elems = mesh.num_elements();
  std::vector<int> lo_node(static_cast<size_t>(n_elems), -1),
      hi_node(static_cast<size_t>(n_elems), -1);
  for (int i = 0; i < n_nodes; ++i) {
    const MeshNode& nd = mesh.nodes[static_cast<size_t>(i)];
    if (nd.right_elem >= 0) lo_node[static_cast<size_t>(nd.right_elem)] = i;
    if (nd.left_elem >= 0) hi_node[static_cast<size_t>(nd.left_elem)] = i;
  }

  std::vector<char> bisect(static_cast<size_t>(n_elems), 0);
  std::vector<char> consumed(static_cast<size_t>(n_nodes), 0);
  for (int e = 0; e < n_elems; ++e) {
    const int zl = lo_node[static_cast<size_t>(e)], zh = hi_node[static_cast<size_t>(e)];
    if (zl >= 0 && zh >= 0 && is_marked[static_cast<size_t>(zl)] &&
        is_marked[static_cast<size_t>(zh)]) {
      bisect[static_cast<size_t>(e)] = 1;
      consumed[static_cast<size_t>(zl)] = 1;
      consumed[static_cast<size_t>(zh)] = 1;
    }
  }
  for (int z : marked) {
    if (consumed[static_cast<size_t>(z)]) continue;
    const MeshNode& nd = mesh.nodes[static_cast<size_t>(z)];
    if (nd.multiplicity < kv.degree + 1) {
      d.raise_nodes.push_back(z);
    } else {
      if (nd.left_elem >= 0) bisect[static_cast<size_t>(nd.left_elem)] = 1;
      if (nd.right_elem >= 0) bisect[static_cast<size_t>(nd.right_elem)] = 1;
    }
  }
  for (int e = 0; e < n_elems; ++e)
    if (bisect[static_cast<size_t>(e)]) d.bisect_elements.push_back(e);
  return d;
}

// Applies a decision by knot insertion (parameter midpoints for bisections,
// the node's own parameter for multiplicity raises), then repairs shape
// regularity: while some pair of consecutive elements has a parameter-length
// ratio above kappa_limit, the larger of the worst pair is bisected.
inline NurbsCurve refine(const NurbsCurve& curve, const BoundaryMesh& mesh,
                         const MarkingDecision& d, double kappa_limit) {
  NurbsCurve out = curve;
  for (int e : d.bisect_elements) {
    const Element& el = mesh.elements[static_cast<size_t>(e)];
    if (bisectable(el)) out = knot_insert(out, 0.5 * (el.lo + el.hi));
  }
  for (int z : d.raise_nodes) out = knot_insert(out, mesh.nodes[static_cast<size_t>(z)].z);

  for (long guard = 0;; ++guard) {
    const BoundaryMesh m = build_mesh(out);
    const int n = m.num_elements();
    double worst = 1.0;
    int worst_elem = -1;
    auto consider = [&](int i, int j) {
      // The closure always splits the larger element of an offending pair;
      // a pair whose larger member sits at the bisection floor is tolerated.
      const double hi = m.elements[static_cast<size_t>(i)].param_length();
      const double hj = m.elements[static_cast<size_t>(j)].param_length();
      const int larger = hi >= hj ? i : j;
      if (!bisectable(m.elements[static_cast<size_t>(larger)])) return;
      const double r = std::max(hi / hj, hj / hi);
      if (r > worst) {
        worst = r;
        worst_elem = larger;
      }
    };
    for (int i = 0; i + 1 < n; ++i) consider(i, i + 1);
    if (m.topology == Topology::Closed && n >= 2) consider(n - 1, 0);
    if (worst <= kappa_limit) {
      if (m.topology == Topology::Closed) {
        for (const Element& el : m.elements)
          if (el.arclength > 0.25 * m.total_arclength * (1.0 + 1e-12))
            throw std::runtime_error("refine: element exceeds a quarter of the curve");
      }
      return out;
    }
    const Element& el = m.elements[static_cast<size_t>(worst_elem)];
    out = knot_insert(out, 0.5 * (el.lo + el.hi));
    if (guard > 100 + 8L * n)
      throw std::logic_error("refine: shape-regularity closure failed to terminate");
  }
}

// Bisects every element (the uniform refinement used by non-adaptive runs).
inline NurbsCurve uniform_refine(const NurbsCurve& curve, const BoundaryMesh& mesh) {
  NurbsCurve out = curve;
  for (const Element& el : mesh.elements) out = knot_insert(out, 0.5 * (el.lo + el.hi));
  return out;
}

}  // namespace igabem
