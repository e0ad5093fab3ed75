#pragma once

// Galerkin discretization of the weakly singular single layer operator
//   V phi(x) = -(1/2pi) int_Gamma log|x - y| phi(y) ds_y
// on a NURBS curve, plus pointwise evaluation of V phi and of the double
// layer trace (K + 1/2) g used to assemble Dirichlet right-hand sides.
//
// All quadratures are built from a per-refinement-level cache.  Each element
// carries:
//   * its main Gauss grid (order q) with frames and trial basis values,
//   * an auxiliary grid of order q+1 (plain rules whose nodes never collide
//     with main-grid nodes),
//   * two "ladder" grids: dyadic subdivisions graded towards each endpoint,
//     sampled once per level.  Evaluating a potential near an element then
//     costs one vectorized kernel sweep over the ladder instead of fresh
//     curve evaluations, which keeps the node-patch error estimator cheap.
// Logarithmically singular parts are handled by the log-weighted rules
// (element pairs) and by closed-form Legendre log moments (pointwise
// evaluation inside the containing element).

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igabem/boundary.hpp"
#include "igabem/quadrature.hpp"
#include "igabem/splines.hpp"

namespace igabem {

// One sampled quadrature grid on (pieces of) an element: parameters, weights
// in the parameter measure, positions, speeds, rotated tangents
// (rx, ry) = (gamma_2', -gamma_1') = normal * speed, and the active trial
// basis values (nb x #nodes).
struct GridSample {
  Eigen::ArrayXd t, w, x, y, speed, rx, ry;
  Eigen::MatrixXd basis;

  long size() const { return t.size(); }
};

struct ElementData {
  double lo = 0.0, hi = 0.0;
  double arc = 0.0;
  long span = 0;
  long first = 0;  // first active basis index
  int nb = 0;      // number of active basis functions (degree + 1)
  Vec2 p_lo, p_hi;
  // True when an endpoint is a tangent-direction corner of the curve (or a
  // tip of an open curve).  Data composed with the parametrization may lose
  // analyticity there, so endpoint-resolving quadrature is used even for
  // far-away targets.
  bool corner_endpoint = false;
  GridSample main_grid;
  GridSample aux;     // order q+1
  GridSample lad_lo;  // [lo, mid], dyadic pieces graded towards lo
  GridSample lad_hi;  // [mid, hi], dyadic pieces graded towards hi
};

struct LevelCache {
  int order = 16;
  int ladder_order = 10;
  // Geometric grading truncates the x log x endpoint layers at 2^-depth of
  // the element; 52 levels push the truncated mass to ~1e-14 relative, below
  // the rounding floor of the assembled energies.
  int ladder_depth = 52;
  int legendre_terms = 18;
  std::vector<ElementData> elems;
  // P_m(y_k) at the main-grid reference nodes y_k = 2 u_k - 1, m = 0..M-1.
  Eigen::MatrixXd ref_legendre;
};

namespace detail {

inline GridSample sample_grid(const NurbsCurve& curve, long expected_first,
                              const std::vector<std::pair<double, double>>& nodes_weights) {
  const long n = static_cast<long>(nodes_weights.size());
  GridSample g;
  g.t.resize(n);
  g.w.resize(n);
  g.x.resize(n);
  g.y.resize(n);
  g.speed.resize(n);
  g.rx.resize(n);
  g.ry.resize(n);
  g.basis.resize(0, 0);
  int nb = -1;
  for (long k = 0; k < n; ++k) {
    const double t = nodes_weights[static_cast<size_t>(k)].first;
    const auto f = curve.frame(t);
    const auto sb = nurbs_basis_at(curve.kv, curve.weights, t);
    if (sb.first != expected_first)
      throw std::logic_error("sample_grid: span changed within an element");
    if (nb < 0) {
      nb = sb.count;
      g.basis.resize(nb, n);
    }
    g.t[k] = t;
    g.w[k] = nodes_weights[static_cast<size_t>(k)].second;
    g.x[k] = f.x.x();
    g.y[k] = f.x.y();
    g.speed[k] = f.speed;
    g.rx[k] = f.dx.y();
    g.ry[k] = -f.dx.x();
    for (int r = 0; r < nb; ++r) g.basis(r, k) = sb.value[static_cast<size_t>(r)];
  }
  return g;
}

}  // namespace detail

inline LevelCache build_cache(const NurbsCurve& curve, const BoundaryMesh& mesh,
                              int order = 16) {
  LevelCache cache;
  cache.order = order;
  const QuadratureRule& q = gauss_legendre(order);
  const QuadratureRule& qa = gauss_legendre(order + 1);
  const QuadratureRule& ql = gauss_legendre(cache.ladder_order);

  cache.ref_legendre.resize(cache.legendre_terms, order);
  for (int k = 0; k < order; ++k) {
    const double yk = 2.0 * q.nodes[static_cast<size_t>(k)] - 1.0;
    double p0 = 1.0, p1 = yk;
    cache.ref_legendre(0, k) = p0;
    if (cache.legendre_terms > 1) cache.ref_legendre(1, k) = p1;
    for (int m = 2; m < cache.legendre_terms; ++m) {
      const double p2 = ((2.0 * m - 1.0) * yk * p1 - (m - 1.0) * p0) / m;
      cache.ref_legendre(m, k) = p2;
      p0 = p1;
      p1 = p2;
    }
  }

  for (const Element& e : mesh.elements) {
    ElementData ed;
    ed.lo = e.lo;
    ed.hi = e.hi;
    ed.arc = e.arclength;
    ed.span = e.span;
    const double len = e.hi - e.lo;
    const auto sb = bspline_basis_at(curve.kv, 0.5 * (e.lo + e.hi));
    ed.first = sb.first;
    ed.nb = sb.count;
    ed.p_lo = curve.eval(e.lo);
    ed.p_hi = curve.eval(e.hi, curve.kv.topology == Topology::Open && e.hi == curve.kv.b
                                   ? Side::Left
                                   : Side::Right);

    auto corner_at = [&](double z) {
      const bool closed = curve.kv.topology == Topology::Closed;
      if (!closed && (z <= curve.kv.a || z >= curve.kv.b)) return true;
      const double zl = (closed && z <= curve.kv.a) ? curve.kv.b : z;
      const double zr = (closed && z >= curve.kv.b) ? curve.kv.a : z;
      const Vec2 tin = curve.frame(zl, Side::Left).dx.normalized();
      const Vec2 tout = curve.frame(zr, Side::Right).dx.normalized();
      return tin.dot(tout) < 1.0 - 1e-10;
    };
    ed.corner_endpoint = corner_at(e.lo) || corner_at(e.hi);

    auto grid_of = [&](const QuadratureRule& rule, double lo, double hi) {
      std::vector<std::pair<double, double>> nw;
      for (int k = 0; k < rule.size(); ++k)
        nw.emplace_back(lo + (hi - lo) * rule.nodes[static_cast<size_t>(k)],
                        (hi - lo) * rule.weights[static_cast<size_t>(k)]);
      return nw;
    };
    ed.main_grid = detail::sample_grid(curve, ed.first, grid_of(q, e.lo, e.hi));
    ed.aux = detail::sample_grid(curve, ed.first, grid_of(qa, e.lo, e.hi));

    // Ladders: the two half-elements subdivided dyadically towards their
    // outer endpoints, [lo + W 2^{-k-1}, lo + W 2^{-k}] with W = len/2 and its
    // mirror.  Together they form a quadrature for the whole element that
    // resolves endpoint layers; the leftover intervals of width W 2^{-depth}
    // are dropped (their weak-singular contribution is O(2^{-depth} log)).
    std::vector<std::pair<double, double>> nw_lo, nw_hi;
    const double whalf = 0.5 * len;
    for (int d = 0; d < cache.ladder_depth; ++d) {
      const double wlo = whalf * std::ldexp(1.0, -d - 1);
      for (int k = 0; k < ql.size(); ++k) {
        const double u = ql.nodes[static_cast<size_t>(k)], gw = ql.weights[static_cast<size_t>(k)];
        // On very short elements the deepest levels underflow and their nodes
        // round onto the endpoints (outside the element's knot span); such
        // nodes are dropped together with the remainder intervals.
        const double tlo = e.lo + wlo * (1.0 + u), thi = e.hi - wlo * (1.0 + u);
        if (tlo > e.lo && tlo < e.hi) nw_lo.emplace_back(tlo, wlo * gw);
        if (thi > e.lo && thi < e.hi) nw_hi.emplace_back(thi, wlo * gw);
      }
    }
    ed.lad_lo = detail::sample_grid(curve, ed.first, nw_lo);
    ed.lad_hi = detail::sample_grid(curve, ed.first, nw_hi);
    cache.elems.push_back(std::move(ed));
  }
  return cache;
}

namespace detail {

// F_m(x) = int_{-1}^{1} P_m(y) log|x - y| dy for m = 0..count-1, |x| < 1,
// via Legendre functions of the second kind:
//   F_0 = (1+x)log(1+x) + (1-x)log(1-x) - 2,
//   F_m = 2 (Q_{m+1}(x) - Q_{m-1}(x)) / (2m+1),  m >= 1.
inline void legendre_log_moments(double x, int count, double* out) {
  const double omx = std::max(1.0 - x, 1e-300), opx = std::max(1.0 + x, 1e-300);
  out[0] = opx * std::log(opx) + omx * std::log(omx) - 2.0;
  if (count == 1) return;
  double qm1 = 0.5 * std::log(opx / omx);  // Q_0
  double qm = x * qm1 - 1.0;               // Q_1
  for (int m = 1; m < count; ++m) {
    const double qp = ((2.0 * m + 1.0) * x * qm - m * qm1) / (m + 1.0);  // Q_{m+1}
    out[m] = 2.0 * (qp - qm1) / (2.0 * m + 1.0);
    qm1 = qm;
    qm = qp;
  }
}

// Minimum distance from x to the two endpoints of an element.
inline double endpoint_distance(const ElementData& e, const Vec2& x) {
  return std::min((x - e.p_lo).norm(), (x - e.p_hi).norm());
}

// An element is "near" a target when plain Gauss on its main grid would see a
// kernel varying on a scale below the element size.
inline bool is_near(const ElementData& e, const Vec2& x) {
  return endpoint_distance(e, x) < 1.5 * e.arc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Galerkin matrix of the single layer operator.
// ---------------------------------------------------------------------------

namespace detail {

// Scatters an element-pair block into the global matrix (and its transpose
// for distinct elements).
inline void scatter_pair(Eigen::MatrixXd& V, const KnotVector& kv, const ElementData& Er,
                         const ElementData& Ec, const Eigen::MatrixXd& M) {
  const long r0 = Er.first - kv.first_basis();
  const long c0 = Ec.first - kv.first_basis();
  V.block(r0, c0, Er.nb, Ec.nb) += M;
  if (&Er != &Ec) V.block(c0, r0, Ec.nb, Er.nb) += M.transpose();
}

// Plain tensor-Gauss block between two sampled grids:
//   M[r][c] = sum_{k,l} wA_k wB_l log|xA_k - xB_l| speedA_k speedB_l RA_r RB_c.
inline Eigen::MatrixXd plain_block(const GridSample& A, const GridSample& B) {
  Eigen::MatrixXd W(A.size(), B.size());
  for (long k = 0; k < A.size(); ++k) {
    W.row(k) = (A.w[k] * A.speed[k] * 0.5 *
                ((A.x[k] - B.x).square() + (A.y[k] - B.y).square()).log() * B.w * B.speed)
                   .matrix();
  }
  return A.basis * W * B.basis.transpose();
}

// Minimal distance between the endpoint sets of two parameter intervals.
inline double piece_distance(const NurbsCurve& curve, double alo, double ahi, double blo,
                             double bhi) {
  const Vec2 a0 = curve.eval(alo), a1 = curve.eval(ahi);
  const Vec2 b0 = curve.eval(blo), b1 = curve.eval(bhi);
  return std::sqrt(std::min(std::min((a0 - b0).squaredNorm(), (a0 - b1).squaredNorm()),
                            std::min((a1 - b0).squaredNorm(), (a1 - b1).squaredNorm())));
}

inline GridSample sample_subinterval(const NurbsCurve& curve, const ElementData& e, double lo,
                                     double hi, int order) {
  const QuadratureRule& q = gauss_legendre(order);
  std::vector<std::pair<double, double>> nw;
  for (int k = 0; k < q.size(); ++k)
    nw.emplace_back(lo + (hi - lo) * q.nodes[static_cast<size_t>(k)],
                    (hi - lo) * q.weights[static_cast<size_t>(k)]);
  return sample_grid(curve, e.first, nw);
}

// Block for a pair of elements that do not touch.  Physically close pairs
// (e.g. across a narrow domain mouth) are subdivided until the kernel is
// resolved; everything else takes the cached fast path.
inline void separated_block_recurse(const NurbsCurve& curve, const ElementData& A,
                                    const ElementData& B, double alo, double ahi, double blo,
                                    double bhi, int order, int depth, Eigen::MatrixXd& M) {
  const Vec2 ca = curve.eval(ahi) - curve.eval(alo);
  const Vec2 cb = curve.eval(bhi) - curve.eval(blo);
  const double sizes = std::max(ca.norm(), cb.norm());
  const double d = piece_distance(curve, alo, ahi, blo, bhi);
  if (depth >= 8 || d >= 0.4 * sizes) {
    const GridSample ga = sample_subinterval(curve, A, alo, ahi, order);
    const GridSample gb = sample_subinterval(curve, B, blo, bhi, order);
    M += plain_block(ga, gb);
    return;
  }
  if (ca.norm() >= cb.norm()) {
    const double mid = 0.5 * (alo + ahi);
    separated_block_recurse(curve, A, B, alo, mid, blo, bhi, order, depth + 1, M);
    separated_block_recurse(curve, A, B, mid, ahi, blo, bhi, order, depth + 1, M);
  } else {
    const double mid = 0.5 * (blo + bhi);
    separated_block_recurse(curve, A, B, alo, ahi, blo, mid, order, depth + 1, M);
    separated_block_recurse(curve, A, B, alo, ahi, mid, bhi, order, depth + 1, M);
  }
}

inline Eigen::MatrixXd separated_block(const NurbsCurve& curve, const ElementData& A,
                                       const ElementData& B, int order) {
  const double d = std::sqrt(
      std::min(std::min((A.p_lo - B.p_lo).squaredNorm(), (A.p_lo - B.p_hi).squaredNorm()),
               std::min((A.p_hi - B.p_lo).squaredNorm(), (A.p_hi - B.p_hi).squaredNorm())));
  if (d >= 0.4 * std::max((A.p_hi - A.p_lo).norm(), (B.p_hi - B.p_lo).norm()))
    return plain_block(A.main_grid, B.main_grid);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(A.nb, B.nb);
  separated_block_recurse(curve, A, B, A.lo, A.hi, B.lo, B.hi, order, 0, M);
  return M;
}

// Diagonal block: int_T int_T G(s,t) log|gamma(s)-gamma(t)| with
// G = R_r(s) R_c(t) |gamma'(s)| |gamma'(t)|.  The kernel splits into the
// smooth log of the chord-to-parameter ratio (cached tensor Gauss) and
// log|s - t| handled by the two-triangle Duffy factorization.
inline Eigen::MatrixXd identical_block(const NurbsCurve& curve, const ElementData& E,
                                       int order) {
  const long q = E.main_grid.size();
  const int nb = E.nb;
  Eigen::MatrixXd M(nb, nb);

  // Smooth part on the cached grid; the diagonal uses the limit ratio |gamma'|.
  Eigen::MatrixXd W(q, q);
  for (long k = 0; k < q; ++k) {
    for (long l = 0; l < q; ++l) {
      double logratio;
      if (k == l) {
        logratio = std::log(E.main_grid.speed[k]);
      } else {
        const double dx = E.main_grid.x[k] - E.main_grid.x[l];
        const double dy = E.main_grid.y[k] - E.main_grid.y[l];
        const double dt = E.main_grid.t[k] - E.main_grid.t[l];
        logratio = 0.5 * std::log((dx * dx + dy * dy) / (dt * dt));
      }
      W(k, l) = E.main_grid.w[k] * E.main_grid.w[l] * E.main_grid.speed[k] *
                E.main_grid.speed[l] * logratio;
    }
  }
  M = E.main_grid.basis * W * E.main_grid.basis.transpose();

  // log|s - t| part: with (s, t) = (lo + L u, lo + L u(1 - v)) and its swap,
  //   int int G log|s-t| = L^2 [ log L * S(1,1) - S(log u) - S(log v) ],
  // where S(mu) = int int u [G(s,t) + G(t,s)] mu(u,v) du dv.
  const double L = E.hi - E.lo;
  const QuadratureRule& gq = gauss_legendre(order);
  const QuadratureRule& gl = gauss_log(std::min(order, 32));
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nb, nb), Bu = Eigen::MatrixXd::Zero(nb, nb),
                  Bv = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::VectorXd ra(nb), rb(nb);
  auto accumulate = [&](Eigen::MatrixXd& out, double u, double v, double weight) {
    const double s = E.lo + L * u;
    const double t = E.lo + L * u * (1.0 - v);
    const auto fs = curve.frame(s);
    const auto ft = curve.frame(t);
    const auto bs = nurbs_basis_at(curve.kv, curve.weights, s);
    const auto bt = nurbs_basis_at(curve.kv, curve.weights, t);
    for (int r = 0; r < nb; ++r) {
      ra[r] = bs.value[static_cast<size_t>(r)] * fs.speed;
      rb[r] = bt.value[static_cast<size_t>(r)] * ft.speed;
    }
    // u * [G(s,t) + G(t,s)] contributes symmetrically.
    const double c = weight * u;
    out.noalias() += c * (ra * rb.transpose());
    out.noalias() += c * (rb * ra.transpose());
  };
  for (int i = 0; i < gq.size(); ++i)
    for (int j = 0; j < gq.size(); ++j)
      accumulate(A, gq.nodes[static_cast<size_t>(i)], gq.nodes[static_cast<size_t>(j)],
                 gq.weights[static_cast<size_t>(i)] * gq.weights[static_cast<size_t>(j)]);
  for (int i = 0; i < gl.size(); ++i)
    for (int j = 0; j < gq.size(); ++j)
      accumulate(Bu, gl.nodes[static_cast<size_t>(i)], gq.nodes[static_cast<size_t>(j)],
                 gl.weights[static_cast<size_t>(i)] * gq.weights[static_cast<size_t>(j)]);
  for (int i = 0; i < gq.size(); ++i)
    for (int j = 0; j < gl.size(); ++j)
      accumulate(Bv, gq.nodes[static_cast<size_t>(i)], gl.nodes[static_cast<size_t>(j)],
                 gq.weights[static_cast<size_t>(i)] * gl.weights[static_cast<size_t>(j)]);
  M += (L * L) * (std::log(L) * A - Bu - Bv);
  return M;
}

// Block for elements sharing one node z: left = [z - h1, z], right = [z, z + h2]
// (the right element may be the wrap-around across the seam of a closed curve).
// With distances X, Y from z the Duffy triangles (X,Y) = (u, uv) and (uv, u)
// factor the chord as |gamma(s) - gamma(t)| = u * psi(u, v) with psi smooth and
// positive, so log = log u + log psi.
inline Eigen::MatrixXd adjacent_block(const NurbsCurve& curve, const ElementData& EL,
                                      const ElementData& ER, int order) {
  const double z = EL.hi;
  const double h1 = EL.hi - EL.lo, h2 = ER.hi - ER.lo;
  const int nbl = EL.nb, nbr = ER.nb;
  const QuadratureRule& gq = gauss_legendre(order);
  const QuadratureRule& gl = gauss_log(std::min(order, 32));
  Eigen::MatrixXd Tsmooth = Eigen::MatrixXd::Zero(nbl, nbr),
                  Tlog = Eigen::MatrixXd::Zero(nbl, nbr);
  Eigen::VectorXd rl(nbl), rr(nbr);

  // One Duffy point: X, Y in (0, 1], s = z - h1 X (left), t = ER.lo + h2 Y
  // (right); jac = u from the triangle map.
  auto point = [&](double X, double Y, double u, double weight, bool with_log_psi,
                   Eigen::MatrixXd& out) {
    const double s = z - h1 * X;
    const double t = ER.lo + h2 * Y;
    const auto fs = curve.frame(s);
    const auto ft = curve.frame(t);
    const auto bs = nurbs_basis_at(curve.kv, curve.weights, s);
    const auto bt = nurbs_basis_at(curve.kv, curve.weights, t);
    for (int r = 0; r < nbl; ++r) rl[r] = bs.value[static_cast<size_t>(r)] * fs.speed;
    for (int c = 0; c < nbr; ++c) rr[c] = bt.value[static_cast<size_t>(c)] * ft.speed;
    double factor = weight * u;
    if (with_log_psi) factor *= std::log((fs.x - ft.x).norm() / u);
    out.noalias() += factor * (rl * rr.transpose());
  };

  for (int i = 0; i < gq.size(); ++i) {
    const double u = gq.nodes[static_cast<size_t>(i)];
    for (int j = 0; j < gq.size(); ++j) {
      const double v = gq.nodes[static_cast<size_t>(j)];
      const double wgt = gq.weights[static_cast<size_t>(i)] * gq.weights[static_cast<size_t>(j)];
      point(u, u * v, u, wgt, true, Tsmooth);
      point(u * v, u, u, wgt, true, Tsmooth);
    }
  }
  for (int i = 0; i < gl.size(); ++i) {
    const double u = gl.nodes[static_cast<size_t>(i)];
    for (int j = 0; j < gq.size(); ++j) {
      const double v = gq.nodes[static_cast<size_t>(j)];
      const double wgt = gl.weights[static_cast<size_t>(i)] * gq.weights[static_cast<size_t>(j)];
      point(u, u * v, u, wgt, false, Tlog);
      point(u * v, u, u, wgt, false, Tlog);
    }
  }
  // int int F log u du dv = -GaussLog_u x Gauss_v (F).
  return h1 * h2 * (Tsmooth - Tlog);
}

}  // namespace detail

// Assembles the symmetric Galerkin matrix V[i][j] = <V R_j, R_i> in the trial
// space carried by the curve's knot vector and weights.
inline Eigen::MatrixXd assemble_single_layer(const NurbsCurve& curve, const BoundaryMesh& mesh,
                                             const LevelCache& cache) {
  const KnotVector& kv = curve.kv;
  const long nd = kv.num_basis();
  const int n = mesh.num_elements();
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(nd, nd);
  for (int a = 0; a < n; ++a) {
    const ElementData& A = cache.elems[static_cast<size_t>(a)];
    detail::scatter_pair(V, kv, A, A, detail::identical_block(curve, A, cache.order));
    for (int b = a + 1; b < n; ++b) {
      const ElementData& B = cache.elems[static_cast<size_t>(b)];
      if (b == a + 1) {
        detail::scatter_pair(V, kv, A, B, detail::adjacent_block(curve, A, B, cache.order));
      } else if (mesh.topology == Topology::Closed && a == 0 && b == n - 1) {
        // Seam adjacency: the last element ends at b = a (parameter), so it is
        // the left neighbour of element 0.
        detail::scatter_pair(V, kv, B, A, detail::adjacent_block(curve, B, A, cache.order));
      } else {
        detail::scatter_pair(V, kv, A, B, detail::separated_block(curve, A, B, cache.order));
      }
    }
  }
  V *= -1.0 / (2.0 * M_PI);
  return V;
}

// ---------------------------------------------------------------------------
// Pointwise potentials.
// ---------------------------------------------------------------------------

// V phi_h evaluated on the curve for a discrete density given by trial-space
// coefficients.  Far elements use the cached main grids, near elements the
// cached ladders, and the containing element a smooth/log split whose log
// part is integrated exactly against a per-element Legendre expansion.
class SingleLayerPotential {
 public:
  SingleLayerPotential(const NurbsCurve& curve, const BoundaryMesh& mesh,
                       const LevelCache& cache, const Eigen::VectorXd& coeffs)
      : curve_(&curve), mesh_(&mesh), cache_(&cache), coeffs_(coeffs) {
    const long nelem = static_cast<long>(cache.elems.size());
    main_charge_.resize(static_cast<size_t>(nelem));
    lad_lo_charge_.resize(static_cast<size_t>(nelem));
    lad_hi_charge_.resize(static_cast<size_t>(nelem));
    leg_.resize(static_cast<size_t>(nelem));
    const long base = curve.kv.first_basis();
    for (long e = 0; e < nelem; ++e) {
      const ElementData& ed = cache.elems[static_cast<size_t>(e)];
      const Eigen::VectorXd local = coeffs_.segment(ed.first - base, ed.nb);
      auto charges = [&](const GridSample& g) {
        return Eigen::ArrayXd((g.basis.transpose() * local).array() * g.speed * g.w);
      };
      main_charge_[static_cast<size_t>(e)] = charges(ed.main_grid);
      lad_lo_charge_[static_cast<size_t>(e)] = charges(ed.lad_lo);
      lad_hi_charge_[static_cast<size_t>(e)] = charges(ed.lad_hi);
      // Legendre coefficients of G = phi_h * speed on the element:
      // a_m = (2m+1)/L * sum_k w_k G(t_k) P_m(y_k).
      const Eigen::ArrayXd G = (ed.main_grid.basis.transpose() * local).array() * ed.main_grid.speed;
      Eigen::VectorXd a(cache.legendre_terms);
      const double L = ed.hi - ed.lo;
      for (int m = 0; m < cache.legendre_terms; ++m) {
        double s = 0.0;
        for (long k = 0; k < ed.main_grid.size(); ++k)
          s += ed.main_grid.w[k] * G[k] * cache.ref_legendre(m, static_cast<int>(k));
        a[m] = (2.0 * m + 1.0) / L * s;
      }
      leg_[static_cast<size_t>(e)] = a;
    }
    // Far-field pass data: all main grids concatenated, so one vectorized
    // sweep covers every element and the few near/containing elements are
    // corrected afterwards.
    const long q = cache.order;
    flat_x_.resize(q * nelem);
    flat_y_.resize(q * nelem);
    flat_charge_.resize(q * nelem);
    for (long e = 0; e < nelem; ++e) {
      const ElementData& ed = cache.elems[static_cast<size_t>(e)];
      flat_x_.segment(q * e, q) = ed.main_grid.x;
      flat_y_.segment(q * e, q) = ed.main_grid.y;
      flat_charge_.segment(q * e, q) = main_charge_[static_cast<size_t>(e)];
    }
    wd2_.resize(q * nelem);
  }

  // Value of V phi_h at gamma(t) with t inside element `elem`.
  double operator()(int elem, double t) const {
    const Vec2 x = curve_->eval(t);
    const long q = cache_->order;
    wd2_ = (flat_x_ - x.x()).square() + (flat_y_ - x.y()).square();
    double acc = (wd2_ > 0.0).select(flat_charge_ * (0.5 * wd2_.log()), 0.0).sum();
    const int n = static_cast<int>(cache_->elems.size());
    for (int e = 0; e < n; ++e) {
      const ElementData& ed = cache_->elems[static_cast<size_t>(e)];
      if (e != elem && !detail::is_near(ed, x)) continue;
      // Replace this element's plain far contribution by the proper one.
      const auto d2s = wd2_.segment(q * e, q);
      const auto chs = flat_charge_.segment(q * e, q);
      acc -= (d2s > 0.0).select(chs * (0.5 * d2s.log()), 0.0).sum();
      if (e == elem) {
        acc += containing(ed, static_cast<size_t>(e), t, x);
      } else {
        acc += log_sweep(ed.lad_lo, lad_lo_charge_[static_cast<size_t>(e)], x);
        acc += log_sweep(ed.lad_hi, lad_hi_charge_[static_cast<size_t>(e)], x);
      }
    }
    return -acc / (2.0 * M_PI);
  }

 private:
  static double log_sweep(const GridSample& g, const Eigen::ArrayXd& charge, const Vec2& x) {
    // Nodes of heavily refined elements may coincide with x bitwise; their
    // true contribution carries a vanishing weight, so drop them rather than
    // produce log(0).
    const Eigen::ArrayXd d2 = (g.x - x.x()).square() + (g.y - x.y()).square();
    return (d2 > 0.0).select(charge * 0.5 * d2.log(), 0.0).sum();
  }

  double containing(const ElementData& ed, size_t e, double t, const Vec2& x) const {
    // Smooth part: log of chord/parameter ratio on the cached grid.
    const GridSample& g = ed.main_grid;
    double acc = 0.0;
    for (long k = 0; k < g.size(); ++k) {
      const double dt = t - g.t[k];
      const double d2 = (g.x[k] - x.x()) * (g.x[k] - x.x()) + (g.y[k] - x.y()) * (g.y[k] - x.y());
      double logratio;
      if (dt == 0.0 || d2 == 0.0) {
        // Coincident in parameter, or so close that the chord underflows to
        // zero: the chord/parameter ratio degenerates to the local speed.
        logratio = std::log(curve_->frame(t).speed);
      } else {
        logratio = 0.5 * std::log(d2 / (dt * dt));
      }
      acc += main_charge_[e][k] * logratio;
    }
    // log|s - t| part against the Legendre expansion of phi_h * speed.
    const double L = ed.hi - ed.lo;
    const double xm = std::clamp(2.0 * (t - ed.lo) / L - 1.0, -1.0 + 1e-15, 1.0 - 1e-15);
    double F[64];
    detail::legendre_log_moments(xm, cache_->legendre_terms, F);
    const Eigen::VectorXd& a = leg_[e];
    double series = 0.0;
    for (int m = 0; m < cache_->legendre_terms; ++m) series += a[m] * F[m];
    const double mass = main_charge_[e].sum();  // int G dt
    acc += std::log(0.5 * L) * mass + 0.5 * L * series;
    return acc;
  }

  const NurbsCurve* curve_;
  const BoundaryMesh* mesh_;
  const LevelCache* cache_;
  Eigen::VectorXd coeffs_;
  std::vector<Eigen::ArrayXd> main_charge_, lad_lo_charge_, lad_hi_charge_;
  std::vector<Eigen::VectorXd> leg_;
  Eigen::ArrayXd flat_x_, flat_y_, flat_charge_;
  mutable Eigen::ArrayXd wd2_;  // per-call workspace (evaluation is serial)
};

// (K + 1/2) g evaluated on the curve:
//   K g(x) = -(1/2pi) int (nu(y) . (y - x)) / |y - x|^2 g(y) ds_y.
class DoubleLayerTrace {
 public:
  DoubleLayerTrace(const NurbsCurve& curve, const BoundaryMesh& mesh, const LevelCache& cache,
                   std::function<double(const Vec2&)> g)
      : curve_(&curve), mesh_(&mesh), cache_(&cache), g_(std::move(g)) {
    const long nelem = static_cast<long>(cache.elems.size());
    main_ax_.resize(static_cast<size_t>(nelem));
    main_ay_.resize(static_cast<size_t>(nelem));
    lad_lo_ax_.resize(static_cast<size_t>(nelem));
    lad_lo_ay_.resize(static_cast<size_t>(nelem));
    lad_hi_ax_.resize(static_cast<size_t>(nelem));
    lad_hi_ay_.resize(static_cast<size_t>(nelem));
    aux_ax_.resize(static_cast<size_t>(nelem));
    aux_ay_.resize(static_cast<size_t>(nelem));
    for (long e = 0; e < nelem; ++e) {
      const ElementData& ed = cache.elems[static_cast<size_t>(e)];
      auto fill = [&](const GridSample& grid, Eigen::ArrayXd& ax, Eigen::ArrayXd& ay) {
        ax.resize(grid.size());
        ay.resize(grid.size());
        for (long k = 0; k < grid.size(); ++k) {
          const double gv = g_(Vec2(grid.x[k], grid.y[k]));
          ax[k] = grid.w[k] * gv * grid.rx[k];
          ay[k] = grid.w[k] * gv * grid.ry[k];
        }
      };
      fill(ed.main_grid, main_ax_[static_cast<size_t>(e)], main_ay_[static_cast<size_t>(e)]);
      fill(ed.lad_lo, lad_lo_ax_[static_cast<size_t>(e)], lad_lo_ay_[static_cast<size_t>(e)]);
      fill(ed.lad_hi, lad_hi_ax_[static_cast<size_t>(e)], lad_hi_ay_[static_cast<size_t>(e)]);
      fill(ed.aux, aux_ax_[static_cast<size_t>(e)], aux_ay_[static_cast<size_t>(e)]);
    }
    // Far-field pass data: all main grids concatenated.  Corner elements keep
    // endpoint-graded quadrature even for far targets (g composed with the
    // parametrization may have only a fractional-power endpoint behaviour
    // there), so their slots carry zero charge and the ladder sweeps are
    // always added for them.
    const long q = cache.order;
    flat_x_.resize(q * nelem);
    flat_y_.resize(q * nelem);
    flat_ax_.resize(q * nelem);
    flat_ay_.resize(q * nelem);
    for (long e = 0; e < nelem; ++e) {
      const ElementData& ed = cache.elems[static_cast<size_t>(e)];
      flat_x_.segment(q * e, q) = ed.main_grid.x;
      flat_y_.segment(q * e, q) = ed.main_grid.y;
      if (ed.corner_endpoint) {
        flat_ax_.segment(q * e, q).setZero();
        flat_ay_.segment(q * e, q).setZero();
      } else {
        flat_ax_.segment(q * e, q) = main_ax_[static_cast<size_t>(e)];
        flat_ay_.segment(q * e, q) = main_ay_[static_cast<size_t>(e)];
      }
    }
    wdx_.resize(q * nelem);
    wdy_.resize(q * nelem);
    wd2_.resize(q * nelem);
  }

  // Value of (K + 1/2) g at gamma(t) with t inside element `elem`.
  double operator()(int elem, double t) const {
    const Vec2 x = curve_->eval(t);
    const long q = cache_->order;
    wdx_ = flat_x_ - x.x();
    wdy_ = flat_y_ - x.y();
    wd2_ = wdx_.square() + wdy_.square();
    double acc =
        (wd2_ > 0.0).select((wdx_ * flat_ax_ + wdy_ * flat_ay_) / wd2_, 0.0).sum();
    const int n = static_cast<int>(cache_->elems.size());
    for (int e = 0; e < n; ++e) {
      const ElementData& ed = cache_->elems[static_cast<size_t>(e)];
      const bool special = (e == elem) || ed.corner_endpoint || detail::is_near(ed, x);
      if (!special) continue;
      if (!ed.corner_endpoint) {
        // Remove this element's plain far contribution (corner slots are
        // zero-charged already).
        const auto dxs = wdx_.segment(q * e, q);
        const auto dys = wdy_.segment(q * e, q);
        const auto d2s = wd2_.segment(q * e, q);
        acc -= (d2s > 0.0)
                   .select((dxs * main_ax_[static_cast<size_t>(e)] +
                            dys * main_ay_[static_cast<size_t>(e)]) /
                               d2s,
                           0.0)
                   .sum();
      }
      if (e == elem) {
        acc += containing(ed, static_cast<size_t>(e), t, x);
      } else {
        acc += sweep(ed.lad_lo, lad_lo_ax_[static_cast<size_t>(e)],
                     lad_lo_ay_[static_cast<size_t>(e)], x);
        acc += sweep(ed.lad_hi, lad_hi_ax_[static_cast<size_t>(e)],
                     lad_hi_ay_[static_cast<size_t>(e)], x);
      }
    }
    return -acc / (2.0 * M_PI) + 0.5 * g_(x);
  }

 private:
  static double sweep(const GridSample& g, const Eigen::ArrayXd& ax, const Eigen::ArrayXd& ay,
                      const Vec2& x) {
    const Eigen::ArrayXd dx = g.x - x.x();
    const Eigen::ArrayXd dy = g.y - x.y();
    const Eigen::ArrayXd d2 = dx.square() + dy.square();
    // Drop nodes that coincide with x bitwise (possible once elements shrink
    // towards the rounding limit); the kernel limit there is finite and the
    // node weight vanishes with the element.
    return (d2 > 0.0).select((dx * ax + dy * ay) / d2, 0.0).sum();
  }

  double containing(const ElementData& ed, size_t e, double t, const Vec2& x) const {
    // The integrand is analytic across y = x on a smooth arc (the normal is
    // orthogonal to the chord to first order), so the auxiliary plain grid
    // suffices; its nodes interlace the main grid, and an explicit guard
    // handles accidental coincidence with t.
    const GridSample& g = ed.aux;
    const double L = ed.hi - ed.lo;
    double acc = 0.0;
    for (long k = 0; k < g.size(); ++k) {
      const double dxk = g.x[k] - x.x(), dyk = g.y[k] - x.y();
      const double d2 = dxk * dxk + dyk * dyk;
      if (d2 == 0.0 || std::abs(g.t[k] - t) < 1e-9 * L) {
        // Replace the node by symmetric offsets evaluated on demand.
        const double eps = 1e-4 * L;
        double v = 0.0;
        int cnt = 0;
        for (double tau : {g.t[k] + eps, g.t[k] - eps}) {
          if (tau <= ed.lo || tau >= ed.hi) continue;
          const auto f = curve_->frame(tau);
          const double gv = g_(f.x);
          const Vec2 d = f.x - x;
          if (d.squaredNorm() == 0.0) continue;
          v += (d.x() * f.dx.y() - d.y() * f.dx.x()) * gv / d.squaredNorm();
          ++cnt;
        }
        if (cnt > 0) acc += g.w[k] * v / cnt;
        continue;
      }
      acc += (dxk * aux_ax_[e][k] + dyk * aux_ay_[e][k]) / d2;
    }
    return acc;
  }

  const NurbsCurve* curve_;
  const BoundaryMesh* mesh_;
  const LevelCache* cache_;
  std::function<double(const Vec2&)> g_;
  std::vector<Eigen::ArrayXd> main_ax_, main_ay_, lad_lo_ax_, lad_lo_ay_, lad_hi_ax_,
      lad_hi_ay_, aux_ax_, aux_ay_;
  Eigen::ArrayXd flat_x_, flat_y_, flat_ax_, flat_ay_;
  mutable Eigen::ArrayXd wdx_, wdy_, wd2_;  // per-call workspace (evaluation is serial)
};

// ---------------------------------------------------------------------------
// Right-hand sides, solve, energy.
// ---------------------------------------------------------------------------

// f_h[i] = int f(gamma(t)) R_i(t) |gamma'(t)| dt for a load given pointwise on
// the curve, integrated on the endpoint-graded ladder grids (double layer
// traces and single layer potentials have x log x layers at element
// endpoints, which plain Gauss would only resolve to ~1e-5).  Optionally
// reports the load values on the ladder grids (lo half then hi half).
inline Eigen::VectorXd assemble_rhs_pointwise(const NurbsCurve& curve, const BoundaryMesh& mesh,
                                              const LevelCache& cache,
                                              const std::function<double(int, double)>& f_hat,
                                              std::vector<Eigen::ArrayXd>* values_out = nullptr) {
  const KnotVector& kv = curve.kv;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(kv.num_basis());
  if (values_out) values_out->assign(cache.elems.size(), Eigen::ArrayXd());
  for (size_t e = 0; e < cache.elems.size(); ++e) {
    const ElementData& ed = cache.elems[e];
    const long nlo = ed.lad_lo.size();
    Eigen::ArrayXd fv(nlo + ed.lad_hi.size());
    for (long k = 0; k < nlo; ++k) fv[k] = f_hat(static_cast<int>(e), ed.lad_lo.t[k]);
    for (long k = 0; k < ed.lad_hi.size(); ++k)
      fv[nlo + k] = f_hat(static_cast<int>(e), ed.lad_hi.t[k]);
    if (values_out) (*values_out)[e] = fv;
    const long at = ed.first - kv.first_basis();
    rhs.segment(at, ed.nb) +=
        ed.lad_lo.basis * (fv.head(nlo) * ed.lad_lo.w * ed.lad_lo.speed).matrix();
    rhs.segment(at, ed.nb) +=
        ed.lad_hi.basis * (fv.tail(ed.lad_hi.size()) * ed.lad_hi.w * ed.lad_hi.speed).matrix();
  }
  return rhs;
}

// Direct load: f is a function of the position on the curve.
inline Eigen::VectorXd assemble_rhs_direct(const NurbsCurve& curve, const BoundaryMesh& mesh,
                                           const LevelCache& cache,
                                           const std::function<double(const Vec2&)>& f,
                                           std::vector<Eigen::ArrayXd>* values_out = nullptr) {
  auto f_hat = [&](int, double t) { return f(curve.eval(t)); };
  return assemble_rhs_pointwise(curve, mesh, cache, f_hat, values_out);
}

// Dirichlet data: f = (K + 1/2) g via the double layer trace.
inline Eigen::VectorXd assemble_rhs_dirichlet(const NurbsCurve& curve, const BoundaryMesh& mesh,
                                              const LevelCache& cache,
                                              const std::function<double(const Vec2&)>& g,
                                              std::vector<Eigen::ArrayXd>* values_out = nullptr) {
  const DoubleLayerTrace K(curve, mesh, cache, g);
  auto f_hat = [&](int e, double t) { return K(e, t); };
  return assemble_rhs_pointwise(curve, mesh, cache, f_hat, values_out);
}

// Solves A x = b for symmetric positive definite A by Cholesky factorization;
// verifies symmetry up front and the relative residual afterwards.
//
// The system is symmetrically scaled by the inverse square roots of the
// diagonal before factorization (solve (S A S) y = S b, x = S y with
// S = diag(A_ii^{-1/2})).  The solution is unchanged in exact arithmetic, but
// on strongly graded meshes the diagonal of the weakly-singular Galerkin
// matrix spans many orders of magnitude (entries scale like h^2 log h), and
// the unscaled factorization loses all accuracy once the span approaches
// 1/eps.  Scaling removes the basis-size disparity and leaves a condition
// number that grows only mildly with the grading depth.
inline Eigen::VectorXd solve_spd(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  if (A.rows() != A.cols() || A.rows() != b.size())
    throw std::invalid_argument("solve_spd: dimension mismatch");
  const double scale = A.cwiseAbs().maxCoeff();
  if (!((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(scale, 1e-300)))
    throw std::invalid_argument("solve_spd: matrix is not symmetric");
  if (!(A.diagonal().minCoeff() > 0.0))
    throw std::runtime_error("solve_spd: matrix is not positive definite");
  const Eigen::ArrayXd s = A.diagonal().array().rsqrt();
  const Eigen::MatrixXd As = s.matrix().asDiagonal() * A * s.matrix().asDiagonal();
  const Eigen::VectorXd bs = b.array() * s;
  Eigen::LLT<Eigen::MatrixXd> llt(As);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("solve_spd: matrix is not positive definite");
  const Eigen::VectorXd y = llt.solve(bs);
  const double rel = (As * y - bs).norm() / std::max(bs.norm(), 1e-300);
  if (!(rel <= 1e-8))
    throw std::runtime_error("solve_spd: residual check failed (relative residual " +
                             std::to_string(rel) + ")");
  return (y.array() * s).matrix();
}

// Squared energy norm |||phi_h|||^2 = <V phi_h, phi_h> = c^T V c.
inline double energy_norm_sq(const Eigen::MatrixXd& V, const Eigen::VectorXd& c) {
  return c.dot(V * c);
}

// Largest relative violation of Galerkin orthogonality: for every trial
// function, the residual integrated against R_i (on the ladder grids, in the
// layout produced by assemble_rhs_pointwise) must vanish up to the
// consistency of the assembly and pointwise-evaluation quadratures.
inline double orthogonality_surrogate(const NurbsCurve& curve, const LevelCache& cache,
                                      const std::vector<Eigen::ArrayXd>& f_hat_values,
                                      const std::vector<Eigen::ArrayXd>& vphi_values) {
  const KnotVector& kv = curve.kv;
  Eigen::VectorXd orth = Eigen::VectorXd::Zero(kv.num_basis());
  Eigen::VectorXd scale = Eigen::VectorXd::Zero(kv.num_basis());
  for (size_t e = 0; e < cache.elems.size(); ++e) {
    const ElementData& ed = cache.elems[e];
    const long at = ed.first - kv.first_basis();
    const long nlo = ed.lad_lo.size();
    const Eigen::ArrayXd r = f_hat_values[e] - vphi_values[e];
    const Eigen::ArrayXd s = f_hat_values[e].abs() + vphi_values[e].abs();
    orth.segment(at, ed.nb) +=
        ed.lad_lo.basis * (r.head(nlo) * ed.lad_lo.w * ed.lad_lo.speed).matrix();
    orth.segment(at, ed.nb) +=
        ed.lad_hi.basis * (r.tail(ed.lad_hi.size()) * ed.lad_hi.w * ed.lad_hi.speed).matrix();
    scale.segment(at, ed.nb) +=
        ed.lad_lo.basis * (s.head(nlo) * ed.lad_lo.w * ed.lad_lo.speed).matrix();
    scale.segment(at, ed.nb) +=
        ed.lad_hi.basis * (s.tail(ed.lad_hi.size()) * ed.lad_hi.w * ed.lad_hi.speed).matrix();
  }
  double worst = 0.0;
  for (long i = 0; i < orth.size(); ++i)
    worst = std::max(worst, std::abs(orth[i]) / std::max(scale[i], 1e-300));
  return worst;
}

}  // namespace igabem
