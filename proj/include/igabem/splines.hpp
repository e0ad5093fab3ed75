#pragma once

// B-spline and NURBS machinery on a parameter interval [a, b]: periodic
// (closed curve) and clamped (open curve) knot vectors, basis evaluation with
// one-sided limits, rational curve frames, and knot insertion that
// re-expresses coefficient rows in the refined basis.
//
// Index conventions.  Knots carry integer indices with B_{i,p} supported on
// [t_{i-1}, t_{i+p}].  Closed topology stores one period t_1..t_N with values
// in (a, b] and extends by t_{i+N} = t_i + (b - a); open topology stores
// t_0..t_N with clamped ends (multiplicity p+1 at both a and b).  The basis
// functions spanning the trial space on [a, b) are indexed
//   closed:  i = 1-p, ..., N - #b + 1     (#b = multiplicity of b)
//   open:    i = 1, ..., N - p
// and coefficient/weight storage follows: closed coefficient rows hold one
// period (size N, index i mod N), open rows hold one entry per basis function.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace igabem {

using Vec2 = Eigen::Vector2d;

// Degrees are small in practice; a fixed cap keeps basis evaluation
// allocation-free.
constexpr int kMaxDegree = 7;

enum class Topology { Closed, Open };
enum class Side { Left, Right };

namespace detail {

inline long floor_div(long x, long n) {
  return (x >= 0) ? x / n : -((-x + n - 1) / n);
}

}  // namespace detail

struct KnotVector {
  Topology topology = Topology::Closed;
  int degree = 0;
  double a = 0.0;
  double b = 1.0;
  std::vector<double> knots;

  // Number of stored knots N (closed: period length; open: index range 0..N).
  long count() const {
    return topology == Topology::Closed ? static_cast<long>(knots.size())
                                        : static_cast<long>(knots.size()) - 1;
  }

  // Extended knot accessor t_i.  Closed topology admits any integer index via
  // periodic extension; open topology is restricted to the stored range.
  double knot(long i) const {
    if (topology == Topology::Closed) {
      const long n = count();
      const long q = detail::floor_div(i - 1, n);
      return knots[static_cast<size_t>(i - 1 - q * n)] + static_cast<double>(q) * (b - a);
    }
    if (i < 0 || i > count()) throw std::out_of_range("KnotVector: knot index out of range");
    return knots[static_cast<size_t>(i)];
  }

  // Multiplicity of the parameter value `z` among the stored knots
  // (bit-exact comparison; refinement only ever inserts exact copies).
  int multiplicity(double z) const {
    int m = 0;
    for (double t : knots) m += (t == z) ? 1 : 0;
    return m;
  }

  int end_multiplicity() const { return multiplicity(b); }

  long first_basis() const { return topology == Topology::Closed ? 1 - degree : 1; }
  long last_basis() const {
    return topology == Topology::Closed ? count() - end_multiplicity() + 1 : count() - degree;
  }
  long num_basis() const { return last_basis() - first_basis() + 1; }

  void validate() const {
    if (!(a < b)) throw std::invalid_argument("KnotVector: requires a < b");
    if (degree < 0 || degree > kMaxDegree)
      throw std::invalid_argument("KnotVector: degree out of range [0, " +
                                  std::to_string(kMaxDegree) + "]");
    if (!std::is_sorted(knots.begin(), knots.end()))
      throw std::invalid_argument("KnotVector: knots must be nondecreasing");
    const long n = count();
    if (topology == Topology::Closed) {
      if (n < degree + 2) throw std::invalid_argument("KnotVector: too few knots for one period");
      if (knots.front() <= a || knots.back() != b)
        throw std::invalid_argument("KnotVector: closed period must lie in (a, b] and end at b");
    } else {
      if (static_cast<long>(knots.size()) < 2 * (degree + 1))
        throw std::invalid_argument("KnotVector: too few knots for clamped ends");
      if (knots.front() != a || knots.back() != b)
        throw std::invalid_argument("KnotVector: open knots must start at a and end at b");
      if (knots[static_cast<size_t>(degree)] != a ||
          knots[static_cast<size_t>(knots.size() - 1 - degree)] != b)
        throw std::invalid_argument("KnotVector: open ends must have multiplicity degree + 1");
    }
    for (size_t r = 0; r < knots.size();) {
      size_t s = r;
      while (s < knots.size() && knots[s] == knots[r]) ++s;
      if (static_cast<int>(s - r) > degree + 1)
        throw std::invalid_argument("KnotVector: knot multiplicity exceeds degree + 1");
      r = s;
    }
  }
};

// Locates the span index k such that t lies in [t_k, t_{k+1}) (Side::Right)
// or (t_k, t_{k+1}] (Side::Left); the returned span is never empty.  Closed
// topology reduces t to [a, b) first (b and a are the same point).  Open
// topology clamps to spans with full knot support, i.e. k in [p, N-p-1]; for
// clamped knot vectors this covers all of [a, b] and realizes the one-sided
// limits at the ends.
inline long find_span(const KnotVector& kv, double t, Side side = Side::Right) {
  const long n = kv.count();
  if (kv.topology == Topology::Closed) {
    if (t < kv.a || t > kv.b) throw std::out_of_range("find_span: parameter outside [a, b]");
    if (side == Side::Right) {
      const double tr = (t == kv.b) ? kv.a : t;
      return std::upper_bound(kv.knots.begin(), kv.knots.end(), tr) - kv.knots.begin();
    }
    const double tl = (t == kv.a) ? kv.b : t;
    return std::lower_bound(kv.knots.begin(), kv.knots.end(), tl) - kv.knots.begin();
  }
  if (t < kv.a || t > kv.b) throw std::out_of_range("find_span: parameter outside [a, b]");
  long k;
  if (side == Side::Right) {
    k = std::upper_bound(kv.knots.begin(), kv.knots.end(), t) - kv.knots.begin() - 1;
  } else {
    k = std::lower_bound(kv.knots.begin(), kv.knots.end(), t) - kv.knots.begin() - 1;
  }
  return std::clamp(k, static_cast<long>(kv.degree), n - kv.degree - 1);
}

// Values and first derivatives of the degree-p B-splines that are active on
// the span containing t: indices i = first, ..., first + degree.
struct SpanBasis {
  long span = 0;
  long first = 0;
  int count = 0;
  std::array<double, kMaxDegree + 1> value{};
  std::array<double, kMaxDegree + 1> deriv{};
};

inline SpanBasis bspline_basis_at(const KnotVector& kv, double t, Side side = Side::Right) {
  const int p = kv.degree;
  const long k = find_span(kv, t, side);
  double te = t;
  if (kv.topology == Topology::Closed) {
    // Reduce the evaluation point consistently with the span choice.
    if (side == Side::Right && t == kv.b) te = kv.a;
    if (side == Side::Left && t == kv.a) te = kv.b;
  }

  SpanBasis out;
  out.span = k;
  out.first = k + 1 - p;
  out.count = p + 1;

  // Triangular recurrence: cur[r] = B_{k+1-d+r, d}(te) for r = 0..d, with the
  // ramp beta_{i,d} = (te - t_i) / (t_{i+d} - t_i) (zero on zero-width spans).
  std::array<double, kMaxDegree + 1> prev{}, cur{};
  cur[0] = 1.0;
  auto beta = [&](long i, int d) {
    const double lo = kv.knot(i), hi = kv.knot(i + d);
    return (hi > lo) ? (te - lo) / (hi - lo) : 0.0;
  };
  for (int d = 1; d <= p; ++d) {
    prev = cur;
    if (d == p) {
      // Derivatives come from the degree p-1 row:
      //   B'_{i,p} = p [ B_{i,p-1} / (t_{i+p-1} - t_{i-1}) - B_{i+1,p-1} / (t_{i+p} - t_i) ].
      for (int r = 0; r <= p; ++r) {
        const long i = k + 1 - p + r;
        double left = 0.0, right = 0.0;
        if (r >= 1) {
          const double den = kv.knot(i + p - 1) - kv.knot(i - 1);
          if (den > 0.0) left = prev[static_cast<size_t>(r - 1)] / den;
        }
        if (r <= p - 1) {
          const double den = kv.knot(i + p) - kv.knot(i);
          if (den > 0.0) right = prev[static_cast<size_t>(r)] / den;
        }
        out.deriv[static_cast<size_t>(r)] = p * (left - right);
      }
    }
    for (int r = d; r >= 0; --r) {
      const long i = k + 1 - d + r;
      const double lo = (r >= 1) ? beta(i - 1, d) * prev[static_cast<size_t>(r - 1)] : 0.0;
      const double hi = (r <= d - 1) ? (1.0 - beta(i, d)) * prev[static_cast<size_t>(r)] : 0.0;
      cur[static_cast<size_t>(r)] = lo + hi;
    }
  }
  out.value = cur;
  return out;
}

// Single B-spline value B_{i,p}(t); zero when i is not active at t.
inline double bspline_eval(const KnotVector& kv, long i, double t, Side side = Side::Right) {
  const SpanBasis sb = bspline_basis_at(kv, t, side);
  if (i < sb.first || i >= sb.first + sb.count) return 0.0;
  return sb.value[static_cast<size_t>(i - sb.first)];
}

// Weight lookup for basis index i.  Closed rows store one period; open rows
// store one entry per basis function.
inline double coeff_at(const KnotVector& kv, const std::vector<double>& row, long i) {
  if (kv.topology == Topology::Closed) {
    const long n = kv.count();
    if (static_cast<long>(row.size()) != n)
      throw std::invalid_argument("coeff_at: closed coefficient row must have one period");
    const long r = i - 1 - detail::floor_div(i - 1, n) * n;
    return row[static_cast<size_t>(r)];
  }
  if (i < kv.first_basis() || i > kv.last_basis())
    throw std::out_of_range("coeff_at: basis index out of range");
  return row[static_cast<size_t>(i - kv.first_basis())];
}

// NURBS basis values R_i = w_i B_i / sum_j w_j B_j (and derivatives) for the
// active indices at t.
inline SpanBasis nurbs_basis_at(const KnotVector& kv, const std::vector<double>& weights,
                                double t, Side side = Side::Right) {
  SpanBasis sb = bspline_basis_at(kv, t, side);
  double den = 0.0, dden = 0.0;
  std::array<double, kMaxDegree + 1> w{};
  for (int r = 0; r < sb.count; ++r) {
    w[static_cast<size_t>(r)] = coeff_at(kv, weights, sb.first + r);
    den += w[static_cast<size_t>(r)] * sb.value[static_cast<size_t>(r)];
    dden += w[static_cast<size_t>(r)] * sb.deriv[static_cast<size_t>(r)];
  }
  if (!(den > 0.0)) throw std::runtime_error("nurbs_basis_at: nonpositive weight denominator");
  for (int r = 0; r < sb.count; ++r) {
    const double num = w[static_cast<size_t>(r)] * sb.value[static_cast<size_t>(r)];
    const double dnum = w[static_cast<size_t>(r)] * sb.deriv[static_cast<size_t>(r)];
    sb.value[static_cast<size_t>(r)] = num / den;
    sb.deriv[static_cast<size_t>(r)] = (dnum * den - num * dden) / (den * den);
  }
  return sb;
}

// Single NURBS basis value R_{i,p}(t); zero when i is not active at t.
inline double nurbs_eval(const KnotVector& kv, const std::vector<double>& weights, long i,
                         double t, Side side = Side::Right) {
  const SpanBasis sb = nurbs_basis_at(kv, weights, t, side);
  if (i < sb.first || i >= sb.first + sb.count) return 0.0;
  return sb.value[static_cast<size_t>(i - sb.first)];
}

// Rational curve gamma(t) = sum_i C_i R_i(t) with positive weights.
struct NurbsCurve {
  KnotVector kv;
  std::vector<double> weights;
  std::vector<Vec2> controls;

  // Position, tangent, parametric speed and outward unit normal (for a
  // counterclockwise closed curve the normal points out of the domain).
  struct Frame {
    Vec2 x;
    Vec2 dx;
    double speed = 0.0;
    Vec2 normal;
  };

  long storage_size() const {
    return kv.topology == Topology::Closed ? kv.count() : kv.num_basis();
  }

  void validate() const {
    kv.validate();
    if (static_cast<long>(weights.size()) != storage_size() ||
        static_cast<long>(controls.size()) != storage_size())
      throw std::invalid_argument("NurbsCurve: weight/control count must match the knot vector");
    for (double w : weights)
      if (!(w > 0.0)) throw std::invalid_argument("NurbsCurve: weights must be positive");
  }

  Vec2 control_at(long i) const {
    if (kv.topology == Topology::Closed) {
      const long n = kv.count();
      const long r = i - 1 - detail::floor_div(i - 1, n) * n;
      return controls[static_cast<size_t>(r)];
    }
    if (i < kv.first_basis() || i > kv.last_basis())
      throw std::out_of_range("NurbsCurve: basis index out of range");
    return controls[static_cast<size_t>(i - kv.first_basis())];
  }

  Vec2 eval(double t, Side side = Side::Right) const {
    const SpanBasis sb = nurbs_basis_at(kv, weights, t, side);
    Vec2 x = Vec2::Zero();
    for (int r = 0; r < sb.count; ++r)
      x += sb.value[static_cast<size_t>(r)] * control_at(sb.first + r);
    return x;
  }

  Frame frame(double t, Side side = Side::Right) const {
    const SpanBasis sb = nurbs_basis_at(kv, weights, t, side);
    Frame f;
    f.x = Vec2::Zero();
    f.dx = Vec2::Zero();
    for (int r = 0; r < sb.count; ++r) {
      const Vec2 c = control_at(sb.first + r);
      f.x += sb.value[static_cast<size_t>(r)] * c;
      f.dx += sb.deriv[static_cast<size_t>(r)] * c;
    }
    f.speed = f.dx.norm();
    if (!(f.speed > 1e-14))
      throw std::runtime_error("NurbsCurve: degenerate parametrization (zero tangent)");
    f.normal = Vec2(f.dx.y(), -f.dx.x()) / f.speed;
    return f;
  }
};

namespace detail {

// Finite window of an extended knot sequence together with coefficient rows,
// supporting single-knot insertion.  knots[r] = t_{k0 + r}; row slot j holds
// the coefficient of the basis function with support [t_{k0+j}, t_{k0+j+p+1}]
// (basis index i = k0 + j + 1), so rows always have knots.size() - p - 1
// entries.
struct CoeffWindow {
  long k0 = 0;
  int degree = 0;
  std::vector<double> knots;
  std::vector<std::vector<double>> rows;

  void insert(double tp) {
    const int p = degree;
    const long size = static_cast<long>(knots.size());
    if (tp < knots.front() || tp >= knots.back())
      throw std::invalid_argument("CoeffWindow: insertion value outside window");
    const long pos =
        std::upper_bound(knots.begin(), knots.end(), tp) - knots.begin() - 1;
    if (pos < p || pos + p >= size)
      throw std::invalid_argument("CoeffWindow: insertion too close to window edge");
    for (auto& row : rows) {
      std::vector<double> next(row.size() + 1);
      for (long j = 0; j < static_cast<long>(next.size()); ++j) {
        if (j <= pos - p) {
          next[static_cast<size_t>(j)] = row[static_cast<size_t>(j)];
        } else if (j <= pos) {
          const double lo = knots[static_cast<size_t>(j)], hi = knots[static_cast<size_t>(j + p)];
          const double beta = (hi > lo) ? (tp - lo) / (hi - lo) : 0.0;
          next[static_cast<size_t>(j)] = beta * row[static_cast<size_t>(j)] +
                                         (1.0 - beta) * row[static_cast<size_t>(j - 1)];
        } else {
          next[static_cast<size_t>(j)] = row[static_cast<size_t>(j - 1)];
        }
      }
      row = std::move(next);
    }
    knots.insert(knots.begin() + pos + 1, tp);
  }
};

}  // namespace detail

// Inserts the knot tp into kv and re-expresses the given coefficient rows in
// the refined basis.  Closed topology takes period-sized rows (weights and
// weighted control coordinates are of this kind and stay periodic); open
// topology takes one entry per basis function.  Geometry and every spline
// expressed through the rows are preserved exactly; the refined weights are
// convex combinations of the old ones.  Throws if tp already has multiplicity
// degree + 1.
inline KnotVector knot_insert(const KnotVector& kv, std::vector<std::vector<double>>& rows,
                              double tp) {
  const int p = kv.degree;
  const long n = kv.count();
  if (kv.topology == Topology::Closed) {
    if (!(tp > kv.a) || !(tp <= kv.b))
      throw std::invalid_argument("knot_insert: value outside (a, b]");
  } else {
    if (!(tp > kv.a) || !(tp < kv.b))
      throw std::invalid_argument("knot_insert: value outside (a, b)");
  }
  if (kv.multiplicity(tp) >= p + 1)
    throw std::invalid_argument("knot_insert: multiplicity would exceed degree + 1");
  for (const auto& row : rows)
    if (static_cast<long>(row.size()) != (kv.topology == Topology::Closed ? n : kv.num_basis()))
      throw std::invalid_argument("knot_insert: coefficient row has wrong size");

  KnotVector out = kv;
  if (kv.topology == Topology::Open) {
    detail::CoeffWindow win;
    win.k0 = 0;
    win.degree = p;
    win.knots = kv.knots;
    win.rows = rows;
    win.insert(tp);
    out.knots = std::move(win.knots);
    rows = std::move(win.rows);
    out.validate();
    return out;
  }

  // Closed topology: materialize roughly three periods of the extended
  // sequence, insert tp and its periodic neighbours, and read one period
  // back off.  Rows are initialized periodically and stay periodic.
  const double period = kv.b - kv.a;
  detail::CoeffWindow win;
  win.degree = p;
  win.k0 = -n - p - 3;
  const long hi = 2 * n + p + 3;
  for (long i = win.k0; i <= hi; ++i) win.knots.push_back(kv.knot(i));
  const long nslots = static_cast<long>(win.knots.size()) - p - 1;
  win.rows.assign(rows.size(), std::vector<double>(static_cast<size_t>(nslots)));
  for (size_t m = 0; m < rows.size(); ++m)
    for (long j = 0; j < nslots; ++j) {
      const long i = win.k0 + j + 1;
      const long r = i - 1 - detail::floor_div(i - 1, n) * n;
      win.rows[m][static_cast<size_t>(j)] = rows[m][static_cast<size_t>(r)];
    }
  win.insert(tp - period);
  win.insert(tp);
  win.insert(tp + period);

  // Extract the new period: the values in (a, b], the first of which carries
  // the new global index 1; the basis of index i then sits in slot i + r1 - 2.
  long r1 = -1;
  for (long r = 0; r < static_cast<long>(win.knots.size()); ++r)
    if (win.knots[static_cast<size_t>(r)] > kv.a) {
      r1 = r;
      break;
    }
  out.knots.assign(win.knots.begin() + r1, win.knots.begin() + r1 + n + 1);
  for (size_t m = 0; m < rows.size(); ++m) {
    rows[m].resize(static_cast<size_t>(n + 1));
    for (long i = 1; i <= n + 1; ++i)
      rows[m][static_cast<size_t>(i - 1)] = win.rows[m][static_cast<size_t>(i + r1 - 2)];
  }
  out.validate();
  return out;
}

// Inserts tp, re-expressing rows of free basis coefficients (one entry per
// basis function of the trial space).  This is the nestedness workhorse: a
// spline with the given coefficients evaluates identically before and after.
inline KnotVector knot_insert_dofs(const KnotVector& kv, std::vector<std::vector<double>>& rows,
                                   double tp) {
  if (kv.topology == Topology::Open) return knot_insert(kv, rows, tp);

  const int p = kv.degree;
  const long n = kv.count();
  if (!(tp > kv.a) || !(tp <= kv.b))
    throw std::invalid_argument("knot_insert_dofs: value outside (a, b]");
  if (kv.multiplicity(tp) >= p + 1)
    throw std::invalid_argument("knot_insert_dofs: multiplicity would exceed degree + 1");
  for (const auto& row : rows)
    if (static_cast<long>(row.size()) != kv.num_basis())
      throw std::invalid_argument("knot_insert_dofs: coefficient row has wrong size");

  const double period = kv.b - kv.a;
  detail::CoeffWindow win;
  win.degree = p;
  win.k0 = -n - p - 3;
  const long hi = 2 * n + p + 3;
  for (long i = win.k0; i <= hi; ++i) win.knots.push_back(kv.knot(i));
  const long nslots = static_cast<long>(win.knots.size()) - p - 1;
  // Zero-pad outside the basis window: those functions vanish on [a, b).
  win.rows.assign(rows.size(), std::vector<double>(static_cast<size_t>(nslots), 0.0));
  for (size_t m = 0; m < rows.size(); ++m)
    for (long i = kv.first_basis(); i <= kv.last_basis(); ++i)
      win.rows[m][static_cast<size_t>(i - 1 - win.k0)] =
          rows[m][static_cast<size_t>(i - kv.first_basis())];
  win.insert(tp - period);
  win.insert(tp);
  win.insert(tp + period);

  long r1 = -1;
  for (long r = 0; r < static_cast<long>(win.knots.size()); ++r)
    if (win.knots[static_cast<size_t>(r)] > kv.a) {
      r1 = r;
      break;
    }
  KnotVector out = kv;
  out.knots.assign(win.knots.begin() + r1, win.knots.begin() + r1 + n + 1);
  out.validate();
  // Slot r1 holds the refined knot of global index 1, so the basis with index
  // i sits in slot i + r1 - 2 (its support starts at knot index i - 1).
  for (size_t m = 0; m < rows.size(); ++m) {
    std::vector<double> fine(static_cast<size_t>(out.num_basis()));
    for (long i = out.first_basis(); i <= out.last_basis(); ++i)
      fine[static_cast<size_t>(i - out.first_basis())] =
          win.rows[m][static_cast<size_t>(i + r1 - 2)];
    rows[m] = std::move(fine);
  }
  return out;
}

// Curve-level insertion: updates weights and control points via the
// homogeneous rows (w, w x, w y).
inline NurbsCurve knot_insert(const NurbsCurve& c, double tp) {
  std::vector<std::vector<double>> rows(3);
  const size_t m = c.weights.size();
  for (size_t r = 0; r < m; ++r) {
    rows[0].push_back(c.weights[r]);
    rows[1].push_back(c.weights[r] * c.controls[r].x());
    rows[2].push_back(c.weights[r] * c.controls[r].y());
  }
  NurbsCurve out;
  out.kv = knot_insert(c.kv, rows, tp);
  const size_t mm = rows[0].size();
  out.weights.resize(mm);
  out.controls.resize(mm);
  for (size_t r = 0; r < mm; ++r) {
    out.weights[r] = rows[0][r];
    out.controls[r] = Vec2(rows[1][r] / rows[0][r], rows[2][r] / rows[0][r]);
  }
  out.validate();
  return out;
}

}  // namespace igabem
