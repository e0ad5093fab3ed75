#pragma once

// Quadrature rules for smooth and logarithmically singular integrands on
// intervals and squares.  Everything here is deterministic: the same order
// always yields bit-identical nodes and weights.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace igabem {

// Nodes and weights of a positive quadrature rule on [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  int size() const { return static_cast<int>(nodes.size()); }

  // Applies the rule to a callable f(t).
  template <class F>
  double apply(F&& f) const {
    double sum = 0.0;
    for (int k = 0; k < size(); ++k) sum += weights[k] * f(nodes[k]);
    return sum;
  }
};

namespace detail {

// Evaluates the Legendre polynomial P_n and its derivative at x in [-1, 1]
// via the three-term recurrence.
inline void legendre_value_deriv(int n, double x, double& p, double& dp) {
  double p0 = 1.0, p1 = x;
  if (n == 0) {
    p = p0;
    dp = 0.0;
    return;
  }
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  p = p1;
  dp = n * (x * p1 - p0) / (x * x - 1.0);
}

inline QuadratureRule build_gauss_legendre(int n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  // Newton iteration from the Chebyshev-type initial guesses; the roots are
  // symmetric, so k runs over the lower half and mirrors.
  for (int k = 0; k < (n + 1) / 2; ++k) {
    double x = std::cos(M_PI * (k + 0.75) / (n + 0.5));
    double p = 0.0, dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      legendre_value_deriv(n, x, p, dp);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    legendre_value_deriv(n, x, p, dp);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // Map from [-1, 1] to [0, 1].
    rule.nodes[k] = 0.5 * (1.0 + x);
    rule.weights[k] = 0.5 * w;
    rule.nodes[n - 1 - k] = 0.5 * (1.0 - x);
    rule.weights[n - 1 - k] = 0.5 * w;
  }
  // Lower-half roots mapped above are the larger nodes; restore ascending
  // order for predictable output.
  for (int k = 0; k < n / 2; ++k) {
    std::swap(rule.nodes[k], rule.nodes[n - 1 - k]);
    std::swap(rule.weights[k], rule.weights[n - 1 - k]);
  }
  return rule;
}

inline QuadratureRule build_gauss_log(int n) {
  // Orthogonal polynomials for the weight -log(t) on [0, 1], constructed via
  // the modified Chebyshev algorithm with monic shifted-Legendre modified
  // moments, then nodes/weights from the Jacobi matrix.
  const int m = 2 * n;
  std::vector<double> nu(m);  // modified moments against monic shifted Legendre
  double binom = 1.0;         // binomial(2k, k)
  for (int k = 0; k < m; ++k) {
    const double mom = (k == 0) ? 1.0 : ((k % 2 == 0 ? 1.0 : -1.0) / (static_cast<double>(k) * (k + 1.0)));
    nu[k] = mom / binom;
    binom *= (2.0 * (k + 1.0) - 1.0) * 2.0 / (k + 1.0);  // C(2k+2,k+1) = C(2k,k)*2*(2k+1)/(k+1)
  }
  // Monic recurrence coefficients of shifted Legendre on [0, 1]:
  //   pi_{k+1} = (x - a_k) pi_k - b_k pi_{k-1},  a_k = 1/2,  b_k = k^2 / (4 (4k^2 - 1)).
  auto rec_a = [](int) { return 0.5; };
  auto rec_b = [](int k) {
    const double kk = static_cast<double>(k) * k;
    return kk / (4.0 * (4.0 * kk - 1.0));
  };

  std::vector<double> alpha(n), beta(n);
  // Wheeler recurrence on two sliding sigma rows indexed by l = 0..2n-1.
  std::vector<double> sig_prev(m, 0.0), sig_cur(m, 0.0), sig_next(m, 0.0);
  for (int l = 0; l < m; ++l) sig_cur[l] = nu[l];
  alpha[0] = rec_a(0) + nu[1] / nu[0];
  beta[0] = nu[0];
  for (int k = 1; k < n; ++k) {
    std::fill(sig_next.begin(), sig_next.end(), 0.0);
    for (int l = k; l <= m - k - 1; ++l) {
      sig_next[l] = sig_cur[l + 1] - (alpha[k - 1] - rec_a(l)) * sig_cur[l] -
                    beta[k - 1] * sig_prev[l] + rec_b(l) * sig_cur[l - 1];
    }
    alpha[k] = rec_a(k) + sig_next[k + 1] / sig_next[k] - sig_cur[k] / sig_cur[k - 1];
    beta[k] = sig_next[k] / sig_cur[k - 1];
    std::swap(sig_prev, sig_cur);
    std::swap(sig_cur, sig_next);
  }

  // Golub-Welsch: eigen-decompose the symmetric tridiagonal Jacobi matrix.
  Eigen::VectorXd diag(n), subdiag(n > 1 ? n - 1 : 0);
  for (int k = 0; k < n; ++k) diag[k] = alpha[k];
  for (int k = 1; k < n; ++k) subdiag[k - 1] = std::sqrt(beta[k]);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  if (n == 1) {
    rule.nodes[0] = alpha[0];
    rule.weights[0] = beta[0];
    return rule;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, subdiag, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw std::runtime_error("gauss_log: eigensolve failed");
  for (int k = 0; k < n; ++k) {
    rule.nodes[k] = es.eigenvalues()[k];
    const double q0 = es.eigenvectors()(0, k);
    rule.weights[k] = beta[0] * q0 * q0;
  }
  return rule;
}

}  // namespace detail

// Gauss-Legendre rule with n points on [0, 1]; exact for polynomials of
// degree 2n-1.  Supported range: 1 <= n <= 64.  Rules are cached, and the
// cache is not synchronized -- the library is single-threaded by design.
inline const QuadratureRule& gauss_legendre(int n) {
  if (n < 1 || n > 64) throw std::invalid_argument("gauss_legendre: order out of range [1, 64]");
  static std::unordered_map<int, QuadratureRule> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::build_gauss_legendre(n)).first;
  return it->second;
}

// Gauss rule with n points for integrals of the form
//   int_0^1 f(t) * (-log t) dt  ~=  sum_k w_k f(x_k),
// exact for polynomial f of degree 2n-1.  Supported range: 1 <= n <= 32.
inline const QuadratureRule& gauss_log(int n) {
  if (n < 1 || n > 32) throw std::invalid_argument("gauss_log: order out of range [1, 32]");
  static std::unordered_map<int, QuadratureRule> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::build_gauss_log(n)).first;
  return it->second;
}

// Plain Gauss approximation of int_a^b f(t) dt.
template <class F>
double integrate(F&& f, double a, double b, int n = 16) {
  if (!(b > a)) throw std::invalid_argument("integrate: requires a < b");
  const QuadratureRule& g = gauss_legendre(n);
  const double h = b - a;
  double sum = 0.0;
  for (int k = 0; k < g.size(); ++k) sum += g.weights[k] * f(a + h * g.nodes[k]);
  return h * sum;
}

// Approximates int_a^b f(t) * log|t - t0| dt for t0 inside [a, b] by splitting
// at t0 and treating each side with the log-weighted rule:
//   int_0^h f(t0 +- u) log u du = h log(h) * Gauss(f) - h * GaussLog(f).
template <class F>
double log_single_integral(F&& f, double a, double b, double t0, int n = 16) {
  if (!(b > a)) throw std::invalid_argument("log_single_integral: requires a < b");
  if (t0 < a || t0 > b) throw std::invalid_argument("log_single_integral: t0 outside [a, b]");
  const QuadratureRule& g = gauss_legendre(n);
  const QuadratureRule& gl = gauss_log(n <= 32 ? n : 32);
  double sum = 0.0;
  for (int side = 0; side < 2; ++side) {
    const double h = (side == 0) ? t0 - a : b - t0;
    if (h <= 0.0) continue;
    const double dir = (side == 0) ? -1.0 : 1.0;
    double smooth = 0.0, logpart = 0.0;
    for (int k = 0; k < g.size(); ++k) smooth += g.weights[k] * f(t0 + dir * h * g.nodes[k]);
    for (int k = 0; k < gl.size(); ++k) logpart += gl.weights[k] * f(t0 + dir * h * gl.nodes[k]);
    sum += h * std::log(h) * smooth - h * logpart;
  }
  return sum;
}

// Approximates the weakly singular double integral
//   int_a^b int_a^b G(s, t) * log|s - t| ds dt.
// After scaling to the unit square, each triangle {0 <= t <= s <= 1} is
// parametrized as (s, t) = (u, u(1-v)) with Jacobian u, which factorizes the
// kernel as log|s - t| = log u + log v; the log u and log v parts are handled
// by the log-weighted rule in the respective variable.
template <class G>
double log_double_integral(G&& g, double a, double b, int n = 16) {
  if (!(b > a)) throw std::invalid_argument("log_double_integral: requires a < b");
  const double len = b - a;
  const QuadratureRule& gq = gauss_legendre(n);
  const QuadratureRule& gl = gauss_log(n <= 32 ? n : 32);
  // H(u, v) = u * [G~(u, u(1-v)) + G~(u(1-v), u)] combines the two triangles.
  auto h = [&](double u, double v) {
    const double x = a + len * u;
    const double y = a + len * u * (1.0 - v);
    return u * (g(x, y) + g(y, x));
  };
  double plain = 0.0, log_u = 0.0, log_v = 0.0;
  for (int i = 0; i < gq.size(); ++i)
    for (int j = 0; j < gq.size(); ++j)
      plain += gq.weights[i] * gq.weights[j] * h(gq.nodes[i], gq.nodes[j]);
  for (int i = 0; i < gl.size(); ++i)
    for (int j = 0; j < gq.size(); ++j)
      log_u += gl.weights[i] * gq.weights[j] * h(gl.nodes[i], gq.nodes[j]);
  for (int i = 0; i < gq.size(); ++i)
    for (int j = 0; j < gl.size(); ++j)
      log_v += gq.weights[i] * gl.weights[j] * h(gq.nodes[i], gl.nodes[j]);
  return len * len * (std::log(len) * plain - log_u - log_v);
}

}  // namespace igabem
