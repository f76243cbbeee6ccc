#pragma once

// Deterministic 1-D integration building blocks:
//   * generalized Gauss-Laguerre rules (Golub-Welsch on the Jacobi matrix),
//     packaged as expectation rules against normalized gamma densities, and
//   * an adaptive Simpson integrator with Richardson extrapolation, a
//     relative-error target, and a hard evaluation cap that degrades the
//     reported error estimate instead of failing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "dlnk/errors.hpp"
#include "dlnk/linalg.hpp"

namespace dlnk {

// Nodes and weights of an n-point rule. For gauss_laguerre the weights are
// normalized to sum to one, i.e. they integrate against the probability
// density x^alpha e^{-x} / Gamma(alpha+1) on (0, inf).
struct QuadratureRule {
  Vector nodes;
  Vector weights;
};

// n-point generalized Gauss-Laguerre rule for weight x^alpha e^{-x},
// normalized by Gamma(alpha+1). Exact for polynomial integrands up to
// degree 2n-1: sum_i w_i x_i^k = Gamma(alpha+1+k)/Gamma(alpha+1).
inline QuadratureRule gauss_laguerre(int n, double alpha) {
  if (n < 1) throw ConfigError("gauss_laguerre: need at least one node");
  if (alpha <= -1.0)
    throw ConfigError("gauss_laguerre: weight exponent must exceed -1");
  Matrix jacobi = Matrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    jacobi(k, k) = 2.0 * k + alpha + 1.0;
    if (k > 0) {
      const double off = std::sqrt(k * (k + alpha));
      jacobi(k, k - 1) = off;
      jacobi(k - 1, k) = off;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
  QuadratureRule rule;
  rule.nodes = eig.eigenvalues();
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = eig.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;
  }
  return rule;
}

// Expectation rule for Q ~ Gamma(dof/2, rate dof/2), the scalar mixing prior
// of a width-dof layer: E[g(Q)] ~= sum_i w_i g(q_i). Obtained from the
// Gauss-Laguerre rule with alpha = dof/2 - 1 via the substitution
// q = 2 x / dof; the weights still sum to one.
inline QuadratureRule gamma_expectation_rule(double dof, int n) {
  if (dof <= 0.0) throw ConfigError("gamma_expectation_rule: dof must be > 0");
  QuadratureRule rule = gauss_laguerre(n, 0.5 * dof - 1.0);
  rule.nodes *= 2.0 / dof;
  return rule;
}

// Outcome of an adaptive integration: the value, a (rough, conservative)
// error estimate accumulated from the accepted Richardson discrepancies, the
// number of integrand evaluations, and whether every panel met its local
// tolerance before the evaluation/depth budget ran out.
struct IntegralResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::int64_t evaluations = 0;
  bool converged = true;
};

// Adaptive Simpson integration of f over [a, b] with bisection driven by the
// standard |S_fine - S_coarse| / 15 estimate, accepting panels via a mixed
// absolute/relative criterion. Panels that hit the depth or evaluation cap
// are accepted at their current refinement with their last measured
// discrepancy folded into error_estimate and converged set to false.
template <typename F>
IntegralResult integrate_adaptive(F&& f, double a, double b,
                                  double rel_tol = 1e-10,
                                  double abs_tol = 0.0,
                                  std::int64_t max_evaluations = 2000000) {
  if (!(a < b)) throw ConfigError("integrate_adaptive: require a < b");
  if (rel_tol <= 0.0 && abs_tol <= 0.0)
    throw ConfigError("integrate_adaptive: need a positive tolerance");

  struct Panel {
    double a, b;
    double fa, fm, fb;
    double coarse;  // Simpson estimate on [a, b]
    int depth;
  };
  constexpr int kMaxDepth = 52;

  IntegralResult out;
  auto eval = [&](double t) {
    ++out.evaluations;
    const double v = f(t);
    if (!std::isfinite(v))
      throw NonFiniteObjective("integrate_adaptive: integrand not finite");
    return v;
  };
  auto simpson = [](double lo, double hi, double flo, double fmid,
                    double fhi) {
    return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  };

  const double fa = eval(a);
  const double fm = eval(0.5 * (a + b));
  const double fb = eval(b);
  const double whole = simpson(a, b, fa, fm, fb);
  // First-pass magnitude scale for the relative criterion; refined panels
  // keep updating it so sharply peaked integrands are not under-resolved.
  double scale = std::abs(whole);

  std::vector<Panel> stack;
  stack.push_back({a, b, fa, fm, fb, whole, 0});
  while (!stack.empty()) {
    Panel p = stack.back();
    stack.pop_back();
    const double m = 0.5 * (p.a + p.b);
    const double fl = eval(0.5 * (p.a + m));
    const double fr = eval(0.5 * (m + p.b));
    const double left = simpson(p.a, m, p.fa, fl, p.fm);
    const double right = simpson(m, p.b, p.fm, fr, p.fb);
    const double refined = left + right;
    const double diff = refined - p.coarse;
    scale = std::max(scale, std::abs(refined));
    // Local budget proportional to the panel's share of the interval.
    const double local_tol =
        std::max(abs_tol, rel_tol * scale) * (p.b - p.a) / (b - a);
    const bool budget_hit =
        p.depth >= kMaxDepth || out.evaluations + 2 > max_evaluations;
    if (std::abs(diff) <= 15.0 * local_tol || budget_hit) {
      out.value += refined + diff / 15.0;
      out.error_estimate += std::abs(diff) / 15.0 + (budget_hit ? std::abs(diff) : 0.0);
      if (budget_hit && std::abs(diff) > 15.0 * local_tol) out.converged = false;
    } else {
      stack.push_back({p.a, m, p.fa, fl, p.fm, left, p.depth + 1});
      stack.push_back({m, p.b, p.fm, fr, p.fb, right, p.depth + 1});
    }
  }
  return out;
}

}  // namespace dlnk
