#pragma once

// Log-scaled modified Bessel function of the second kind (Macdonald
// function) K_nu(x) for real order and positive argument. Two regimes:
//   * x <= 2: Temme's series for orders in [-1/2, 1/2],
//   * x >  2: the Thompson-Barnett continued fraction with e^{-x} factored
//     out analytically,
// followed by the (stable) upward recurrence in the order with overflow
// guards, so the logarithm stays finite far beyond the range where a direct
// evaluation of K_nu would over- or underflow. Both kernels carry explicit
// convergence checks.

#include <cmath>
#include <limits>

#include "dlnk/errors.hpp"

namespace dlnk {

namespace detail {

constexpr double kEulerGamma = 0.5772156649015328606;
constexpr int kBesselMaxIter = 40000;

// gam1 = [1/Gamma(1-mu) - 1/Gamma(1+mu)] / (2 mu)  (-> EulerGamma as mu -> 0)
// gam2 = [1/Gamma(1-mu) + 1/Gamma(1+mu)] / 2
// gampl = 1/Gamma(1+mu), gammi = 1/Gamma(1-mu)
struct TemmeGammas {
  double gam1, gam2, gampl, gammi;
};

inline TemmeGammas temme_gammas(double mu) {
  TemmeGammas g;
  g.gampl = 1.0 / std::tgamma(1.0 + mu);
  g.gammi = 1.0 / std::tgamma(1.0 - mu);
  g.gam2 = 0.5 * (g.gammi + g.gampl);
  if (std::abs(mu) < 1e-6) {
    // 1/Gamma(1-mu) - 1/Gamma(1+mu) = -2(gamma mu + a3 mu^3 + ...) with
    // a3 = gamma^3/6 - gamma pi^2/12 + zeta(3)/3.
    constexpr double kCubicCoeff = -0.0420014438946879;
    g.gam1 = -(kEulerGamma + kCubicCoeff * mu * mu);
  } else {
    g.gam1 = (g.gammi - g.gampl) / (2.0 * mu);
  }
  return g;
}

// Temme series for x <= 2 and |mu| <= 1/2; returns K_mu(x) and K_{mu+1}(x),
// the latter possibly rescaled by e^{-shift} to stay representable when the
// argument is extremely small.
inline void bessel_k_temme(double mu, double x, double* kmu, double* kmu1,
                           double* shift) {
  const double eps = std::numeric_limits<double>::epsilon();
  const double x2 = 0.5 * x;
  const double pimu = M_PI * mu;
  const double fact = (std::abs(pimu) < eps) ? 1.0 : pimu / std::sin(pimu);
  double d = -std::log(x2);
  double e = mu * d;
  const double fact2 = (std::abs(e) < eps) ? 1.0 : std::sinh(e) / e;
  const TemmeGammas g = temme_gammas(mu);
  double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
  double sum = ff;
  e = std::exp(e);
  double p = 0.5 * e / g.gampl;
  double q = 0.5 / (e * g.gammi);
  double c = 1.0;
  d = x2 * x2;
  double sum1 = p;
  int i = 1;
  for (; i <= kBesselMaxIter; ++i) {
    ff = (i * ff + p + q) / (i * i - mu * mu);
    c *= d / i;
    p /= (i - mu);
    q /= (i + mu);
    const double del = c * ff;
    sum += del;
    sum1 += c * (p - i * ff);
    if (std::abs(del) < std::abs(sum) * eps) break;
  }
  if (i > kBesselMaxIter)
    throw ConvergenceFailure("bessel_k: series did not converge");
  const double log_k1 = std::log(sum1) + std::log(2.0) - std::log(x);
  if (log_k1 > 600.0) {
    *shift = log_k1;
    *kmu = sum * std::exp(-log_k1);
    *kmu1 = 1.0;
  } else {
    *shift = 0.0;
    *kmu = sum;
    *kmu1 = std::exp(log_k1);
  }
}

// Thompson-Barnett continued fraction for x > 2 and |mu| <= 1/2; returns
// e^{x} K_mu(x) and e^{x} K_{mu+1}(x).
inline void bessel_k_cf2(double mu, double x, double* kmu_scaled,
                         double* kmu1_scaled) {
  const double eps = std::numeric_limits<double>::epsilon();
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d, delh = d;
  double q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25 - mu * mu;
  double q = a1, c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  int i = 2;
  for (; i <= kBesselMaxIter; ++i) {
    a -= 2.0 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) <= eps) break;
  }
  if (i > kBesselMaxIter)
    throw ConvergenceFailure("bessel_k: continued fraction did not converge");
  h = a1 * h;
  *kmu_scaled = std::sqrt(M_PI / (2.0 * x)) / s;
  *kmu1_scaled = *kmu_scaled * (mu + x + 0.5 - h) / x;
}

}  // namespace detail

// log K_nu(x) for real nu (K is even in the order) and x > 0.
inline double log_bessel_k(double nu, double x) {
  if (!(x > 0.0)) throw ConfigError("log_bessel_k: argument must be positive");
  nu = std::abs(nu);
  const int n = static_cast<int>(nu + 0.5);
  const double mu = nu - n;  // in [-1/2, 1/2]

  double kmu, kmu1;
  double log_shift = 0.0;
  if (x <= 2.0) {
    detail::bessel_k_temme(mu, x, &kmu, &kmu1, &log_shift);
  } else {
    detail::bessel_k_cf2(mu, x, &kmu, &kmu1);
    log_shift = -x;
  }

  // K_{m+1}(x) = K_{m-1}(x) + (2m/x) K_m(x), stable upward; renormalize
  // before each step so the intermediate never overflows even when the
  // order is large relative to the argument.
  double prev = kmu, cur = kmu1;
  const double ratio_bound = std::max(1.0, 2.0 * nu / x);
  for (int j = 1; j < n; ++j) {
    if (cur > 1e250 / ratio_bound) {
      const double rescale = cur;
      prev /= rescale;
      cur = 1.0;
      log_shift += std::log(rescale);
    }
    const double next = prev + (2.0 * (mu + j) / x) * cur;
    prev = cur;
    cur = next;
  }
  const double value = (n == 0) ? prev : cur;
  return std::log(value) + log_shift;
}

}  // namespace dlnk
