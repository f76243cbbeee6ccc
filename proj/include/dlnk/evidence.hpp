#pragma once

// Scalar-output (D = 1) Bayesian model evidence for the deep linear stack:
//   * finite inverse temperature: E_prior[ e^{-Phi_beta/2} ] over the product
//     of Gamma(N_l/2, rate N_l/2) mixing variables, by tensorized
//     Gauss-Laguerre quadrature (L <= 3) or Monte Carlo (any L);
//   * the zero-temperature limit Z_inf: dividing out the likelihood's
//     beta^{-P/2} decay and sending beta -> inf turns the weight into
//     q^{-P/2} e^{-omega'/q} det(Sigma~)^{-1/2} with q the product variable
//     and omega' = y^T Sigma~^{-1} y / 2, Sigma~ = X^T X / (N_0 lambda*).
//     Evaluated by Monte Carlo, by the tabulated product density plus
//     adaptive quadrature, and for one hidden layer in closed form through
//     the Macdonald function K_nu.
//
// Constant convention shared by every method here and by the posterior
// importance sampler's log normalizer: the gamma mixing priors enter
// normalized, the Gaussian likelihood enters UNNORMALIZED as
// e^{-beta ||s - y||^2 / 2} (its (beta/2pi)^{P/2} prefactor is excluded), so
//   evidence_finite_beta  = E[e^{-Phi_beta/2}]           ~ beta^{-P/2} Z_inf,
//   evidence_zero_temperature = lim  evidence_finite_beta / beta^{-P/2}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dlnk/bessel.hpp"
#include "dlnk/errors.hpp"
#include "dlnk/fc.hpp"
#include "dlnk/gamma_product.hpp"
#include "dlnk/linalg.hpp"
#include "dlnk/montecarlo.hpp"
#include "dlnk/quadrature.hpp"
#include "dlnk/rng.hpp"

namespace dlnk {

enum class EvidenceMethod {
  quadrature,
  monte_carlo,
  bessel_closed_form,
  log_convolution,
};

inline const char* to_string(EvidenceMethod m) {
  switch (m) {
    case EvidenceMethod::quadrature: return "quadrature";
    case EvidenceMethod::monte_carlo: return "monte_carlo";
    case EvidenceMethod::bessel_closed_form: return "bessel_closed_form";
    case EvidenceMethod::log_convolution: return "log_convolution";
  }
  return "unknown";
}

// error_estimate is an (approximate, conservative) standard error of
// log_value: for Monte Carlo the relative s.e. of the mean, for quadrature
// the last refinement change, for the closed form the series tolerance.
struct EvidenceResult {
  double log_value = 0.0;
  EvidenceMethod method = EvidenceMethod::quadrature;
  double error_estimate = 0.0;
  std::vector<std::string> warnings;
};

// omega = y^T Sigma~^{-1} y * prod_l N_l / 2^{L+1}, the single scalar the
// zero-temperature evidence depends on besides the layer widths.
struct OmegaStatistic {
  double omega = 0.0;
};

namespace detail {

// Eigen-decomposed training gram Sigma~ = X^T X / (N_0 lambda*) for the
// scalar-output stack: everything the integrands need, in O(P) per point.
struct ScalarGram {
  Vector sigma;     // eigenvalues of Sigma~
  Vector proj;      // V^T y
  double log_det = 0.0;
  double omega_prime = 0.0;  // y^T Sigma~^{-1} y / 2

  double phi_beta(double q, double beta) const {
    double quad = 0.0, logdet = 0.0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      quad += proj[i] * proj[i] / (q * sigma[i] + 1.0 / beta);
      logdet += std::log1p(beta * q * sigma[i]);
    }
    return quad + logdet;
  }
};

inline ScalarGram scalar_gram(const FcNetworkSpec& spec, const Matrix& x,
                              const Vector& y, bool need_inverse) {
  if (spec.d != 1)
    throw ConfigError("evidence: closed-form chain requires a scalar output");
  spec.validate();
  if (x.rows() != spec.n0)
    throw ShapeMismatch("evidence: input rows do not match the spec");
  if (y.size() != x.cols())
    throw ShapeMismatch("evidence: one label per training example required");
  ScalarGram g;
  const Eigen::Index p = x.cols();
  if (p == 0) return g;
  const Matrix gram =
      x.transpose() * x /
      (static_cast<double>(spec.n0) * spec.lambda_star());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  g.sigma = eig.eigenvalues();
  g.proj = eig.eigenvectors().transpose() * y;
  const double floor = 1e-12 * std::max(g.sigma[p - 1], 0.0);
  if (need_inverse) {
    if (p > spec.n0 || g.sigma[0] <= floor || g.sigma[0] <= 0.0)
      throw SingularGram(
          "evidence: training gram X^T X is singular (needs P <= N_0 and "
          "independent inputs)");
    for (Eigen::Index i = 0; i < p; ++i) {
      g.log_det += std::log(g.sigma[i]);
      g.omega_prime += 0.5 * g.proj[i] * g.proj[i] / g.sigma[i];
    }
  }
  return g;
}

// Log-shifted mean accumulator for positive Monte Carlo weights; merged in
// deterministic chunk order so results are thread-count invariant.
struct LogMeanAccumulator {
  double shift = -1e300;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::int64_t count = 0;

  void rescale(double new_shift) {
    const double f = std::exp(shift - new_shift);
    sum *= f;
    sum_sq *= f * f;
    shift = new_shift;
  }
  void add(double log_w) {
    if (std::isnan(log_w) || log_w > 1e300)
      throw NonFiniteObjective("evidence: non-finite Monte Carlo weight");
    if (log_w > shift) rescale(log_w);
    const double w = std::exp(log_w - shift);
    sum += w;
    sum_sq += w * w;
    ++count;
  }
  void merge(const LogMeanAccumulator& o) {
    if (o.count == 0) return;
    if (o.shift > shift) rescale(o.shift);
    const double f = std::exp(o.shift - shift);
    sum += o.sum * f;
    sum_sq += o.sum_sq * f * f;
    count += o.count;
  }
  double log_mean() const {
    return shift + std::log(sum) - std::log(static_cast<double>(count));
  }
  // Relative standard error of the mean ~ s.e. of the log.
  double relative_se() const {
    const double n = static_cast<double>(count);
    const double mean = sum / n;
    const double mean_var =
        std::max(sum_sq / n - mean * mean, 0.0) / (n - 1.0);
    return std::sqrt(mean_var) / mean;
  }
};

template <typename LogWeight>
LogMeanAccumulator mc_log_mean(std::int64_t n, const RngStream& rng,
                               int threads, LogWeight&& log_weight) {
  if (n < 2) throw ConfigError("evidence: need at least two draws");
  return chunked_reduce<LogMeanAccumulator>(
      n, threads, [] { return LogMeanAccumulator{}; },
      [&](LogMeanAccumulator& acc, std::int64_t i) {
        RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
        acc.add(log_weight(sub));
      },
      [](LogMeanAccumulator& a, const LogMeanAccumulator& b) { a.merge(b); });
}

}  // namespace detail

inline OmegaStatistic omega(const Matrix& x, const Vector& y,
                            const FcNetworkSpec& spec) {
  const detail::ScalarGram g = detail::scalar_gram(spec, x, y, true);
  double dof_product = 1.0;
  for (const int w : spec.widths) dof_product *= 0.5 * w;
  return OmegaStatistic{g.omega_prime * dof_product};
}

// E_prior[ e^{-Phi_beta / 2} ] for the scalar-output stack.
//
// quadrature: tensor-product Gauss-Laguerre over the L mixing coordinates,
// refined through an escalating node ladder until the log value moves by
// less than 1e-8 (the last change is the error estimate; hitting the ladder
// cap degrades the estimate instead of failing). monte_carlo: mean weight
// over n_draws prior samples, merged deterministically.
inline EvidenceResult evidence_finite_beta(const FcNetworkSpec& spec,
                                           const Matrix& x, const Vector& y,
                                           double beta, EvidenceMethod method,
                                           std::int64_t n_draws = 200000,
                                           const RngStream& rng = RngStream(1,
                                                                            0),
                                           int threads = 0) {
  if (!(beta > 0.0))
    throw ConfigError("evidence_finite_beta: beta must be positive");
  const detail::ScalarGram gram = detail::scalar_gram(spec, x, y, false);
  const auto depth = static_cast<std::size_t>(spec.depth());
  EvidenceResult out;
  out.method = method;

  if (method == EvidenceMethod::monte_carlo) {
    const auto acc = detail::mc_log_mean(
        n_draws, rng, threads, [&](RngStream& sub) {
          double q = 1.0;
          for (const int w : spec.widths)
            q *= sub.gamma(0.5 * w) / (0.5 * w);
          return -0.5 * gram.phi_beta(q, beta);
        });
    out.log_value = acc.log_mean();
    out.error_estimate = acc.relative_se();
    return out;
  }
  if (method != EvidenceMethod::quadrature)
    throw ConfigError(
        "evidence_finite_beta: supported methods are quadrature and "
        "monte_carlo");
  if (depth > 3)
    throw MethodCostExceeded(
        "evidence_finite_beta: tensor quadrature grows as nodes^L; use the "
        "Monte Carlo method beyond three layers");

  double prev = 0.0;
  bool have_prev = false, converged = false;
  for (const int n_nodes : {8, 16, 24, 32, 48, 64, 96, 128}) {
    std::vector<QuadratureRule> rules;
    rules.reserve(depth);
    for (const int w : spec.widths)
      rules.push_back(gamma_expectation_rule(w, n_nodes));
    // Tensor sum of w * e^{-Phi/2}, log-shifted by the largest exponent.
    std::vector<std::size_t> idx(depth, 0);
    std::vector<double> log_terms;
    log_terms.reserve(
        static_cast<std::size_t>(std::pow(n_nodes, depth)) + 1);
    for (;;) {
      double q = 1.0, log_w = 0.0;
      for (std::size_t l = 0; l < depth; ++l) {
        q *= rules[l].nodes[static_cast<Eigen::Index>(idx[l])];
        log_w += std::log(rules[l].weights[static_cast<Eigen::Index>(idx[l])]);
      }
      log_terms.push_back(log_w - 0.5 * gram.phi_beta(q, beta));
      std::size_t l = 0;
      for (; l < depth; ++l) {
        if (++idx[l] < static_cast<std::size_t>(n_nodes)) break;
        idx[l] = 0;
      }
      if (l == depth) break;
    }
    const double value = log_sum_exp(Eigen::Map<const Vector>(
        log_terms.data(), static_cast<Eigen::Index>(log_terms.size())));
    if (have_prev) {
      out.error_estimate = std::abs(value - prev);
      if (out.error_estimate < 1e-8) {
        out.log_value = value;
        converged = true;
        break;
      }
    }
    prev = value;
    have_prev = true;
    out.log_value = value;
  }
  if (!converged)
    out.warnings.push_back(
        "quadrature ladder capped at 128 nodes per layer before reaching "
        "the 1e-8 refinement target; error_estimate reflects the last "
        "change");
  return out;
}

// Z_inf: the beta -> inf limit of evidence_finite_beta / beta^{-P/2}, i.e.
//   det(Sigma~)^{-1/2} E[ q^{-P/2} e^{-omega'/q} ],  q = prod_l Q_l.
inline EvidenceResult evidence_zero_temperature(
    const FcNetworkSpec& spec, const Matrix& x, const Vector& y,
    EvidenceMethod method, std::int64_t n_draws = 200000,
    const RngStream& rng = RngStream(1, 0), int threads = 0) {
  const detail::ScalarGram gram = detail::scalar_gram(spec, x, y, true);
  const double p = static_cast<double>(x.cols());
  const double omega_prime = gram.omega_prime;
  const double constant = -0.5 * gram.log_det;
  EvidenceResult out;
  out.method = method;
  if (p < 3.0)
    out.warnings.push_back(
        "integrable-singularity: with P < 3 the u = 1/q form of the "
        "zero-temperature integrand is endpoint-singular; the direct q-form "
        "used here stays integrable but error estimates may degrade");
  if (omega_prime == 0.0 && p >= static_cast<double>(spec.min_width()))
    throw IntegrableSingularity(
        "evidence_zero_temperature: with zero labels the integrand "
        "q^{-P/2} has no damping factor and E[q^{-P/2}] diverges unless "
        "P < min layer width");

  switch (method) {
    case EvidenceMethod::monte_carlo: {
      const auto acc = detail::mc_log_mean(
          n_draws, rng, threads, [&](RngStream& sub) {
            double log_q = 0.0;
            for (const int w : spec.widths)
              log_q += std::log(sub.gamma(0.5 * w) / (0.5 * w));
            return -omega_prime * std::exp(-log_q) - 0.5 * p * log_q;
          });
      out.log_value = constant + acc.log_mean();
      out.error_estimate = acc.relative_se();
      return out;
    }
    case EvidenceMethod::log_convolution: {
      std::vector<double> dofs;
      for (const int w : spec.widths) dofs.push_back(w);
      const GammaProductDensity density(dofs);
      auto exponent = [&](double t) {
        return density.log_density_t(t) - 0.5 * p * t -
               omega_prime * std::exp(-t);
      };
      const double lo = density.t_lower(), hi = density.t_upper();
      double peak = -1e300;
      const int scan = 4096;
      for (int i = 0; i <= scan; ++i)
        peak = std::max(peak, exponent(lo + (hi - lo) * i / scan));
      const IntegralResult integral = integrate_adaptive(
          [&](double t) { return std::exp(exponent(t) - peak); }, lo, hi,
          1e-9);
      out.log_value = constant + peak + std::log(integral.value);
      out.error_estimate = integral.error_estimate /
                               std::max(integral.value, 1e-300) +
                           density.normalization_defect();
      if (!integral.converged)
        out.warnings.push_back(
            "adaptive quadrature hit its evaluation cap; error_estimate "
            "was degraded accordingly");
      return out;
    }
    case EvidenceMethod::bessel_closed_form: {
      if (spec.depth() != 1)
        throw ConfigError(
            "evidence_zero_temperature: the Macdonald-function closed form "
            "exists for exactly one hidden layer");
      const double n = spec.widths.front();
      const double half_n = 0.5 * n;
      if (omega_prime == 0.0) {
        // Limit formula: E[q^{-P/2}] for q ~ Gamma(n/2, rate n/2).
        out.log_value = constant + 0.5 * p * std::log(half_n) +
                        std::lgamma(0.5 * (n - p)) - std::lgamma(half_n);
        out.error_estimate = 1e-12;
        return out;
      }
      const double w = omega_prime * half_n;
      out.log_value = constant + std::log(2.0) + 0.5 * p * std::log(half_n) -
                      std::lgamma(half_n) + 0.25 * (n - p) * std::log(w) +
                      log_bessel_k(0.5 * (n - p), 2.0 * std::sqrt(w));
      out.error_estimate = 1e-12;
      return out;
    }
    case EvidenceMethod::quadrature:
      break;
  }
  throw ConfigError(
      "evidence_zero_temperature: supported methods are monte_carlo, "
      "log_convolution and bessel_closed_form");
}

}  // namespace dlnk
