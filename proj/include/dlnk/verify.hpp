#pragma once

// Self-verification suite: each check below exercises one end-to-end claim
// of the library against an independent oracle (analytic identity, brute
// force sampler, 1-D quadrature, or cross-method agreement) at desk scale.
// The suite backs both the `verify` subcommand and the standalone
// acceptance binary; it depends only on the library, not on a test
// framework.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dlnk/commands.hpp"
#include "dlnk/config.hpp"
#include "dlnk/conv.hpp"
#include "dlnk/errors.hpp"
#include "dlnk/evidence.hpp"
#include "dlnk/fc.hpp"
#include "dlnk/ldp.hpp"
#include "dlnk/montecarlo.hpp"
#include "dlnk/posterior.hpp"
#include "dlnk/wishart.hpp"

namespace dlnk {

struct CriterionResult {
  std::string name;
  bool pass = false;
  std::string details;
};

namespace detail {

inline FcNetworkSpec verify_fc(int n0, int d, std::vector<int> widths) {
  FcNetworkSpec spec;
  spec.n0 = n0;
  spec.d = d;
  spec.widths = std::move(widths);
  spec.precisions.assign(spec.widths.size() + 1, 1.0);
  return spec;
}

inline ConvNetworkSpec verify_conv(int n0, std::vector<int> channels,
                                   int mask) {
  ConvNetworkSpec spec;
  spec.n0 = n0;
  spec.channels = std::move(channels);
  spec.mask = mask;
  spec.precisions.assign(spec.channels.size(), 1.0);
  return spec;
}

inline Matrix verify_normal_matrix(Eigen::Index rows, Eigen::Index cols,
                                   RngStream& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline Matrix verify_random_spd(Eigen::Index d, RngStream& rng,
                                double ridge) {
  const Matrix a = verify_normal_matrix(d, d, rng);
  return a * a.transpose() / static_cast<double>(d) +
         ridge * Matrix::Identity(d, d);
}

inline Matrix verify_random_theta(int d, double scale, RngStream& rng) {
  Matrix theta = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) theta(i, j) = scale * rng.normal();
  return theta;
}

// Composite Simpson rule on [a, b] with n (even) panels.
template <typename F>
double simpson(F&& f, double a, double b, int n) {
  if (n % 2 != 0) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline std::string fmt(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

}  // namespace detail

// 1. The Wishart-mixture and weight-space representations of the fully
// connected prior agree in first, second and fourth moments over a grid of
// depths, output dims, widths, input dims and sample counts.
inline CriterionResult verify_fc_prior_equivalence(int threads,
                                                   std::int64_t n_draws =
                                                       100000) {
  CriterionResult out{"fc-prior-equivalence", false, ""};
  double max_z = 0.0;
  int combos = 0;
  std::uint64_t combo_id = 0;
  for (const int l : {1, 2, 3})
    for (const int d : {1, 2, 3})
      for (const int n : {4, 8})
        for (const int n0 : {2, 4})
          for (const int p : {1, 4}) {
            ++combo_id;
            if (n <= d) continue;
            const auto spec = detail::verify_fc(
                n0, d, std::vector<int>(static_cast<std::size_t>(l), n));
            RngStream setup(200, combo_id);
            const Matrix x = detail::verify_normal_matrix(n0, p, setup);
            const Eigen::Index dim = static_cast<Eigen::Index>(d) * p;
            const auto mixture = detail::accumulate_moments(
                n_draws, dim, {}, RngStream(201, combo_id), threads,
                [&](RngStream& sub) {
                  const Matrix s = sample_prior_mixture_one(spec, x, sub);
                  return Vector(Eigen::Map<const Vector>(s.data(), dim));
                });
            const auto weightspace = detail::accumulate_moments(
                n_draws, dim, {}, RngStream(202, combo_id), threads,
                [&](RngStream& sub) {
                  const Matrix s = sample_prior_weightspace_one(spec, x, sub);
                  return Vector(Eigen::Map<const Vector>(s.data(), dim));
                });
            for (Eigen::Index i = 0; i < dim; ++i) {
              max_z = std::max(max_z, z_score(mixture.first(i),
                                              weightspace.first(i)));
              max_z = std::max(max_z, z_score(mixture.second(i),
                                              weightspace.second(i)));
              max_z = std::max(max_z, z_score(mixture.fourth(i),
                                              weightspace.fourth(i)));
            }
            ++combos;
          }
  out.pass = max_z <= 4.0;
  out.details = std::to_string(combos) + " specs, max |z| = " +
                detail::fmt(max_z) + " (bound 4)";
  return out;
}

// 2. Same agreement for the 1-D convolutional prior across channel ladders,
// spatial sizes and mask widths.
inline CriterionResult verify_conv_prior_equivalence(int threads,
                                                     std::int64_t n_draws =
                                                         100000) {
  CriterionResult out{"conv-prior-equivalence", false, ""};
  double max_z = 0.0;
  int combos = 0;
  std::uint64_t combo_id = 0;
  for (const int l : {1, 2})
    for (const int n0 : {2, 3})
      for (const int c : {4, 8})
        for (const int m : {1, 3})
          for (const int p : {1, 4}) {
            ++combo_id;
            if (m > n0) continue;
            const auto spec = detail::verify_conv(
                n0, std::vector<int>(static_cast<std::size_t>(l) + 1, c), m);
            RngStream setup(210, combo_id);
            std::vector<Matrix> x;
            for (int mu = 0; mu < p; ++mu)
              x.push_back(detail::verify_normal_matrix(c, n0, setup));
            const auto mixture = detail::accumulate_moments(
                n_draws, p, {}, RngStream(211, combo_id), threads,
                [&](RngStream& sub) {
                  return sample_prior_conv_mixture_one(spec, x, sub);
                });
            const auto weightspace = detail::accumulate_moments(
                n_draws, p, {}, RngStream(212, combo_id), threads,
                [&](RngStream& sub) {
                  return sample_prior_conv_weightspace_one(spec, x, sub);
                });
            for (Eigen::Index i = 0; i < p; ++i) {
              max_z = std::max(max_z, z_score(mixture.first(i),
                                              weightspace.first(i)));
              max_z = std::max(max_z, z_score(mixture.second(i),
                                              weightspace.second(i)));
              max_z = std::max(max_z, z_score(mixture.fourth(i),
                                              weightspace.fourth(i)));
            }
            ++combos;
          }
  out.pass = max_z <= 4.0;
  out.details = std::to_string(combos) + " specs, max |z| = " +
                detail::fmt(max_z) + " (bound 4)";
  return out;
}

// 3. The mixture posterior predictive matches a brute-force weight-space
// importance sampler (scalar output, one hidden layer) in mean and second
// moment within combined Monte Carlo error.
inline CriterionResult verify_predictive_oracle(int threads) {
  CriterionResult out{"posterior-predictive-oracle", false, ""};
  double max_z = 0.0;
  for (std::uint64_t inst = 0; inst < 3; ++inst) {
    const auto spec = detail::verify_fc(2, 1, {6});
    RngStream setup(300, inst);
    const Matrix x = detail::verify_normal_matrix(2, 3, setup);
    const Vector x0 = detail::verify_normal_matrix(2, 1, setup).col(0);
    Vector y(3);
    for (int i = 0; i < 3; ++i) y[i] = setup.normal();
    const double beta = 10.0;
    const auto pred =
        predictive_mixture(spec, x0, x, y, beta,
                           PosteriorSampler::importance, 100000,
                           RngStream(301, inst), 0.1, threads);
    const auto oracle = detail::fc_weightspace_oracle(
        spec, x0, x, y, beta, 1000000, RngStream(302, inst), threads);
    const Json cmp = detail::oracle_comparison(pred, oracle, false);
    max_z = std::max(max_z, cmp["max_z"].get<double>());
  }
  out.pass = max_z <= 4.0;
  out.details = "3 instances, max |z| = " + detail::fmt(max_z) +
                " (bound 4)";
  return out;
}

// 4. Posterior mean of the scalar mixing variable from importance sampling
// and Metropolis both agree with 1-D quadrature of the exact weighted
// density to three significant digits.
inline CriterionResult verify_mixing_quadrature_oracle(int threads) {
  CriterionResult out{"mixing-quadrature-oracle", false, ""};
  const auto spec = detail::verify_fc(2, 1, {6});
  Matrix x(2, 3);
  x << 1.0, 0.3, -0.4,
       0.9, 0.2, -0.7;
  Vector y(3);
  y << 0.8, -1.1, 0.4;
  const double beta = 10.0;

  // Exact 1-D weighted density rho_N(q) e^{-phi_beta(q)/2} on a fine grid.
  const Matrix gram = x.transpose() * x /
                      (static_cast<double>(spec.n0) * spec.lambda_star());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const Vector sigma = eig.eigenvalues();
  const Vector proj = eig.eigenvectors().transpose() * y;
  const double w = static_cast<double>(spec.widths.front());
  const double log_norm = 0.5 * w * std::log(0.5 * w) - std::lgamma(0.5 * w);
  auto weighted_density = [&](double q) {
    if (q <= 0.0) return 0.0;
    double phi = 0.0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
      phi += proj[i] * proj[i] / (q * sigma[i] + 1.0 / beta) +
             std::log1p(beta * q * sigma[i]);
    return std::exp(log_norm + (0.5 * w - 1.0) * std::log(q) - 0.5 * w * q -
                    0.5 * phi);
  };
  const double z = detail::simpson(weighted_density, 0.0, 30.0, 400000);
  const double zq = detail::simpson(
      [&](double q) { return q * weighted_density(q); }, 0.0, 30.0, 400000);
  const double mean_q = zq / z;

  const auto is = posterior_mixing_is(spec, x, y, beta, 1000000,
                                      RngStream(310, 0), threads);
  const auto mh = posterior_mixing_mh(spec, x, y, beta, 4000000, 0.7,
                                      RngStream(311, 0));
  const double rel_is = std::abs(is.top_mean(0, 0) - mean_q) / mean_q;
  const double rel_mh = std::abs(mh.top_mean(0, 0) - mean_q) / mean_q;
  out.pass = rel_is <= 1e-3 && rel_mh <= 1e-3;
  out.details = "relative errors: IS " + detail::fmt(rel_is) + ", MH " +
                detail::fmt(rel_mh) + " (bound 1e-3)";
  return out;
}

// 5. Evidence consistency: closed form vs. log-convolution at one layer,
// Monte Carlo vs. log-convolution at two layers, the rescaled
// finite-temperature value against the limit, and the posterior
// importance-sampling normalizer.
inline CriterionResult verify_evidence_consistency(int threads) {
  CriterionResult out{"evidence-consistency", false, ""};
  auto instance = [](int n0, std::vector<int> widths, int p,
                     std::uint64_t seed) {
    struct Inst {
      FcNetworkSpec spec;
      Matrix x;
      Vector y;
    } inst;
    inst.spec = detail::verify_fc(n0, 1, std::move(widths));
    RngStream rng(seed, 0);
    inst.x = Matrix(n0, p);
    for (int i = 0; i < n0; ++i)
      for (int j = 0; j < p; ++j) inst.x(i, j) = rng.normal();
    inst.y = Vector(p);
    for (int j = 0; j < p; ++j) inst.y[j] = 1.5 * rng.normal();
    return inst;
  };

  // (a) one layer: Bessel closed form vs. log-convolution quadrature.
  const auto ia = instance(4, {6}, 3, 42);
  const double gap_a =
      std::abs(evidence_zero_temperature(ia.spec, ia.x, ia.y,
                                         EvidenceMethod::bessel_closed_form)
                   .log_value -
               evidence_zero_temperature(ia.spec, ia.x, ia.y,
                                         EvidenceMethod::log_convolution)
                   .log_value);
  auto hard = ia;
  hard.y *= 3.0;
  const double gap_a2 =
      std::abs(evidence_zero_temperature(hard.spec, hard.x, hard.y,
                                         EvidenceMethod::bessel_closed_form)
                   .log_value -
               evidence_zero_temperature(hard.spec, hard.x, hard.y,
                                         EvidenceMethod::log_convolution)
                   .log_value);

  // (b) two layers: Monte Carlo vs. log-convolution, three significant
  // digits on a well-conditioned orthogonal design.
  const auto spec_b = detail::verify_fc(4, 1, {6, 8});
  const Matrix x_b = 2.0 * Matrix::Identity(4, 4);
  Vector y_b(4);
  y_b << 1.2, -0.8, 0.5, 1.0;
  const double gap_b =
      std::abs(evidence_zero_temperature(spec_b, x_b, y_b,
                                         EvidenceMethod::log_convolution)
                   .log_value -
               evidence_zero_temperature(spec_b, x_b, y_b,
                                         EvidenceMethod::monte_carlo,
                                         16000000, RngStream(21, 2), threads)
                   .log_value);

  // (c) rescaled finite-temperature evidence near the zero-temperature
  // limit at beta = 1e4.
  const auto ic = instance(4, {6}, 3, 45);
  const double beta_c = 1e4;
  const double rescaled =
      evidence_finite_beta(ic.spec, ic.x, ic.y, beta_c,
                           EvidenceMethod::quadrature)
          .log_value +
      0.5 * static_cast<double>(ic.x.cols()) * std::log(beta_c);
  const double gap_c = std::abs(
      rescaled - evidence_zero_temperature(
                     ic.spec, ic.x, ic.y,
                     EvidenceMethod::bessel_closed_form)
                     .log_value);

  // (d) finite-temperature evidence equals the posterior IS normalizer.
  const auto id = instance(4, {6}, 3, 46);
  const auto ev_d =
      evidence_finite_beta(id.spec, id.x, id.y, 10.0,
                           EvidenceMethod::monte_carlo, 400000,
                           RngStream(9, 0), threads);
  const auto post = posterior_mixing_is(id.spec, id.x, id.y, 10.0, 200000,
                                        RngStream(10, 0), threads);
  const double se_post =
      std::sqrt(std::max(1.0 / post.ess - 1.0 / 200000.0, 0.0));
  const double se_d = std::sqrt(ev_d.error_estimate * ev_d.error_estimate +
                                se_post * se_post);
  const double gap_d = std::abs(ev_d.log_value - post.log_normalizer);

  const bool pass_a = gap_a <= 1e-6 && gap_a2 <= 1e-6;
  const bool pass_b = gap_b <= 5e-4;
  const bool pass_c = gap_c <= std::log(1.01);
  const bool pass_d = gap_d <= 4.0 * se_d;
  out.pass = pass_a && pass_b && pass_c && pass_d;
  out.details = "bessel-vs-logconv " + detail::fmt(std::max(gap_a, gap_a2)) +
                " (1e-6); mc-vs-logconv " + detail::fmt(gap_b) +
                " (5e-4); rescaled-limit " + detail::fmt(gap_c) +
                " (0.00995); is-normalizer z = " +
                detail::fmt(se_d > 0.0 ? gap_d / se_d : 0.0) + " (4)";
  return out;
}

// 6. Rate-function suite: identity minimizers from random starts, analytic
// vs. finite-difference gradients, zero-label mean-field minimizer,
// layer symmetry, and the width-50 histogram mode against the minimizer.
inline CriterionResult verify_rate_function_suite(int threads) {
  CriterionResult out{"rate-function-suite", false, ""};

  // (i) identity minimization from 10 random SPD starts.
  double worst_dist = 0.0;
  bool all_converged = true;
  {
    const auto spec = detail::verify_fc(2, 2, {4, 5, 6});
    RngStream rng(320, 0);
    for (int start = 0; start < 10; ++start) {
      std::vector<Matrix> init;
      for (int l = 0; l < 3; ++l)
        init.push_back(detail::verify_random_spd(2, rng, 0.3));
      const auto point = minimize_rate(RateObjective::lazy, spec, Matrix(),
                                       Vector(), 1.0, init);
      all_converged = all_converged && point.converged;
      for (const auto& q : point.qs)
        worst_dist = std::max(
            worst_dist, (q.matrix() - Matrix::Identity(2, 2)).norm());
    }
  }

  // (ii) analytic vs. central finite-difference gradients on 100 random
  // points, both objectives, every lower-triangular coordinate.
  double worst_grad_rel = 0.0;
  {
    const auto spec = detail::verify_fc(3, 2, {5, 6});
    RngStream rng(321, 0);
    const Matrix x = detail::verify_normal_matrix(3, 3, rng);
    Vector y(6);
    for (int i = 0; i < 6; ++i) y[i] = rng.normal();
    const double beta = 3.0, h = 1e-6;
    for (int point = 0; point < 100; ++point) {
      std::vector<Matrix> thetas = {detail::verify_random_theta(2, 0.5, rng),
                                    detail::verify_random_theta(2, 0.5, rng)};
      for (const auto objective :
           {RateObjective::lazy, RateObjective::meanfield}) {
        const auto grad =
            rate_value_and_gradient(objective, spec, x, y, beta, thetas);
        for (int l = 0; l < 2; ++l)
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j <= i; ++j) {
              auto plus = thetas, minus = thetas;
              plus[static_cast<std::size_t>(l)](i, j) += h;
              minus[static_cast<std::size_t>(l)](i, j) -= h;
              const double fd =
                  (rate_value_and_gradient(objective, spec, x, y, beta, plus)
                       .value -
                   rate_value_and_gradient(objective, spec, x, y, beta,
                                           minus)
                       .value) /
                  (2.0 * h);
              const double rel =
                  std::abs(fd -
                           grad.gradients[static_cast<std::size_t>(l)](i, j)) /
                  std::max(1.0, std::abs(fd));
              worst_grad_rel = std::max(worst_grad_rel, rel);
            }
      }
    }
  }

  // (iii) zero labels: the mean-field minimizer is the identity tuple.
  double zero_label_dist = 0.0;
  {
    const auto spec = detail::verify_fc(3, 2, {5, 5});
    RngStream rng(322, 0);
    const Matrix x = detail::verify_normal_matrix(3, 2, rng);
    std::vector<Matrix> init = {detail::verify_random_spd(2, rng, 0.3),
                                detail::verify_random_spd(2, rng, 0.3)};
    const auto point = minimize_rate(RateObjective::meanfield, spec, x,
                                     Vector::Zero(4), 4.0, init);
    all_converged = all_converged && point.converged;
    for (const auto& q : point.qs)
      zero_label_dist = std::max(
          zero_label_dist, (q.matrix() - Matrix::Identity(2, 2)).norm());
  }

  // (iv) scalar output: the minimizer is layer-symmetric.
  double layer_asym = 0.0;
  {
    const auto spec = detail::verify_fc(3, 1, {7, 7});
    Matrix x(3, 2);
    x << 1.0, 0.3, -0.4, 0.9, 0.2, -0.7;
    Vector y(2);
    y << 1.8, -1.1;
    const auto point =
        minimize_rate(RateObjective::meanfield, spec, x, y, 5.0);
    all_converged = all_converged && point.converged;
    layer_asym =
        std::abs(point.qs[0].matrix()(0, 0) - point.qs[1].matrix()(0, 0));
  }

  // (v) width-50 mean-field histogram mode vs. the rate minimizer.
  double hist_rel = 0.0;
  {
    const auto spec = detail::verify_fc(2, 1, {50});
    Matrix x(2, 1);
    x << 1.0, 1.0;
    Vector y(1);
    y << 1.116539;
    const double beta = 25.0;
    MinimizeOptions options;
    options.gradient_tolerance = 1e-7;
    const auto field = minimize_rate(RateObjective::meanfield, spec, x, y,
                                     beta, {}, options);
    all_converged = all_converged && field.converged;
    const double u_star = field.qs[0].matrix()(0, 0);
    const auto hist = mixing_scalar_histogram(
        spec, MixingWeight::meanfield, x, y, beta, 0.6 * u_star,
        1.8 * u_star, 48, 8000000, RngStream(42, 0), threads);
    hist_rel = std::abs(histogram_mode(hist) - u_star) / u_star;
  }

  out.pass = all_converged && worst_dist <= 1e-6 && worst_grad_rel <= 1e-6 &&
             zero_label_dist <= 1e-6 && layer_asym <= 1e-8 &&
             hist_rel <= 0.05;
  out.details = "identity-dist " + detail::fmt(worst_dist) +
                " (1e-6); grad-rel " + detail::fmt(worst_grad_rel) +
                " (1e-6); zero-label-dist " + detail::fmt(zero_label_dist) +
                " (1e-6); layer-asym " + detail::fmt(layer_asym) +
                " (1e-8); histogram-mode-rel " + detail::fmt(hist_rel) +
                " (0.05)";
  return out;
}

// 7. Concentration at the CLT rate: the mean Frobenius distance of the top
// mixing product from the identity decays with log-log slope -1/2 over
// widths 10/100/1000.
inline CriterionResult verify_concentration_scaling(int threads) {
  CriterionResult out{"concentration-clt-rate", false, ""};
  const auto spec = detail::verify_fc(2, 2, {6, 6});
  const auto rows =
      concentration_probe(spec, ConcentrationRegime::lazy, {10, 100, 1000},
                          20000, RngStream(40, 0), Matrix(), Vector(), 1.0,
                          threads);
  bool monotone = true;
  for (std::size_t i = 1; i < rows.size(); ++i)
    monotone = monotone && rows[i].mean_distance < rows[i - 1].mean_distance;
  const double slope = log_log_slope(rows);
  out.pass = monotone && std::abs(slope + 0.5) <= 0.1;
  out.details = "slope " + detail::fmt(slope) + " (want -0.5 +/- 0.1), " +
                std::string(monotone ? "monotone" : "NOT monotone");
  return out;
}

// 8. Structural lemmas: the Wishart Laplace-transform identity, the
// determinant spectrum collapse, and positive semidefiniteness of the
// local convolutional kernel.
inline CriterionResult verify_structure_lemmas(int threads) {
  CriterionResult out{"structure-lemmas", false, ""};
  (void)threads;

  // (a) Laplace identity on 20 random configurations, 4 MC s.e. bound.
  double worst_laplace_z = 0.0;
  {
    RngStream rng(330, 0);
    for (int t = 0; t < 20; ++t) {
      RngStream sub = rng.substream(static_cast<std::uint64_t>(t));
      const int dim = 1 + t % 3;
      const int dof = dim + 2 + t % 4;
      const SpdMatrix scale(detail::verify_random_spd(dim, sub, 0.3));
      const Matrix c = detail::verify_random_spd(dim, sub, 0.1) * 0.5;
      const double alpha = 0.2 + 0.03 * t;
      RngStream mc(331, static_cast<std::uint64_t>(t));
      const auto chk =
          wishart_laplace_check(scale, dof, c, alpha, mc, 200000);
      const double z =
          chk.mc_std_error > 0.0
              ? std::abs(chk.mc_estimate - chk.closed_form) / chk.mc_std_error
              : 0.0;
      worst_laplace_z = std::max(worst_laplace_z, z);
    }
  }

  // (b) determinant spectrum collapse, 50 random instances, 1e-8 relative.
  double worst_spectrum_rel = 0.0;
  {
    RngStream rng(332, 0);
    for (int t = 0; t < 50; ++t) {
      RngStream sub = rng.substream(static_cast<std::uint64_t>(t));
      const int n0 = 2 + static_cast<int>(sub.next_u64() % 3);
      const int p = 1 + static_cast<int>(sub.next_u64() % 4);
      const Matrix k = detail::verify_random_spd(n0 * p, sub, 0.02);
      Vector s(p);
      for (int i = 0; i < p; ++i) s[i] = sub.normal();
      const auto chk = spectrum_lemma_check(k, s);
      worst_spectrum_rel =
          std::max(worst_spectrum_rel,
                   std::abs(chk.lhs - chk.rhs) / std::abs(chk.rhs));
    }
  }

  // (c) local kernel positivity on 100 random conv instances.
  double min_eigenvalue = 0.0;
  {
    RngStream rng(333, 0);
    for (int t = 0; t < 100; ++t) {
      RngStream sub = rng.substream(static_cast<std::uint64_t>(t));
      const int n0 = 2 + static_cast<int>(sub.next_u64() % 3);
      const int l = 1 + static_cast<int>(sub.next_u64() % 2);
      const int c = n0 + 1 + static_cast<int>(sub.next_u64() % 5);
      const int mask = (n0 >= 3 && sub.next_u64() % 2) ? 3 : 1;
      const int p = 1 + static_cast<int>(sub.next_u64() % 4);
      const auto spec = detail::verify_conv(
          n0, std::vector<int>(static_cast<std::size_t>(l) + 1, c), mask);
      std::vector<Matrix> x;
      for (int mu = 0; mu < p; ++mu)
        x.push_back(detail::verify_normal_matrix(c, n0, sub));
      const auto qs = sample_conv_mixing(spec, sub);
      const SpdMatrix tq = backward_tmap(spec, qs);
      const SpdMatrix kc = kernel_conv(spec, x, tq);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(kc.matrix());
      min_eigenvalue = std::min(min_eigenvalue, eig.eigenvalues()[0]);
    }
  }

  out.pass = worst_laplace_z <= 4.0 && worst_spectrum_rel <= 1e-8 &&
             min_eigenvalue >= -1e-10;
  out.details = "laplace max |z| " + detail::fmt(worst_laplace_z) +
                " (4); spectrum rel " + detail::fmt(worst_spectrum_rel) +
                " (1e-8); kernel min eigenvalue " +
                detail::fmt(min_eigenvalue) + " (-1e-10)";
  return out;
}

// 9. Determinism: every computing subcommand reproduces its numeric report
// payload byte for byte on re-run and across worker counts.
inline CriterionResult verify_determinism() {
  CriterionResult out{"report-determinism", false, ""};
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() /
      ("dlnk-verify-" +
       std::to_string(static_cast<unsigned long long>(
           std::chrono::steady_clock::now().time_since_epoch().count())));
  fs::create_directories(dir);
  struct Cleanup {
    fs::path dir;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(dir, ec);
    }
  } cleanup{dir};

  {
    std::ofstream train(dir / "train.csv");
    train << "x_1,x_2,y_1\n1.0,0.5,0.9\n-0.3,1.1,-0.6\n0.7,-0.8,0.4\n";
    std::ofstream test(dir / "test.csv");
    test << "x_1,x_2\n0.2,0.4\n";
    std::ofstream conv_train(dir / "train.json");
    conv_train << "{\"x\": [[[1.0, 0.5, -0.2], [0.3, -0.4, 0.8]], "
                  "[[0.6, -0.1, 0.2], [-0.5, 0.9, 0.1]]], "
                  "\"y\": [0.5, -0.3]}\n";
  }

  auto base = [&](Command command) {
    RunConfig cfg;
    cfg.command = command;
    cfg.config_dir = dir;
    cfg.seed = 7;
    cfg.n_samples = 20000;
    cfg.n_steps = 5000;
    cfg.kind = ArchitectureKind::fc;
    cfg.fc = detail::verify_fc(2, 1, {5});
    return cfg;
  };

  std::vector<RunConfig> cases;
  {
    RunConfig c = base(Command::sample_prior);
    c.train_path = "train.csv";
    cases.push_back(c);
  }
  {
    RunConfig c = base(Command::predict);
    c.train_path = "train.csv";
    c.test_path = "test.csv";
    c.beta = 4.0;
    c.beta_set = true;
    cases.push_back(c);
  }
  {
    RunConfig c = base(Command::evidence);
    c.train_path = "train.csv";
    c.beta = 4.0;
    c.beta_set = true;
    c.evidence.mode = "finite-beta";
    c.evidence.method = "monte-carlo";
    c.evidence.compare = "quadrature";
    c.evidence.mc_draws = 50000;
    cases.push_back(c);
  }
  {
    RunConfig c = base(Command::ldp);
    c.ldp.objective = "lazy";
    c.ldp.ladder = {8, 32};
    c.ldp.probe_draws = 5000;
    cases.push_back(c);
  }
  {
    RunConfig c = base(Command::sample_prior);
    c.kind = ArchitectureKind::conv;
    c.conv = detail::verify_conv(3, {2, 5}, 3);
    c.train_path = "train.json";
    c.n_samples = 10000;
    cases.push_back(c);
  }

  int checked = 0;
  for (RunConfig& cfg : cases) {
    cfg.threads = 1;
    const std::string first = payload_string(run_command(cfg));
    const std::string rerun = payload_string(run_command(cfg));
    cfg.threads = 4;
    const std::string wide = payload_string(run_command(cfg));
    if (first != rerun) {
      out.details = std::string(to_string(cfg.command)) +
                    ": payload changed between identical runs";
      return out;
    }
    if (first != wide) {
      out.details = std::string(to_string(cfg.command)) +
                    ": payload depends on the worker count";
      return out;
    }
    ++checked;
  }
  out.pass = true;
  out.details = std::to_string(checked) +
                " command configurations byte-identical across re-runs and "
                "worker counts";
  return out;
}

inline std::vector<CriterionResult> run_acceptance_suite(int threads = 0) {
  std::vector<CriterionResult> results;
  results.push_back(verify_fc_prior_equivalence(threads));
  results.push_back(verify_conv_prior_equivalence(threads));
  results.push_back(verify_predictive_oracle(threads));
  results.push_back(verify_mixing_quadrature_oracle(threads));
  results.push_back(verify_evidence_consistency(threads));
  results.push_back(verify_rate_function_suite(threads));
  results.push_back(verify_concentration_scaling(threads));
  results.push_back(verify_structure_lemmas(threads));
  results.push_back(verify_determinism());
  return results;
}

}  // namespace dlnk
