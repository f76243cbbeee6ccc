// Oracle-backed tests for the scalar-output evidence chain and its numerical
// building blocks: Gauss-Laguerre rules, adaptive panel quadrature, the
// Macdonald function, the tabulated product-of-gammas density, and the
// finite- and zero-temperature evidence estimators.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dlnk/bessel.hpp"
#include "dlnk/evidence.hpp"
#include "dlnk/gamma_product.hpp"
#include "dlnk/posterior.hpp"
#include "dlnk/quadrature.hpp"
#include "test_util.hpp"

using dlnk::EvidenceMethod;
using dlnk::Matrix;
using dlnk::RngStream;
using dlnk::Vector;

namespace {

dlnk::FcNetworkSpec make_fc(int n0, std::vector<int> widths) {
  dlnk::FcNetworkSpec spec;
  spec.n0 = n0;
  spec.d = 1;
  spec.widths = std::move(widths);
  spec.precisions.assign(spec.widths.size() + 1, 1.0);
  return spec;
}

struct Instance {
  dlnk::FcNetworkSpec spec;
  Matrix x;
  Vector y;
};

Instance make_instance(int n0, std::vector<int> widths, int p,
                       std::uint64_t seed) {
  Instance inst;
  inst.spec = make_fc(n0, std::move(widths));
  RngStream rng(seed, 0);
  inst.x = Matrix(n0, p);
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < p; ++j) inst.x(i, j) = rng.normal();
  inst.y = Vector(p);
  for (int j = 0; j < p; ++j) inst.y[j] = 1.5 * rng.normal();
  return inst;
}

// Direct evaluation of the Gaussian-process log evidence with kernel
// x^T x / (n0 lambda*) and observation precision beta, i.e. the q -> 1
// limit of the mixture: -(1/2)[y^T (K + I/beta)^{-1} y + logdet(I + beta K)].
double gp_log_evidence(const Instance& inst, double beta) {
  const Matrix k = inst.x.transpose() * inst.x /
                   (static_cast<double>(inst.spec.n0) *
                    inst.spec.lambda_star());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
  const Vector c = eig.eigenvectors().transpose() * inst.y;
  double phi = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    phi += c[i] * c[i] / (eig.eigenvalues()[i] + 1.0 / beta) +
           std::log1p(beta * eig.eigenvalues()[i]);
  }
  return -0.5 * phi;
}

double gamma_log_pdf(double a, double rate, double q) {
  return a * std::log(rate) - std::lgamma(a) + (a - 1.0) * std::log(q) -
         rate * q;
}

}  // namespace

TEST_CASE("gauss-laguerre rules integrate weighted monomials exactly") {
  for (const double alpha : {0.0, 0.5, 2.0, 7.25}) {
    for (const int n : {4, 8, 16}) {
      const auto rule = dlnk::gauss_laguerre(n, alpha);
      REQUIRE(rule.nodes.size() == n);
      CHECK(rule.weights.sum() == Catch::Approx(1.0).epsilon(1e-13));
      CHECK(rule.nodes.minCoeff() > 0.0);
      // Expectation of x^k against the normalized Gamma(alpha + 1, 1) weight
      // is the rising factorial (alpha + 1)_k; the rule is exact through
      // degree 2n - 1.
      for (int k = 1; k <= std::min(2 * n - 1, 9); ++k) {
        const double got =
            (rule.weights.array() * rule.nodes.array().pow(k)).sum();
        const double want =
            std::exp(std::lgamma(alpha + 1.0 + k) - std::lgamma(alpha + 1.0));
        CHECK(got == Catch::Approx(want).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("gamma expectation rules reproduce mean-one gamma moments") {
  for (const double dof : {3.0, 6.0, 11.0, 40.0}) {
    const auto rule = dlnk::gamma_expectation_rule(dof, 12);
    const double a = 0.5 * dof;
    for (int k = 1; k <= 3; ++k) {
      double want = 1.0;
      for (int j = 0; j < k; ++j) want *= (a + j) / a;
      const double got =
          (rule.weights.array() * rule.nodes.array().pow(k)).sum();
      CHECK(got == Catch::Approx(want).epsilon(1e-11));
    }
  }
  CHECK_THROWS_AS(dlnk::gauss_laguerre(0, 0.0), dlnk::ConfigError);
  CHECK_THROWS_AS(dlnk::gauss_laguerre(8, -1.0), dlnk::ConfigError);
}

TEST_CASE("adaptive panel quadrature matches closed forms") {
  const auto sine = dlnk::integrate_adaptive(
      [](double t) { return std::sin(t); }, 0.0, std::acos(-1.0), 1e-12);
  CHECK(sine.converged);
  CHECK(sine.value == Catch::Approx(2.0).epsilon(1e-12));

  const auto power = dlnk::integrate_adaptive(
      [](double t) { return std::pow(t, 1.5); }, 0.0, 1.0, 1e-11);
  CHECK(power.value == Catch::Approx(0.4).epsilon(1e-9));

  const auto gauss = dlnk::integrate_adaptive(
      [](double t) { return std::exp(-0.5 * t * t); }, -8.0, 8.0, 1e-12);
  CHECK(gauss.value ==
        Catch::Approx(std::sqrt(2.0 * std::acos(-1.0))).epsilon(1e-12));
}

TEST_CASE("adaptive quadrature reports budget exhaustion instead of lying") {
  const auto capped = dlnk::integrate_adaptive(
      [](double t) { return std::sin(50.0 * t) * std::sin(50.0 * t); }, 0.0,
      20.0, 1e-13, 0.0, 100);
  CHECK_FALSE(capped.converged);
  CHECK(capped.error_estimate > 0.0);

  CHECK_THROWS_AS(
      dlnk::integrate_adaptive([](double) { return 1.0; }, 1.0, 1.0, 1e-8),
      dlnk::ConfigError);
  CHECK_THROWS_AS(
      dlnk::integrate_adaptive([](double) { return 1.0; }, 0.0, 1.0, 0.0),
      dlnk::ConfigError);
  CHECK_THROWS_AS(dlnk::integrate_adaptive(
                      [](double t) { return 1.0 / t; }, 0.0, 1.0, 1e-8),
                  dlnk::NonFiniteObjective);
}

TEST_CASE("log Macdonald function matches the standard library on a grid") {
  for (const double nu : {0.0, 1.0 / 3.0, 0.5, 1.0, 2.0, 5.25, 9.0, 15.0}) {
    for (const double x : {0.05, 0.3, 1.0, 2.5, 10.0, 50.0, 200.0}) {
      const double want = std::log(std::cyl_bessel_k(nu, x));
      const double got = dlnk::log_bessel_k(nu, x);
      INFO("nu=" << nu << " x=" << x);
      CHECK(std::abs(got - want) <= 1e-11 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("log Macdonald function handles extreme arguments") {
  // Half-integer order has the elementary form sqrt(pi/(2x)) e^{-x}.
  for (const double x : {1e-8, 1e-2, 1.0, 40.0, 700.0}) {
    const double want = 0.5 * std::log(std::acos(-1.0) / (2.0 * x)) - x;
    CHECK(dlnk::log_bessel_k(0.5, x) ==
          Catch::Approx(want).margin(1e-10 * std::max(1.0, std::abs(want))));
  }
  // Small-argument, large-order asymptote K_nu(x) ~ Gamma(nu)/2 (2/x)^nu.
  for (const double nu : {8.0, 25.0}) {
    for (const double x : {1e-6, 1e-4}) {
      const double want = std::log(0.5) + std::lgamma(nu) +
                          nu * std::log(2.0 / x);
      CHECK(dlnk::log_bessel_k(nu, x) ==
            Catch::Approx(want).epsilon(1e-9));
    }
  }
  // Deep underflow territory for the unscaled function.
  const double tiny = dlnk::log_bessel_k(2.0, 1e-290);
  const double tiny_want = std::log(0.5) + std::lgamma(2.0) +
                           2.0 * std::log(2.0 / 1e-290);
  CHECK(tiny == Catch::Approx(tiny_want).epsilon(1e-12));
  // Order symmetry and domain checks.
  CHECK(dlnk::log_bessel_k(-3.5, 2.0) ==
        Catch::Approx(dlnk::log_bessel_k(3.5, 2.0)));
  CHECK_THROWS_AS(dlnk::log_bessel_k(1.0, 0.0), dlnk::ConfigError);
  CHECK_THROWS_AS(dlnk::log_bessel_k(1.0, -2.0), dlnk::ConfigError);
}

TEST_CASE("single-factor product density is the exact gamma density") {
  for (const double dof : {3.0, 8.0}) {
    const dlnk::GammaProductDensity density({dof});
    CHECK(density.normalization_defect() <= 1e-6);
    const double a = 0.5 * dof;
    for (const double q : {0.2, 0.5, 1.0, 1.7, 3.0}) {
      const double want = std::exp(gamma_log_pdf(a, a, q));
      CHECK(density.density(q) == Catch::Approx(want).epsilon(1e-6));
    }
    CHECK(density.density(0.0) == 0.0);
    CHECK(density.density(-1.0) == 0.0);
  }
}

TEST_CASE("product density normalizes and reproduces product moments") {
  const std::vector<std::vector<double>> stacks = {{6.0, 8.0},
                                                   {4.0, 7.0, 12.0}};
  for (const auto& dofs : stacks) {
    const dlnk::GammaProductDensity density(dofs);
    CHECK(density.normalization_defect() <= 1e-6);
    auto moment = [&](double k) {
      return dlnk::integrate_adaptive(
                 [&](double t) {
                   return std::exp(density.log_density_t(t) + k * t);
                 },
                 density.t_lower(), density.t_upper(), 1e-10)
          .value;
    };
    double second = 1.0;
    for (const double dof : dofs) second *= 1.0 + 2.0 / dof;
    CHECK(moment(0.0) == Catch::Approx(1.0).epsilon(5e-6));
    CHECK(moment(1.0) == Catch::Approx(1.0).epsilon(5e-6));
    CHECK(moment(2.0) == Catch::Approx(second).epsilon(5e-6));
  }
}

TEST_CASE("two-factor product density matches a Monte Carlo histogram") {
  const std::vector<double> dofs = {5.0, 9.0};
  const dlnk::GammaProductDensity density(dofs);
  RngStream rng(2024, 3);
  const int n = 500000;
  const double lo = -2.5, hi = 1.5;
  const int bins = 32;
  std::vector<double> counts(bins, 0.0);
  for (int i = 0; i < n; ++i) {
    double t = 0.0;
    for (const double dof : dofs)
      t += std::log(rng.gamma(0.5 * dof) / (0.5 * dof));
    if (t >= lo && t < hi)
      counts[static_cast<int>((t - lo) / (hi - lo) * bins)] += 1.0;
  }
  const double width = (hi - lo) / bins;
  double worst = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double mid = lo + (b + 0.5) * width;
    const double empirical = counts[b] / n / width;
    const double exact = std::exp(density.log_density_t(mid));
    worst = std::max(worst, std::abs(empirical - exact));
  }
  CHECK(worst <= 0.015);
}

TEST_CASE("product density rejects invalid configurations") {
  CHECK_THROWS_AS(dlnk::GammaProductDensity({}), dlnk::ConfigError);
  CHECK_THROWS_AS(dlnk::GammaProductDensity({0.0}), dlnk::ConfigError);
  CHECK_THROWS_AS(dlnk::GammaProductDensity({4.0, -1.0}), dlnk::ConfigError);
  CHECK(dlnk::gamma_product_density({6.0}, 1.0) ==
        Catch::Approx(std::exp(gamma_log_pdf(3.0, 3.0, 1.0))).epsilon(1e-6));
}

TEST_CASE("label energy statistic matches hand reductions") {
  // One training point: omega = (y^2 n0 lambda* / |x|^2) prod(N_l) 2^{-L-1}.
  const auto spec = make_fc(4, {6, 8});
  Matrix x(4, 1);
  x << 1.0, 2.0, -1.0, 0.5;
  Vector y(1);
  y << 3.0;
  const double want =
      (9.0 * 4.0 / x.squaredNorm()) * (6.0 / 2.0) * (8.0 / 2.0) / 2.0;
  CHECK(dlnk::omega(x, y, spec).omega == Catch::Approx(want).epsilon(1e-12));

  // Zero labels give zero energy; scaling labels scales it quadratically.
  CHECK(dlnk::omega(x, Vector::Zero(1), spec).omega == 0.0);
  CHECK(dlnk::omega(x, Vector(2.0 * y), spec).omega ==
        Catch::Approx(4.0 * want).epsilon(1e-12));

  // Rank failures: more examples than inputs, or repeated examples.
  const auto inst = make_instance(3, {6}, 3, 11);
  Matrix wide(3, 4);
  wide.setRandom();
  CHECK_THROWS_AS(dlnk::omega(wide, Vector::Ones(4), inst.spec),
                  dlnk::SingularGram);
  Matrix repeated = inst.x;
  repeated.col(2) = repeated.col(0);
  CHECK_THROWS_AS(dlnk::omega(repeated, inst.y, inst.spec),
                  dlnk::SingularGram);

  auto multi = make_fc(4, {6});
  multi.d = 2;
  CHECK_THROWS_AS(dlnk::omega(x, y, multi), dlnk::ConfigError);
}

TEST_CASE("single-layer limit evidence: closed form, log-convolution and "
          "Monte Carlo agree") {
  const auto inst = make_instance(4, {6}, 3, 42);
  const auto bessel = dlnk::evidence_zero_temperature(
      inst.spec, inst.x, inst.y, EvidenceMethod::bessel_closed_form);
  const auto conv = dlnk::evidence_zero_temperature(
      inst.spec, inst.x, inst.y, EvidenceMethod::log_convolution);
  const auto mc = dlnk::evidence_zero_temperature(
      inst.spec, inst.x, inst.y, EvidenceMethod::monte_carlo, 400000,
      RngStream(7, 1));
  CHECK(bessel.method == EvidenceMethod::bessel_closed_form);
  CHECK(std::abs(bessel.log_value - conv.log_value) <= 1e-6);
  CHECK(std::abs(bessel.log_value - mc.log_value) <=
        4.0 * mc.error_estimate);
  // Same agreement on a stiffer instance (larger labels).
  auto hard = inst;
  hard.y *= 3.0;
  const auto hb = dlnk::evidence_zero_temperature(
      hard.spec, hard.x, hard.y, EvidenceMethod::bessel_closed_form);
  const auto hc = dlnk::evidence_zero_temperature(
      hard.spec, hard.x, hard.y, EvidenceMethod::log_convolution);
  CHECK(std::abs(hb.log_value - hc.log_value) <= 1e-6);
}

TEST_CASE("two-layer limit evidence: Monte Carlo matches log-convolution to "
          "three significant digits") {
  // Orthogonal design keeps the training gram well conditioned, so the
  // importance weight q^{-P/2} e^{-omega'/q} stays O(1) and the plain prior
  // sampler converges at the plain-MC rate.
  const auto spec = make_fc(4, {6, 8});
  const Matrix x = 2.0 * Matrix::Identity(4, 4);
  Vector y(4);
  y << 1.2, -0.8, 0.5, 1.0;
  const auto conv = dlnk::evidence_zero_temperature(
      spec, x, y, EvidenceMethod::log_convolution);
  const auto mc = dlnk::evidence_zero_temperature(
      spec, x, y, EvidenceMethod::monte_carlo, 16000000, RngStream(21, 2));
  // Three significant digits of the evidence itself is a relative error of
  // 5e-4, i.e. the same bound on the difference of the logs.
  CHECK(std::abs(conv.log_value - mc.log_value) <= 5e-4);
  // The methods also agree within their own reported uncertainties.
  CHECK(std::abs(conv.log_value - mc.log_value) <=
        4.0 * (mc.error_estimate + conv.error_estimate));
}

TEST_CASE("finite-temperature evidence: tensor quadrature matches Monte "
          "Carlo") {
  for (const auto& widths :
       std::vector<std::vector<int>>{{6}, {6, 8}, {4, 5, 7}}) {
    const auto inst = make_instance(4, widths, 3, 44 + widths.size());
    for (const double beta : {0.5, 4.0}) {
      const auto quad = dlnk::evidence_finite_beta(
          inst.spec, inst.x, inst.y, beta, EvidenceMethod::quadrature);
      const auto mc = dlnk::evidence_finite_beta(
          inst.spec, inst.x, inst.y, beta, EvidenceMethod::monte_carlo,
          400000, RngStream(8, widths.size()));
      INFO("L=" << widths.size() << " beta=" << beta);
      if (quad.warnings.empty()) {
        CHECK(quad.error_estimate <= 1e-8);
      }
      CHECK(std::abs(quad.log_value - mc.log_value) <=
            4.0 * std::max(mc.error_estimate + quad.error_estimate, 1e-12));
    }
  }
}

TEST_CASE("rescaled finite-temperature evidence approaches the "
          "zero-temperature limit") {
  const auto inst = make_instance(4, {6}, 3, 45);
  const double beta = 1e4;
  const auto finite = dlnk::evidence_finite_beta(
      inst.spec, inst.x, inst.y, beta, EvidenceMethod::quadrature);
  const auto limit = dlnk::evidence_zero_temperature(
      inst.spec, inst.x, inst.y, EvidenceMethod::bessel_closed_form);
  const double rescaled =
      finite.log_value + 0.5 * inst.x.cols() * std::log(beta);
  CHECK(std::abs(rescaled - limit.log_value) <= std::log(1.01));
}

TEST_CASE("evidence equals the posterior importance-sampling normalizer") {
  const auto inst = make_instance(4, {6}, 3, 46);
  const double beta = 10.0;
  const auto ev = dlnk::evidence_finite_beta(
      inst.spec, inst.x, inst.y, beta, EvidenceMethod::monte_carlo, 400000,
      RngStream(9, 0));
  const auto post = dlnk::posterior_mixing_is(inst.spec, inst.x, inst.y, beta,
                                              200000, RngStream(10, 0));
  const double se_post =
      std::sqrt(std::max(1.0 / post.ess - 1.0 / 200000.0, 0.0));
  const double se = std::sqrt(ev.error_estimate * ev.error_estimate +
                              se_post * se_post);
  CHECK(std::abs(ev.log_value - post.log_normalizer) <= 4.0 * se);
  // The deterministic tensor rule agrees with the same normalizer.
  const auto quad = dlnk::evidence_finite_beta(inst.spec, inst.x, inst.y,
                                               beta,
                                               EvidenceMethod::quadrature);
  CHECK(std::abs(quad.log_value - post.log_normalizer) <= 4.0 * se_post);
}

TEST_CASE("limit evidence decreases as the labels grow") {
  const auto inst = make_instance(4, {6}, 3, 47);
  double prev = std::numeric_limits<double>::infinity();
  for (const double scale : {0.5, 1.0, 2.0, 4.0}) {
    const auto z = dlnk::evidence_zero_temperature(
        inst.spec, inst.x, Vector(scale * inst.y),
        EvidenceMethod::bessel_closed_form);
    CHECK(z.log_value < prev);
    prev = z.log_value;
  }
}

TEST_CASE("wide layers approach the Gaussian-process evidence") {
  auto inst = make_instance(4, {1000000, 1000000}, 3, 48);
  const double beta = 5.0;
  const double gp = gp_log_evidence(inst, beta);
  const auto quad = dlnk::evidence_finite_beta(
      inst.spec, inst.x, inst.y, beta, EvidenceMethod::quadrature);
  const auto mc = dlnk::evidence_finite_beta(
      inst.spec, inst.x, inst.y, beta, EvidenceMethod::monte_carlo, 200000,
      RngStream(11, 0));
  CHECK(std::abs(quad.log_value - gp) <= 5e-4);
  CHECK(std::abs(mc.log_value - gp) <= 5e-4);
}

TEST_CASE("empty training set gives unit evidence") {
  const auto spec = make_fc(3, {5});
  const Matrix x(3, 0);
  const Vector y(0);
  for (const auto method :
       {EvidenceMethod::quadrature, EvidenceMethod::monte_carlo}) {
    const auto z =
        dlnk::evidence_finite_beta(spec, x, y, 2.0, method, 10000);
    CHECK(std::abs(z.log_value) <= 1e-10);
  }
  for (const auto method :
       {EvidenceMethod::monte_carlo, EvidenceMethod::log_convolution,
        EvidenceMethod::bessel_closed_form}) {
    const auto z =
        dlnk::evidence_zero_temperature(spec, x, y, method, 10000);
    CHECK(std::abs(z.log_value) <= 1e-6);
  }
}

TEST_CASE("evidence failure modes are reported") {
  const auto inst = make_instance(4, {6}, 3, 49);
  CHECK_THROWS_AS(
      dlnk::evidence_finite_beta(inst.spec, inst.x, inst.y, 0.0,
                                 EvidenceMethod::quadrature),
      dlnk::ConfigError);
  auto multi = inst.spec;
  multi.d = 2;
  CHECK_THROWS_AS(
      dlnk::evidence_finite_beta(multi, inst.x, inst.y, 1.0,
                                 EvidenceMethod::quadrature),
      dlnk::ConfigError);
  // Tensor rules blow up combinatorially past three layers.
  const auto deep = make_instance(4, {4, 4, 4, 4}, 2, 50);
  CHECK_THROWS_AS(
      dlnk::evidence_finite_beta(deep.spec, deep.x, deep.y, 1.0,
                                 EvidenceMethod::quadrature),
      dlnk::MethodCostExceeded);
  CHECK_NOTHROW(dlnk::evidence_finite_beta(deep.spec, deep.x, deep.y, 1.0,
                                           EvidenceMethod::monte_carlo,
                                           20000));
  // The Macdonald closed form exists only for one hidden layer.
  const auto two = make_instance(4, {6, 8}, 3, 51);
  CHECK_THROWS_AS(
      dlnk::evidence_zero_temperature(two.spec, two.x, two.y,
                                      EvidenceMethod::bessel_closed_form),
      dlnk::ConfigError);
  // Zero labels with P >= min width: the limit integrand is not integrable.
  const auto narrow = make_instance(4, {3}, 3, 52);
  CHECK_THROWS_AS(
      dlnk::evidence_zero_temperature(narrow.spec, narrow.x,
                                      Vector::Zero(3),
                                      EvidenceMethod::monte_carlo, 10000),
      dlnk::IntegrableSingularity);
  // Zero labels below the width threshold reduce to an exact gamma moment.
  const auto wide = make_instance(4, {6}, 2, 53);
  const auto z0 = dlnk::evidence_zero_temperature(
      wide.spec, wide.x, Vector::Zero(2),
      EvidenceMethod::bessel_closed_form);
  const Matrix gram = wide.x.transpose() * wide.x / 4.0;
  const double want = std::log(3.0) + std::lgamma(2.0) - std::lgamma(3.0) -
                      0.5 * std::log(gram.determinant());
  CHECK(z0.log_value == Catch::Approx(want).epsilon(1e-10));
  // Few-sample path warns about the endpoint-singular reparametrization.
  CHECK_FALSE(z0.warnings.empty());
  const auto z3 = dlnk::evidence_zero_temperature(
      inst.spec, inst.x, inst.y, EvidenceMethod::bessel_closed_form);
  CHECK(z3.warnings.empty());
  // Degenerate design matrices are rejected up front.
  Matrix repeated = inst.x;
  repeated.col(1) = repeated.col(0);
  CHECK_THROWS_AS(
      dlnk::evidence_zero_temperature(inst.spec, repeated, inst.y,
                                      EvidenceMethod::monte_carlo, 10000),
      dlnk::SingularGram);
  CHECK_THROWS_AS(dlnk::evidence_finite_beta(inst.spec, inst.x, inst.y, 1.0,
                                             EvidenceMethod::monte_carlo, 1),
                  dlnk::ConfigError);
}

TEST_CASE("Monte Carlo evidence is reproducible and thread-count invariant") {
  const auto inst = make_instance(4, {6, 8}, 3, 54);
  const auto one = dlnk::evidence_zero_temperature(
      inst.spec, inst.x, inst.y, EvidenceMethod::monte_carlo, 60000,
      RngStream(12, 5), 1);
  const auto four = dlnk::evidence_zero_temperature(
      inst.spec, inst.x, inst.y, EvidenceMethod::monte_carlo, 60000,
      RngStream(12, 5), 4);
  CHECK(one.log_value == four.log_value);
  CHECK(one.error_estimate == four.error_estimate);
  const auto other = dlnk::evidence_zero_temperature(
      inst.spec, inst.x, inst.y, EvidenceMethod::monte_carlo, 60000,
      RngStream(13, 5), 4);
  CHECK(one.log_value != other.log_value);
}
