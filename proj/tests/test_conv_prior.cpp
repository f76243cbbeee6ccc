#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dlnk/conv.hpp"
#include "dlnk/montecarlo.hpp"
#include "test_util.hpp"

using dlnk::ConvNetworkSpec;
using dlnk::Matrix;
using dlnk::MomentAccumulator;
using dlnk::RngStream;
using dlnk::SpdMatrix;
using dlnk::TranslationOp;
using dlnk::Vector;
using dlnk_test::random_matrix;
using dlnk_test::random_spd;

namespace {

ConvNetworkSpec make_spec(Eigen::Index n0, std::vector<int> channels,
                          int mask, double lambda = 1.0) {
  ConvNetworkSpec s;
  s.n0 = n0;
  s.channels = std::move(channels);
  s.mask = mask;
  s.precisions.assign(s.channels.size(), lambda);
  return s;
}

std::vector<Matrix> random_inputs(Eigen::Index c0, Eigen::Index n0,
                                  Eigen::Index p, RngStream& rng) {
  std::vector<Matrix> x;
  for (Eigen::Index mu = 0; mu < p; ++mu) x.push_back(random_matrix(c0, n0, rng));
  return x;
}

}  // namespace

TEST_CASE("translation operators are cyclic permutations") {
  for (int m : {-2, -1, 0, 1, 2}) {
    const Matrix t = TranslationOp{m, 5}.matrix();
    REQUIRE((t.transpose() * t - Matrix::Identity(5, 5)).norm() < 1e-15);
    REQUIRE(t.sum() == 5.0);
    // Row i has its unit at column (i + m) mod 5.
    for (Eigen::Index i = 0; i < 5; ++i) {
      const Eigen::Index j = ((i + m) % 5 + 5) % 5;
      REQUIRE(t(i, j) == 1.0);
    }
  }
}

TEST_CASE("translation_average matches its matrix-form definition") {
  RngStream rng(50, 0);
  for (int mask : {1, 3, 5}) {
    const SpdMatrix q = random_spd(5, rng);
    Matrix want = Matrix::Zero(5, 5);
    for (int m = -(mask / 2); m <= mask / 2; ++m) {
      const Matrix t = TranslationOp{m, 5}.matrix();
      want += t.transpose() * q.matrix() * t;
    }
    want /= mask;
    const Matrix got = dlnk::translation_average(q, mask).matrix();
    REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("translation_average fixed points and projections") {
  RngStream rng(51, 0);
  const SpdMatrix q = random_spd(4, rng);
  // Mask 1 is the identity map.
  REQUIRE((dlnk::translation_average(q, 1).matrix() - q.matrix())
              .cwiseAbs()
              .maxCoeff() == 0.0);
  // The identity matrix is fixed for every mask width.
  for (int mask : {1, 3}) {
    const Matrix got =
        dlnk::translation_average(SpdMatrix::identity(4), mask).matrix();
    REQUIRE((got - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-15);
  }
  // Full-width averaging over an odd cycle yields a circulant: constant
  // wrapped diagonals.
  const SpdMatrix q5 = random_spd(5, rng);
  const Matrix c = dlnk::translation_average(q5, 5).matrix();
  for (Eigen::Index d = 0; d < 5; ++d) {
    const double ref = c(0, d);
    for (Eigen::Index i = 1; i < 5; ++i)
      REQUIRE(std::abs(c(i, (i + d) % 5) - ref) < 1e-13);
  }
}

TEST_CASE("backward_tmap fixed point and explicit two-layer unroll") {
  const auto spec1 = make_spec(4, {2, 6, 6}, 3);
  std::vector<SpdMatrix> ones(2, SpdMatrix::identity(4));
  const Matrix fixed = dlnk::backward_tmap(spec1, ones).matrix();
  REQUIRE((fixed - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);

  RngStream rng(52, 0);
  const SpdMatrix q1 = random_spd(4, rng);
  const SpdMatrix q2 = random_spd(4, rng);
  const SpdMatrix qstar2 = dlnk::translation_average(q2, 3);
  const Matrix l2 = dlnk::cholesky(qstar2).lower();
  const Matrix want =
      dlnk::translation_average(SpdMatrix(l2 * q1.matrix() * l2.transpose()), 3)
          .matrix();
  const Matrix got = dlnk::backward_tmap(spec1, {q1, q2}).matrix();
  REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-12);

  // Depth one reduces to a single averaging pass.
  const auto spec2 = make_spec(4, {2, 6}, 3);
  const Matrix got1 = dlnk::backward_tmap(spec2, {q1}).matrix();
  REQUIRE((got1 - dlnk::translation_average(q1, 3).matrix())
              .cwiseAbs()
              .maxCoeff() < 1e-13);
}

TEST_CASE("backward_tmap preserves positive definiteness") {
  RngStream rng(53, 0);
  for (int k = 0; k < 200; ++k) {
    RngStream sub = rng.substream(k);
    const int depth = 1 + static_cast<int>(sub.next_u64() % 3);
    const int mask = (sub.next_u64() % 2 == 0) ? 1 : 3;
    const auto spec =
        make_spec(3, std::vector<int>(static_cast<std::size_t>(depth) + 1, 5),
                  mask);
    std::vector<SpdMatrix> qs;
    for (int l = 0; l < depth; ++l) qs.push_back(random_spd(3, sub, 0.05));
    const SpdMatrix t = dlnk::backward_tmap(spec, qs);
    REQUIRE_NOTHROW(dlnk::cholesky(t));
  }
}

TEST_CASE("kernel_conv with identity propagator is a channel-summed gram") {
  const auto spec = make_spec(4, {3, 6}, 3, 1.7);
  RngStream rng(54, 0);
  const auto x = random_inputs(3, 4, 3, rng);
  const SpdMatrix k =
      dlnk::kernel_conv(spec, x, SpdMatrix::identity(4));
  for (Eigen::Index mu = 0; mu < 3; ++mu)
    for (Eigen::Index nu = 0; nu < 3; ++nu) {
      double want = 0;
      for (Eigen::Index a = 0; a < 3; ++a)
        want += x[static_cast<std::size_t>(mu)].row(a).dot(
            x[static_cast<std::size_t>(nu)].row(a));
      want /= spec.lambda_star() * 3.0 * 4.0;
      REQUIRE(std::abs(k(mu, nu) - want) < 1e-12);
    }
}

TEST_CASE("kernel_conv stays positive semidefinite for definite propagators") {
  RngStream rng(55, 0);
  for (int k = 0; k < 100; ++k) {
    RngStream sub = rng.substream(k);
    const auto spec = make_spec(3, {2, 5}, 3);
    const auto x = random_inputs(2, 3, 4, sub);
    const SpdMatrix tq = random_spd(3, sub, 0.05);
    const SpdMatrix kc = dlnk::kernel_conv(spec, x, tq);
    Eigen::SelfAdjointEigenSolver<Matrix> es(kc.matrix());
    REQUIRE(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("conv_forward special cases") {
  // Scalar channels with unit taps and unit readout: S = sum_i x_i / sqrt(N_0).
  const auto spec = make_spec(4, {1, 1, 1}, 1);
  dlnk::ConvWeights w;
  w.layers = {{Matrix::Ones(1, 1)}, {Matrix::Ones(1, 1)}};
  w.readout = Matrix::Ones(1, 4);
  std::vector<Matrix> x = {Matrix::Zero(1, 4)};
  x[0] << 1.0, 2.0, 3.0, 4.0;
  const Vector s = dlnk::conv_forward(spec, w, x);
  REQUIRE(std::abs(s[0] - 10.0 / 2.0) < 1e-14);

  // Zero inputs map to zero outputs regardless of the weights.
  RngStream rng(56, 0);
  const auto spec2 = make_spec(3, {2, 4, 4}, 3);
  const auto w2 = dlnk::sample_conv_weights(spec2, rng);
  const Vector s2 =
      dlnk::conv_forward(spec2, w2, {Matrix::Zero(2, 3), Matrix::Zero(2, 3)});
  REQUIRE(s2.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conv_forward agrees with a literal index-sum oracle") {
  const auto spec = make_spec(4, {2, 5, 3}, 3, 1.4);
  RngStream rng(57, 0);
  const auto w = dlnk::sample_conv_weights(spec, rng);
  const auto x = random_inputs(2, 4, 3, rng);
  const Vector s = dlnk::conv_forward(spec, w, x);

  const int half = 1;
  for (std::size_t mu = 0; mu < x.size(); ++mu) {
    Matrix h = x[mu];
    for (std::size_t l = 0; l < 2; ++l) {
      const Eigen::Index c_out = w.layers[l][0].rows();
      const Eigen::Index c_in = h.rows();
      Matrix next = Matrix::Zero(c_out, 4);
      for (Eigen::Index a = 0; a < c_out; ++a)
        for (Eigen::Index i = 0; i < 4; ++i)
          for (int m = -half; m <= half; ++m)
            for (Eigen::Index b = 0; b < c_in; ++b)
              next(a, i) += w.layers[l][static_cast<std::size_t>(m + half)](a, b) *
                            h(b, (i + m + 4) % 4);
      h = next / std::sqrt(3.0 * static_cast<double>(c_in));
    }
    double out = 0;
    for (Eigen::Index a = 0; a < 3; ++a)
      for (Eigen::Index i = 0; i < 4; ++i) out += w.readout(a, i) * h(a, i);
    out /= std::sqrt(3.0 * 4.0);
    REQUIRE(std::abs(s[static_cast<Eigen::Index>(mu)] - out) < 1e-12);
  }
}

TEST_CASE("conv spec validation") {
  REQUIRE_THROWS_AS(make_spec(4, {2, 5}, 2).validate(), dlnk::ConfigError);
  REQUIRE_THROWS_AS(make_spec(4, {2, 5}, 5).validate(), dlnk::ConfigError);
  REQUIRE_THROWS_AS(make_spec(4, {2}, 1).validate(), dlnk::ConfigError);
  REQUIRE_NOTHROW(make_spec(4, {2, 5}, 3).validate());

  const auto narrow = make_spec(4, {2, 3}, 3);  // C_1 = 3 <= N_0 = 4
  RngStream rng(58, 0);
  REQUIRE_THROWS_AS(
      dlnk::sample_prior_conv_mixture(narrow, random_inputs(2, 4, 1, rng), 1,
                                      rng),
      dlnk::DofTooSmall);
}

TEST_CASE("conv mixture and weight-space samplers agree in law") {
  struct Cfg {
    int l, n0, c, m, p;
  };
  for (const Cfg cfg :
       {Cfg{1, 2, 4, 1, 2}, Cfg{1, 3, 8, 3, 4}, Cfg{2, 3, 6, 3, 3}}) {
    std::vector<int> channels{2};
    for (int l = 0; l < cfg.l; ++l) channels.push_back(cfg.c);
    const auto spec = make_spec(cfg.n0, channels, cfg.m, 1.1);
    RngStream setup(59, static_cast<std::uint64_t>(cfg.l * 100 + cfg.n0));
    const auto x = random_inputs(2, cfg.n0, cfg.p, setup);

    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < cfg.p; ++i)
      for (int j = i + 1; j < cfg.p; ++j) pairs.emplace_back(i, j);
    MomentAccumulator a(cfg.p, pairs), b(cfg.p, pairs);
    const int n = 30000;
    RngStream ra(60, 0), rb(61, 0);
    for (int k = 0; k < n; ++k) {
      RngStream s1 = ra.substream(k), s2 = rb.substream(k);
      a.add(dlnk::sample_prior_conv_weightspace_one(spec, x, s1));
      b.add(dlnk::sample_prior_conv_mixture_one(spec, x, s2));
    }
    for (int i = 0; i < cfg.p; ++i) {
      REQUIRE(dlnk::z_score(a.first(i), b.first(i)) <= 4.0);
      REQUIRE(dlnk::z_score(a.second(i), b.second(i)) <= 4.0);
      REQUIRE(dlnk::z_score(a.fourth(i), b.fourth(i)) <= 4.0);
    }
    for (std::size_t k = 0; k < pairs.size(); ++k)
      REQUIRE(dlnk::z_score(a.cross(k), b.cross(k)) <= 4.0);
  }
}

TEST_CASE("single-layer mixture covariance equals the averaged-identity kernel") {
  // For depth 1 the propagator average is linear in Q, so the exact second
  // moment of the mixture equals the kernel at E[T(Q)] = I for every width.
  const auto spec = make_spec(3, {2, 5}, 3, 0.8);
  RngStream setup(62, 0);
  const auto x = random_inputs(2, 3, 3, setup);
  const Matrix want =
      dlnk::kernel_conv(spec, x, SpdMatrix::identity(3)).matrix();

  std::vector<std::pair<int, int>> pairs{{0, 1}, {0, 2}, {1, 2}};
  MomentAccumulator acc(3, pairs);
  const int n = 60000;
  RngStream rng(63, 0);
  for (int k = 0; k < n; ++k) {
    RngStream sub = rng.substream(k);
    acc.add(dlnk::sample_prior_conv_mixture_one(spec, x, sub));
  }
  for (int i = 0; i < 3; ++i) {
    const auto st = acc.second(i);
    REQUIRE(std::abs(st.mean - want(i, i)) <= 4.0 * st.std_error);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const auto st = acc.cross(k);
    REQUIRE(std::abs(st.mean - want(pairs[k].first, pairs[k].second)) <=
            4.0 * st.std_error);
  }
}

TEST_CASE("wide channels concentrate the deep propagator on identity") {
  // Law of large numbers: every Wishart factor tends to identity, and the
  // two-layer mixture covariance approaches the identity-propagator kernel
  // with an O(1/C) bias budget on top of the Monte Carlo band.
  const int c = 600;
  const auto spec = make_spec(3, {2, c, c}, 3, 1.0);
  RngStream setup(64, 0);
  const auto x = random_inputs(2, 3, 2, setup);
  const Matrix want =
      dlnk::kernel_conv(spec, x, SpdMatrix::identity(3)).matrix();

  MomentAccumulator acc(2, {{0, 1}});
  const int n = 20000;
  RngStream rng(65, 0);
  for (int k = 0; k < n; ++k) {
    RngStream sub = rng.substream(k);
    acc.add(dlnk::sample_prior_conv_mixture_one(spec, x, sub));
  }
  const double bias = 5.0 / c;
  for (int i = 0; i < 2; ++i) {
    const auto st = acc.second(i);
    REQUIRE(std::abs(st.mean - want(i, i)) <=
            4.0 * st.std_error + bias * std::abs(want(i, i)));
  }
  const auto st = acc.cross(0);
  REQUIRE(std::abs(st.mean - want(0, 1)) <=
          4.0 * st.std_error + bias * want.cwiseAbs().maxCoeff());
}

TEST_CASE("output law is invariant under cyclic input shifts") {
  const auto spec = make_spec(4, {2, 6}, 3, 1.0);
  RngStream setup(66, 0);
  const auto x = random_inputs(2, 4, 2, setup);
  std::vector<Matrix> xs;  // every example shifted one site to the right
  for (const auto& xe : x) {
    Matrix m(xe.rows(), xe.cols());
    for (Eigen::Index j = 0; j < xe.cols(); ++j)
      m.col((j + 1) % xe.cols()) = xe.col(j);
    xs.push_back(m);
  }
  MomentAccumulator a(2, {{0, 1}}), b(2, {{0, 1}});
  const int n = 40000;
  RngStream ra(67, 0), rb(68, 0);
  for (int k = 0; k < n; ++k) {
    RngStream s1 = ra.substream(k), s2 = rb.substream(k);
    a.add(dlnk::sample_prior_conv_weightspace_one(spec, x, s1));
    b.add(dlnk::sample_prior_conv_weightspace_one(spec, xs, s2));
  }
  for (int i = 0; i < 2; ++i) {
    REQUIRE(dlnk::z_score(a.first(i), b.first(i)) <= 4.0);
    REQUIRE(dlnk::z_score(a.second(i), b.second(i)) <= 4.0);
  }
  REQUIRE(dlnk::z_score(a.cross(0), b.cross(0)) <= 4.0);
}

TEST_CASE("determinant contraction identity for rank-one spatial couplings") {
  RngStream rng(69, 0);
  // Trivial cases first: s = 0 gives det = 1 on both sides.
  {
    const int n0 = 3, p = 2;
    const Matrix k = random_spd(n0 * p, rng).matrix();
    const auto chk = dlnk::spectrum_lemma_check(k, Vector::Zero(p));
    REQUIRE(chk.lhs == Catch::Approx(1.0).margin(1e-14));
    REQUIRE(chk.rhs == Catch::Approx(1.0).margin(1e-14));
  }
  // Identity coupling: both sides equal (1 + |s|^2)^{N_0}.
  {
    const int n0 = 4, p = 3;
    Vector s(p);
    s << 0.5, -1.0, 2.0;
    const auto chk =
        dlnk::spectrum_lemma_check(Matrix::Identity(n0 * p, n0 * p), s);
    const double want = std::pow(1.0 + s.squaredNorm(), n0);
    REQUIRE(std::abs(chk.lhs - want) / want < 1e-12);
    REQUIRE(std::abs(chk.rhs - want) / want < 1e-12);
  }
  // Random instances: the two determinants agree to near machine precision.
  for (int t = 0; t < 50; ++t) {
    RngStream sub = rng.substream(t);
    const int n0 = 2 + static_cast<int>(sub.next_u64() % 3);
    const int p = 1 + static_cast<int>(sub.next_u64() % 4);
    const Matrix k = random_spd(n0 * p, sub, 0.02).matrix();
    Vector s(p);
    for (int i = 0; i < p; ++i) s[i] = sub.normal();
    const auto chk = dlnk::spectrum_lemma_check(k, s);
    REQUIRE(std::abs(chk.lhs - chk.rhs) / std::abs(chk.rhs) < 1e-8);
  }
}
