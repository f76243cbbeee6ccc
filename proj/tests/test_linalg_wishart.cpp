#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dlnk/linalg.hpp"
#include "dlnk/montecarlo.hpp"
#include "dlnk/wishart.hpp"
#include "test_util.hpp"

using dlnk::CholeskyFactor;
using dlnk::Matrix;
using dlnk::RngStream;
using dlnk::SpdMatrix;
using dlnk::Vector;
using dlnk_test::random_matrix;
using dlnk_test::random_spd;

TEST_CASE("cholesky of identity and diagonal matrices") {
  const auto id = dlnk::cholesky(SpdMatrix::identity(3));
  REQUIRE((id.lower() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);

  Matrix d(2, 2);
  d << 4, 0, 0, 9;
  const auto f = dlnk::cholesky(SpdMatrix(d));
  REQUIRE(f.lower()(0, 0) == 2.0);
  REQUIRE(f.lower()(1, 1) == 3.0);
  REQUIRE(f.lower()(1, 0) == 0.0);
  REQUIRE(f.lower()(0, 1) == 0.0);
}

TEST_CASE("cholesky reconstructs its input") {
  Matrix a(2, 2);
  a << 2, 1, 1, 2;
  const auto f = dlnk::cholesky(SpdMatrix(a));
  REQUIRE((f.reconstruct() - a).norm() / a.norm() < 1e-12);
  REQUIRE(f.lower()(0, 1) == 0.0);
  REQUIRE(f.lower()(0, 0) > 0.0);
  REQUIRE(f.lower()(1, 1) > 0.0);

  RngStream rng(1, 0);
  for (int k = 0; k < 20; ++k) {
    const SpdMatrix m = random_spd(5, rng);
    const auto g = dlnk::cholesky(m);
    REQUIRE((g.reconstruct() - m.matrix()).norm() / m.matrix().norm() < 1e-10);
    REQUIRE(g.lower().diagonal().minCoeff() > 0.0);
  }
}

TEST_CASE("cholesky rejects indefinite and asymmetric inputs") {
  Matrix ind(2, 2);
  ind << 1, 2, 2, 1;  // eigenvalues 3, -1
  REQUIRE_THROWS_AS(dlnk::cholesky(SpdMatrix(ind)), dlnk::NotPositiveDefinite);

  REQUIRE_THROWS_AS(dlnk::cholesky(SpdMatrix(Matrix::Zero(3, 3))),
                    dlnk::NotPositiveDefinite);

  Matrix asym(2, 2);
  asym << 1, 0.5, 0.2, 1;  // far from symmetric
  REQUIRE_THROWS_AS(SpdMatrix(asym), dlnk::NotPositiveDefinite);

  REQUIRE_THROWS_AS(SpdMatrix(Matrix::Ones(2, 3)), dlnk::ShapeMismatch);

  // A tiny asymmetry below the relative 1e-12 gate is silently symmetrized.
  Matrix nearly(2, 2);
  nearly << 2, 1, 1 + 1e-14, 2;
  const SpdMatrix s(nearly);
  REQUIRE(s(0, 1) == s(1, 0));
}

TEST_CASE("cholesky log-determinant and solves") {
  RngStream rng(2, 0);
  const SpdMatrix m = random_spd(4, rng);
  const auto f = dlnk::cholesky(m);
  REQUIRE(std::abs(f.log_det() - std::log(m.matrix().determinant())) < 1e-9);
  const Vector b = random_matrix(4, 1, rng).col(0);
  const Vector x = f.solve(b);
  REQUIRE((m.matrix() * x - b).norm() < 1e-10);
}

TEST_CASE("kronecker product basics and inverse identity") {
  REQUIRE((dlnk::kron(Matrix::Identity(2, 2), Matrix::Identity(3, 3)) -
           Matrix::Identity(6, 6))
              .norm() == 0.0);

  RngStream rng(3, 0);
  const Matrix b = random_matrix(3, 2, rng);
  Matrix two(1, 1);
  two << 2.0;
  REQUIRE((dlnk::kron(two, b) - 2.0 * b).norm() == 0.0);

  const SpdMatrix a_spd = random_spd(3, rng);
  const SpdMatrix b_spd = random_spd(2, rng);
  const Matrix big = dlnk::kron(a_spd.matrix(), b_spd.matrix());
  const Matrix big_inv =
      dlnk::kron(a_spd.matrix().inverse(), b_spd.matrix().inverse());
  REQUIRE((big * big_inv - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() <
          1e-10);
}

TEST_CASE("wishart sampler rejects dof <= dim") {
  RngStream rng(4, 0);
  REQUIRE_THROWS_AS(
      dlnk::sample_wishart(3, 3, SpdMatrix::identity(3), rng),
      dlnk::DofTooSmall);
  REQUIRE_THROWS_AS(
      dlnk::sample_wishart(3, 2, SpdMatrix::identity(3), rng),
      dlnk::DofTooSmall);
}

TEST_CASE("wishart draws replay bitwise and are always SPD") {
  RngStream a(5, 9), b(5, 9);
  for (int k = 0; k < 50; ++k) {
    const SpdMatrix qa = dlnk::sample_wishart(3, 8, SpdMatrix::identity(3), a);
    const SpdMatrix qb = dlnk::sample_wishart(3, 8, SpdMatrix::identity(3), b);
    REQUIRE(qa.matrix() == qb.matrix());
    REQUIRE_NOTHROW(dlnk::cholesky(qa));  // SPD invariant
  }
}

TEST_CASE("wishart mean is dof * scale") {
  const Eigen::Index d = 3;
  const int dof = 8;
  Matrix scale_m = Matrix::Identity(d, d) / dof;
  const SpdMatrix scale(scale_m);
  const int n = 100000;
  RngStream rng(6, 0);
  dlnk::MomentAccumulator acc(d * d);
  for (int k = 0; k < n; ++k) {
    RngStream sub = rng.substream(k);
    const SpdMatrix q = dlnk::sample_wishart(d, dof, scale, sub);
    acc.add(Eigen::Map<const Vector>(q.matrix().data(), d * d));
  }
  for (Eigen::Index i = 0; i < d * d; ++i) {
    const auto st = acc.first(i);
    const double want = (i % (d + 1) == 0) ? 1.0 : 0.0;  // identity target
    REQUIRE(std::abs(st.mean - want) <= 4.0 * st.std_error);
  }
}

TEST_CASE("dim-1 wishart matches the gamma law by KS test") {
  const int dof = 6;
  Matrix one(1, 1);
  one << 1.0 / dof;
  const SpdMatrix scale(one);
  RngStream rng(7, 0);
  const int n = 100000;
  std::vector<double> xs(n);
  for (auto& x : xs) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(&x - xs.data()));
    x = dlnk::sample_wishart(1, dof, scale, sub)(0, 0);
  }
  const double a = 0.5 * dof;
  const double d = dlnk_test::ks_statistic(
      xs, [a](double x) { return dlnk_test::gamma_p(a, a * x); });
  REQUIRE(d < 1.949 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("bartlett draws match closed-form and outer-product second moments") {
  const Eigen::Index d = 2;
  const int dof = 5;
  RngStream seed_rng(8, 0);
  const SpdMatrix v = random_spd(d, seed_rng, 0.3);
  const int n = 100000;

  // Bartlett route.
  dlnk::MomentAccumulator bartlett(d * d);
  RngStream r1(8, 1);
  for (int k = 0; k < n; ++k) {
    RngStream sub = r1.substream(k);
    const SpdMatrix q = dlnk::sample_wishart(d, dof, v, sub);
    bartlett.add(Eigen::Map<const Vector>(q.matrix().data(), d * d));
  }
  // Definition route: sum of dof outer products of N(0, V) vectors.
  dlnk::MomentAccumulator outer(d * d);
  RngStream r2(8, 2);
  const Matrix lv = dlnk::cholesky(v).lower();
  for (int k = 0; k < n; ++k) {
    RngStream sub = r2.substream(k);
    Matrix w = Matrix::Zero(d, d);
    for (int j = 0; j < dof; ++j) {
      Vector g(d);
      for (Eigen::Index i = 0; i < d; ++i) g[i] = sub.normal();
      const Vector x = lv * g;
      w += x * x.transpose();
    }
    outer.add(Eigen::Map<const Vector>(w.data(), d * d));
  }

  for (Eigen::Index i = 0; i < d * d; ++i) {
    // First moments vs the exact mean dof * V, both samplers.
    const double want = dof * v.matrix()(i / d, i % d);
    REQUIRE(std::abs(bartlett.first(i).mean - want) <=
            4.0 * bartlett.first(i).std_error);
    REQUIRE(dlnk::z_score(bartlett.first(i), outer.first(i)) <= 4.0);
    // Raw second moments: closed form E[W_ij^2] = Var + mean^2 with
    // Var(W_ij) = dof (V_ii V_jj + V_ij^2).
    const Eigen::Index r = i / d, c2 = i % d;
    const double var =
        dof * (v.matrix()(r, r) * v.matrix()(c2, c2) +
               v.matrix()(r, c2) * v.matrix()(r, c2));
    const double want2 = var + want * want;
    REQUIRE(std::abs(bartlett.second(i).mean - want2) <=
            4.0 * bartlett.second(i).std_error);
    REQUIRE(dlnk::z_score(bartlett.second(i), outer.second(i)) <= 4.0);
  }
}

TEST_CASE("matrix normal with identity covariances is iid standard normal") {
  RngStream rng(9, 0);
  const int n = 100000;
  dlnk::MomentAccumulator acc(6);
  for (int k = 0; k < n; ++k) {
    RngStream sub = rng.substream(k);
    const Matrix z = dlnk::sample_matrix_normal(
        2, 3, SpdMatrix::identity(2), SpdMatrix::identity(3), sub);
    acc.add(Eigen::Map<const Vector>(z.data(), 6));
  }
  for (Eigen::Index i = 0; i < 6; ++i) {
    REQUIRE(std::abs(acc.first(i).mean) <= 4.0 * acc.first(i).std_error);
    REQUIRE(std::abs(acc.second(i).mean - 1.0) <=
            4.0 * acc.second(i).std_error);
  }
}

TEST_CASE("vec of a matrix normal has kronecker covariance") {
  RngStream setup(10, 0);
  const SpdMatrix row_cov = random_spd(2, setup, 0.3);
  const SpdMatrix col_cov = random_spd(3, setup, 0.3);
  const Matrix want = dlnk::kron(col_cov.matrix(), row_cov.matrix());

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 6; ++i)
    for (int j = i; j < 6; ++j) pairs.emplace_back(i, j);
  dlnk::MomentAccumulator acc(6, pairs);
  RngStream rng(10, 1);
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    RngStream sub = rng.substream(k);
    const Matrix z = dlnk::sample_matrix_normal(2, 3, row_cov, col_cov, sub);
    acc.add(Eigen::Map<const Vector>(z.data(), 6));
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto st = acc.cross(k);
    REQUIRE(std::abs(st.mean - want(pairs[k].first, pairs[k].second)) <=
            4.0 * st.std_error);
  }
}

TEST_CASE("linear transformations of matrix normals transform the laws") {
  RngStream setup(11, 0);
  const SpdMatrix row_cov = random_spd(2, setup, 0.3);
  const SpdMatrix col_cov = random_spd(2, setup, 0.3);
  const Matrix h = random_matrix(2, 2, setup);
  const Matrix k_m = random_matrix(2, 2, setup);
  const Matrix want = dlnk::kron(
      Matrix(k_m.transpose() * col_cov.matrix() * k_m),
      Matrix(h * row_cov.matrix() * h.transpose()));

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) pairs.emplace_back(i, j);
  dlnk::MomentAccumulator acc(4, pairs);
  RngStream rng(11, 1);
  const int n = 100000;
  for (int kk = 0; kk < n; ++kk) {
    RngStream sub = rng.substream(kk);
    const Matrix z = dlnk::sample_matrix_normal(2, 2, row_cov, col_cov, sub);
    const Matrix t = h * z * k_m;
    acc.add(Eigen::Map<const Vector>(t.data(), 4));
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto st = acc.cross(k);
    REQUIRE(std::abs(st.mean - want(pairs[k].first, pairs[k].second)) <=
            4.0 * st.std_error);
  }
}

TEST_CASE("laplace identity: trivial, scalar and randomized cases") {
  RngStream rng(12, 0);
  {
    const auto chk = dlnk::wishart_laplace_check(
        SpdMatrix::identity(2), 5, Matrix::Zero(2, 2), 1.0, rng, 100);
    REQUIRE(chk.closed_form == 1.0);
    REQUIRE(chk.mc_estimate == 1.0);
  }
  {
    Matrix one(1, 1);
    one << 1.0;
    const auto chk = dlnk::wishart_laplace_check(SpdMatrix(one), 3, one, 1.0,
                                                 rng, 1000);
    REQUIRE(std::abs(chk.closed_form - std::pow(2.0, -1.5)) < 1e-14);
  }
  {
    RngStream setup(12, 7);
    const SpdMatrix c = random_spd(2, setup, 0.2);
    RngStream mc(12, 8);
    const auto chk = dlnk::wishart_laplace_check(SpdMatrix::identity(2), 4,
                                                 c.matrix(), 0.7, mc, 1000000);
    REQUIRE(std::abs(chk.mc_estimate - chk.closed_form) <=
            4.0 * chk.mc_std_error);
  }
}

TEST_CASE("laplace identity rejects spectrum violations") {
  RngStream rng(13, 0);
  REQUIRE_THROWS_AS(
      dlnk::wishart_laplace_check(SpdMatrix::identity(2), 5,
                                  Matrix::Identity(2, 2), -10.0, rng, 10),
      dlnk::EigenvalueViolation);
}

TEST_CASE("chunked reduce is independent of thread count") {
  auto run = [](int threads) {
    return dlnk::chunked_reduce<double>(
        100000, threads, [] { return 0.0; },
        [](double& acc, std::int64_t i) {
          RngStream sub = RngStream(77, 0).substream(i);
          acc += sub.normal();
        },
        [](double& a, const double& b) { a += b; });
  };
  const double one = run(1);
  const double four = run(4);
  REQUIRE(one == four);
}
