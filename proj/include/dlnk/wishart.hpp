#pragma once

// Random-matrix samplers: Wishart draws via the Bartlett construction,
// centred matrix normals, and the Monte-Carlo check of the Wishart
// Laplace-transform identity
//
//   det(1 + alpha * scale * c)^(-dof/2) = E[ exp(-alpha/2 * tr(c Q)) ],
//   Q ~ W_dim(scale, dof),
//
// which downstream modules lean on whenever a Gaussian integral over weights
// is traded for an expectation over the mixing measure.

#include <cmath>
#include <cstdint>
#include <string>

#include "dlnk/errors.hpp"
#include "dlnk/linalg.hpp"
#include "dlnk/rng.hpp"

namespace dlnk {

// Bartlett sampler for W_dim(scale, dof): fills a lower-triangular A with
// chi(dof - i) diagonal entries and standard-normal subdiagonal entries
// (column-major draw order, fixed for replay determinism), then returns
// (L A)(L A)^T with L the Cholesky factor of the scale matrix.
inline SpdMatrix sample_wishart(Eigen::Index dim, int dof,
                                const SpdMatrix& scale, RngStream& rng) {
  if (dof <= dim) {
    throw DofTooSmall("sample_wishart: dof " + std::to_string(dof) +
                      " must exceed dim " + std::to_string(dim));
  }
  if (scale.dim() != dim) {
    throw ShapeMismatch("sample_wishart: scale dim " +
                        std::to_string(scale.dim()) + " != " +
                        std::to_string(dim));
  }
  Matrix a = Matrix::Zero(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    a(j, j) = rng.chi(static_cast<double>(dof - j));
    for (Eigen::Index i = j + 1; i < dim; ++i) a(i, j) = rng.normal();
  }
  const Matrix la = cholesky(scale).lower() * a;
  return SpdMatrix(la * la.transpose());
}

// Centred matrix normal MN(0, row_cov, col_cov): vec(draw) has covariance
// col_cov (x) row_cov under column stacking.
inline Matrix sample_matrix_normal(Eigen::Index rows, Eigen::Index cols,
                                   const SpdMatrix& row_cov,
                                   const SpdMatrix& col_cov, RngStream& rng) {
  if (row_cov.dim() != rows || col_cov.dim() != cols) {
    throw ShapeMismatch("sample_matrix_normal: covariance dims (" +
                        std::to_string(row_cov.dim()) + ", " +
                        std::to_string(col_cov.dim()) +
                        ") do not match requested shape (" +
                        std::to_string(rows) + ", " + std::to_string(cols) +
                        ")");
  }
  Matrix z(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = rng.normal();
  return cholesky(row_cov).lower() * z *
         cholesky(col_cov).lower().transpose();
}

// log of the multivariate gamma function Gamma_d(a).
inline double lmvgamma(Eigen::Index d, double a) {
  double s = 0.25 * static_cast<double>(d) * static_cast<double>(d - 1) *
             std::log(M_PI);
  for (Eigen::Index j = 0; j < d; ++j)
    s += std::lgamma(a - 0.5 * static_cast<double>(j));
  return s;
}

// Log density of W_d(I/dof, dof) at q -- the per-layer mixing law, whose
// scale keeps E[Q] = I at every degrees-of-freedom count.
inline double wishart_log_density(const SpdMatrix& q, double dof) {
  const Eigen::Index d = q.dim();
  const double log_det_q = cholesky(q).log_det();
  const double dd = static_cast<double>(d);
  return 0.5 * (dof - dd - 1.0) * log_det_q - 0.5 * dof * q.matrix().trace() -
         0.5 * dof * dd * std::log(2.0) + 0.5 * dof * dd * std::log(dof) -
         lmvgamma(d, 0.5 * dof);
}

struct LaplaceCheck {
  double mc_estimate = 0.0;
  double closed_form = 0.0;
  double mc_std_error = 0.0;
};

// Evaluates both sides of the Laplace-transform identity. The spectrum
// precondition is checked on the symmetric similarity L^T c L of scale * c.
inline LaplaceCheck wishart_laplace_check(const SpdMatrix& scale, int dof,
                                          const Matrix& c, double alpha,
                                          RngStream& rng,
                                          std::int64_t n_draws = 100000) {
  if (c.rows() != scale.dim() || c.cols() != scale.dim()) {
    throw ShapeMismatch("wishart_laplace_check: c must match scale dim");
  }
  const Matrix l = cholesky(scale).lower();
  const Matrix sym = l.transpose() * c * l;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(
      SpdMatrix(Matrix((sym + sym.transpose()) * 0.5)).matrix());
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    const double v = 1.0 + alpha * eig.eigenvalues()[i];
    if (v <= 0.0) {
      throw EigenvalueViolation(
          "wishart_laplace_check: eigenvalue of (1 + alpha*scale*c) is " +
          std::to_string(v));
    }
    log_det += std::log(v);
  }
  LaplaceCheck out;
  out.closed_form = std::exp(-0.5 * dof * log_det);
  double sum = 0.0, sum_sq = 0.0;
  for (std::int64_t k = 0; k < n_draws; ++k) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(k));
    const SpdMatrix q = sample_wishart(scale.dim(), dof, scale, sub);
    const double w =
        std::exp(-0.5 * alpha * (c.cwiseProduct(q.matrix())).sum());
    sum += w;
    sum_sq += w * w;
  }
  const double n = static_cast<double>(n_draws);
  out.mc_estimate = sum / n;
  const double var = (sum_sq - sum * sum / n) / (n - 1.0);
  out.mc_std_error = std::sqrt(std::max(var, 0.0) / n);
  return out;
}

}  // namespace dlnk
