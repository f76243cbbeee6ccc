#pragma once

// SPD-cone primitives: validated symmetric positive-definite matrices, the
// pivot-tolerant Cholesky factorization used across every module, Kronecker
// products, and triangular solve helpers.
//
// The Cholesky here is hand-rolled rather than delegated to Eigen::LLT
// because the failure contract is part of the library surface: a factorization
// declares the input non-PD exactly when a pivot falls at or below
// dim * machine_epsilon * max_diagonal, and that criterion is what the tests
// (and downstream guards) rely on.

#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "dlnk/errors.hpp"

namespace dlnk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Symmetric positive-definite matrix. Symmetry is enforced at construction
// (inputs within 1e-12 relative asymmetry are symmetrized, anything worse is
// rejected); positive-definiteness is certified by a successful cholesky().
class SpdMatrix {
 public:
  SpdMatrix() = default;  // empty placeholder; dim() == 0

  explicit SpdMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 1) {
      throw ShapeMismatch("SpdMatrix: expected a square matrix, got " +
                          std::to_string(m_.rows()) + "x" +
                          std::to_string(m_.cols()));
    }
    const double scale = m_.cwiseAbs().maxCoeff();
    const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
    if (scale > 0.0 && asym > 1e-12 * scale) {
      throw NotPositiveDefinite(
          "SpdMatrix: input is asymmetric beyond tolerance (relative "
          "asymmetry " +
          std::to_string(asym / scale) + ")");
    }
    m_ = ((m_ + m_.transpose()) * 0.5).eval();
  }

  static SpdMatrix identity(Eigen::Index dim) {
    return SpdMatrix(Matrix::Identity(dim, dim));
  }

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Matrix m_;
};

// Lower-triangular Cholesky factor with strictly positive diagonal:
// lower * lower^T reconstructs the source matrix.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(Matrix lower) : lower_(std::move(lower)) {}

  Eigen::Index dim() const { return lower_.rows(); }
  const Matrix& lower() const { return lower_; }
  Matrix reconstruct() const { return lower_ * lower_.transpose(); }
  double log_det() const {  // log det of the *reconstructed* SPD matrix
    return 2.0 * lower_.diagonal().array().log().sum();
  }

  // Solves (L L^T) x = b by forward/back substitution.
  Matrix solve(const Matrix& b) const {
    Matrix x = lower_.triangularView<Eigen::Lower>().solve(b);
    return lower_.transpose().triangularView<Eigen::Upper>().solve(x);
  }
  Vector solve(const Vector& b) const {
    Vector x = lower_.triangularView<Eigen::Lower>().solve(b);
    return lower_.transpose().triangularView<Eigen::Upper>().solve(x);
  }

 private:
  Matrix lower_;
};

// Factorizes an SPD matrix; throws NotPositiveDefinite when a pivot falls at
// or below dim * eps * max_diagonal.
inline CholeskyFactor cholesky(const SpdMatrix& m) {
  const Eigen::Index n = m.dim();
  const Matrix& a = m.matrix();
  const double tol = static_cast<double>(n) *
                     std::numeric_limits<double>::epsilon() *
                     std::max(a.diagonal().maxCoeff(), 0.0);
  Matrix lower = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= lower(j, k) * lower(j, k);
    if (!(d > tol)) {
      throw NotPositiveDefinite("cholesky: pivot " + std::to_string(d) +
                                " at index " + std::to_string(j) +
                                " is not above tolerance " +
                                std::to_string(tol));
    }
    lower(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      lower(i, j) = s / lower(j, j);
    }
  }
  return CholeskyFactor(std::move(lower));
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

}  // namespace dlnk
