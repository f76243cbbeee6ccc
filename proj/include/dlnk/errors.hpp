#pragma once

// Exception hierarchy shared by every dlnk module. All failures derive from
// dlnk::Error so callers can catch library problems in one place; the concrete
// types mirror the distinct failure modes of the numerical contracts
// (factorization, sampling, design-matrix and configuration validation).

#include <stdexcept>
#include <string>

namespace dlnk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A matrix expected to be symmetric positive definite failed factorization
// (pivot below the scaled tolerance) or was too asymmetric to symmetrize.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

// Wishart sampling with dof <= dim: the density does not exist.
class DofTooSmall : public Error {
 public:
  using Error::Error;
};

// Incompatible matrix/tensor dimensions.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// The Laplace-transform identity precondition (all eigenvalues of
// 1 + alpha*scale*c strictly positive) is violated.
class EigenvalueViolation : public Error {
 public:
  using Error::Error;
};

// Gram matrix X^T X (or its conv analog) is numerically singular where an
// inverse is required.
class SingularGram : public Error {
 public:
  using Error::Error;
};

// Importance-sampling weights collapsed (effective sample size below the
// usability floor); callers should switch to the Metropolis sampler.
class DegenerateWeights : public Error {
 public:
  using Error::Error;
};

// The enlarged design [x0, X] fails the full-rank hypothesis of the
// posterior-predictive formulas.
class RankDeficientDesign : public Error {
 public:
  using Error::Error;
};

// A method was requested outside its tractable regime (e.g. tensor-product
// quadrature beyond three layers).
class MethodCostExceeded : public Error {
 public:
  using Error::Error;
};

// 1-D minimization found no interior stationary point within the bracket.
class NoInteriorMinimum : public Error {
 public:
  using Error::Error;
};

// An optimization objective evaluated to NaN/Inf.
class NonFiniteObjective : public Error {
 public:
  using Error::Error;
};

// The requested integral diverges at an endpoint for the given exponent
// combination (e.g. a zero-temperature evidence with zero labels and too many
// examples per hidden unit).
class IntegrableSingularity : public Error {
 public:
  using Error::Error;
};

// A series or continued-fraction evaluation failed to converge within its
// iteration budget.
class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent run configuration (unknown key, bad value, missing
// required field).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset or config file; carries line/column context in the
// message.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace dlnk
