#pragma once

// Large-deviation machinery for the layer mixing measure:
//   * rate_lazy       -- width-free rate of the prior mixing tuple; zero
//                        exactly at the all-identity tuple;
//   * rate_meanfield  -- data-tilted rate whose quadratic term comes from the
//                        kernel chain K = B^T B, B = U_1...U_L; normalized by
//                        subtracting its infimum;
//   * minimize_rate   -- gradient descent with Armijo backtracking in
//                        log-Cholesky coordinates (unconstrained, exactly on
//                        the SPD cone), analytic gradients;
//   * saddle_scalar_solve -- the scalar-output, equal-width stationarity
//                        problem over a common layer scalar u, solved by
//                        bracketed bisection over all interior minima;
//   * concentration_probe -- empirical distance of the top mixing matrix to
//                        its predicted concentration point across a width
//                        ladder (prior sampling, or mean-field reweighting).
//
// The constrained rate of the top matrix alone (the infimum of rate_lazy
// over the fiber {B^T B = Q}) is intentionally not computed here; callers
// who need it can minimize rate_value_and_gradient subject to that fiber
// constraint on top of these primitives.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dlnk/errors.hpp"
#include "dlnk/fc.hpp"
#include "dlnk/linalg.hpp"
#include "dlnk/montecarlo.hpp"
#include "dlnk/posterior.hpp"
#include "dlnk/rng.hpp"

namespace dlnk {

enum class RateObjective { lazy, meanfield };
enum class ConcentrationRegime { lazy, meanfield };

inline const char* to_string(RateObjective o) {
  return o == RateObjective::lazy ? "lazy" : "meanfield";
}
inline const char* to_string(ConcentrationRegime r) {
  return r == ConcentrationRegime::lazy ? "lazy" : "meanfield";
}

struct RatePoint {
  std::vector<SpdMatrix> qs;
  double value = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string diagnostic;  // nonempty when the iteration budget was exhausted
};

struct SaddleScalar {
  double u0 = 1.0;
  double residual = 0.0;
};

struct MinimizeOptions {
  int max_iterations = 50000;
  double gradient_tolerance = 1e-8;
};

// ---------------------------------------------------------------------------
// Log-Cholesky coordinates
// ---------------------------------------------------------------------------
// theta is lower triangular: strict lower entries are the off-diagonal
// entries of the Cholesky factor, diagonal entries are the logs of its
// (positive) diagonal. The map theta -> L L^T is a smooth bijection onto the
// SPD cone, so the optimizer never needs a feasibility projection.

inline Matrix cholesky_from_log_coordinates(const Matrix& theta) {
  Matrix lower = theta.triangularView<Eigen::StrictlyLower>();
  for (Eigen::Index j = 0; j < theta.rows(); ++j)
    lower(j, j) = std::exp(theta(j, j));
  return lower;
}

inline Matrix spd_from_log_cholesky(const Matrix& theta) {
  const Matrix lower = cholesky_from_log_coordinates(theta);
  return lower * lower.transpose();
}

inline Matrix log_cholesky_from_spd(const Matrix& q) {
  const CholeskyFactor factor = cholesky(SpdMatrix(q));
  Matrix theta = factor.lower().triangularView<Eigen::StrictlyLower>();
  for (Eigen::Index j = 0; j < q.rows(); ++j)
    theta(j, j) = std::log(factor.lower()(j, j));
  return theta;
}

// ---------------------------------------------------------------------------
// Rate functions
// ---------------------------------------------------------------------------

// (1/2) sum_l (tr Q_l - log det Q_l) - D L / 2: nonnegative, zero exactly at
// the all-identity tuple (t - log t >= 1 per eigenvalue, equality at t = 1).
inline double rate_lazy(const std::vector<Matrix>& qs) {
  if (qs.empty())
    throw ConfigError("rate_lazy: need at least one layer matrix");
  const Eigen::Index d = qs.front().rows();
  double value = 0.0;
  for (const Matrix& q : qs) {
    if (q.rows() != d || q.cols() != d)
      throw ShapeMismatch("rate_lazy: layer matrices must share one size");
    const CholeskyFactor factor = cholesky(SpdMatrix(q));
    value += 0.5 * (q.trace() - factor.log_det()) -
             0.5 * static_cast<double>(d);
  }
  return value;
}

struct RateGradient {
  double value = 0.0;
  std::vector<Matrix> gradients;  // d value / d theta_l, lower triangular
};

// Raw objective and analytic gradient in log-Cholesky coordinates.
//   lazy:      rate_lazy(Q(theta))                       (constant included)
//   meanfield: (1/2) sum (tr - log det) + (1/2) y^T (K + I/beta)^{-1} y
// with K = kron(gram, B^T B), gram = x^T x / (N_0 lambda*), B = U_1...U_L,
// U_l the upper Cholesky factor of Q_l. The meanfield value carries no
// additive constant: its minimum over theta is the normalizing infimum that
// rate_meanfield subtracts.
inline RateGradient rate_value_and_gradient(RateObjective objective,
                                            const FcNetworkSpec& spec,
                                            const Matrix& x, const Vector& y,
                                            double beta,
                                            const std::vector<Matrix>& thetas) {
  spec.validate();
  const Eigen::Index d = spec.d;
  const auto depth = static_cast<std::size_t>(spec.depth());
  if (thetas.size() != depth)
    throw ShapeMismatch("rate objective: expected one coordinate block per "
                        "layer");
  const bool with_data =
      objective == RateObjective::meanfield && x.cols() > 0;
  if (objective == RateObjective::meanfield) {
    if (!(beta > 0.0))
      throw ConfigError("rate objective: beta must be positive");
    if (x.size() > 0 && x.rows() != spec.n0)
      throw ShapeMismatch("rate objective: input rows do not match the spec");
    if (y.size() != spec.d * x.cols())
      throw ShapeMismatch("rate objective: need D labels per example");
  }

  RateGradient out;
  out.gradients.assign(depth, Matrix::Zero(d, d));
  std::vector<Matrix> lowers(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    const Matrix& theta = thetas[l];
    if (theta.rows() != d || theta.cols() != d)
      throw ShapeMismatch("rate objective: coordinate blocks must be DxD");
    if (!theta.allFinite())
      throw NonFiniteObjective("rate objective: non-finite coordinates");
    lowers[l] = cholesky_from_log_coordinates(theta);
    // Prior term (1/2)||L||_F^2 - sum_j theta_jj and its gradient.
    out.value += 0.5 * lowers[l].squaredNorm() - theta.diagonal().sum();
    Matrix g = lowers[l].triangularView<Eigen::Lower>();
    for (Eigen::Index j = 0; j < d; ++j)
      g(j, j) = lowers[l](j, j) * lowers[l](j, j) - 1.0;
    out.gradients[l] = g;
  }
  if (objective == RateObjective::lazy)
    out.value -= 0.5 * static_cast<double>(d) * static_cast<double>(depth);
  if (!std::isfinite(out.value)) {
    // exp-overflow in the coordinates: the objective is genuinely +infinity
    // there, which a backtracking line search must simply reject.
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  if (!with_data) return out;

  // Data term through the kernel chain.
  Matrix b = Matrix::Identity(d, d);
  std::vector<Matrix> prefixes(depth);  // U_1 ... U_{l-1}
  for (std::size_t l = 0; l < depth; ++l) {
    prefixes[l] = b;
    b = b * lowers[l].transpose();
  }
  std::vector<Matrix> suffixes(depth);  // U_{l+1} ... U_L
  Matrix s = Matrix::Identity(d, d);
  for (std::size_t l = depth; l-- > 0;) {
    suffixes[l] = s;
    s = lowers[l].transpose() * s;
  }
  const Matrix gram =
      x.transpose() * x / (static_cast<double>(spec.n0) * spec.lambda_star());
  const Matrix k = b.transpose() * b;
  if (!k.allFinite()) {
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  const Eigen::Index np = y.size();
  Matrix a = kron(gram, k);
  a.diagonal().array() += 1.0 / beta;
  const Vector v = Eigen::LLT<Matrix>(a).solve(y);
  out.value += 0.5 * y.dot(v);
  if (!std::isfinite(out.value))
    throw NonFiniteObjective("rate objective: data term is not finite");
  // d(quad)/dK = -V gram V^T with V the D x P unstacking of the solve.
  const Eigen::Map<const Matrix> vmat(v.data(), d, np / d);
  const Matrix dk = -0.5 * (vmat * gram * vmat.transpose());
  const Matrix db = 2.0 * b * dk;
  for (std::size_t l = 0; l < depth; ++l) {
    const Matrix du = prefixes[l].transpose() * db * suffixes[l].transpose();
    const Matrix dl = du.transpose();
    Matrix g = dl.triangularView<Eigen::Lower>();
    for (Eigen::Index j = 0; j < d; ++j) g(j, j) = dl(j, j) * lowers[l](j, j);
    out.gradients[l] += g;
  }
  return out;
}

namespace detail {

inline double rate_gradient_norm(const std::vector<Matrix>& gradients) {
  double sq = 0.0;
  for (const Matrix& g : gradients) sq += g.squaredNorm();
  return std::sqrt(sq);
}

}  // namespace detail

// Gradient descent with Armijo backtracking in log-Cholesky coordinates.
// When the iteration budget runs out the best point found is returned with
// converged = false and a diagnostic instead of an exception.
inline RatePoint minimize_rate(RateObjective objective,
                               const FcNetworkSpec& spec, const Matrix& x,
                               const Vector& y, double beta,
                               const std::vector<Matrix>& init = {},
                               const MinimizeOptions& options = {}) {
  spec.validate();
  const Eigen::Index d = spec.d;
  const auto depth = static_cast<std::size_t>(spec.depth());
  if (options.max_iterations < 1 || !(options.gradient_tolerance > 0.0))
    throw ConfigError("minimize_rate: need a positive iteration budget and "
                      "gradient tolerance");
  std::vector<Matrix> thetas;
  if (init.empty()) {
    thetas.assign(depth, Matrix::Zero(d, d));
  } else {
    if (init.size() != depth)
      throw ShapeMismatch("minimize_rate: need one starting matrix per layer");
    thetas.reserve(depth);
    for (const Matrix& q : init) thetas.push_back(log_cholesky_from_spd(q));
  }

  auto eval = [&](const std::vector<Matrix>& point) {
    return rate_value_and_gradient(objective, spec, x, y, beta, point);
  };
  RateGradient current = eval(thetas);
  if (!std::isfinite(current.value))
    throw NonFiniteObjective("minimize_rate: objective infinite at the start");
  double grad_norm = detail::rate_gradient_norm(current.gradients);
  double step = 0.25;
  RatePoint out;
  std::vector<Matrix> trial(depth);
  while (out.iterations < options.max_iterations &&
         grad_norm > options.gradient_tolerance) {
    const double slope = grad_norm * grad_norm;
    bool accepted = false;
    for (int backtrack = 0; backtrack < 80; ++backtrack) {
      for (std::size_t l = 0; l < depth; ++l)
        trial[l] = thetas[l] - step * current.gradients[l];
      const RateGradient probe = eval(trial);
      // Armijo decrease; near the minimum the required decrease underflows
      // the objective's floating-point resolution, so a tie in value with a
      // materially smaller gradient also counts as progress. (A strict "<"
      // here would grind out one-ULP reductions for the whole budget.)
      const bool armijo = probe.value <= current.value - 1e-4 * step * slope;
      const bool tie_progress =
          probe.value <= current.value &&
          std::isfinite(probe.value) &&
          detail::rate_gradient_norm(probe.gradients) < 0.999 * grad_norm;
      if (armijo || tie_progress) {
        thetas.swap(trial);
        current = probe;
        accepted = true;
        step = std::min(step * 1.5, 64.0);
        break;
      }
      step *= 0.5;
    }
    ++out.iterations;
    if (!accepted) {
      out.diagnostic =
          "line search could not reduce the objective further (step "
          "underflow); returning the best point found";
      break;
    }
    grad_norm = detail::rate_gradient_norm(current.gradients);
  }
  out.qs.reserve(depth);
  for (const Matrix& theta : thetas)
    out.qs.emplace_back(spd_from_log_cholesky(theta));
  out.value = current.value;
  out.gradient_norm = grad_norm;
  out.converged = grad_norm <= options.gradient_tolerance;
  if (!out.converged && out.diagnostic.empty())
    out.diagnostic = "iteration budget exhausted before the gradient "
                     "tolerance was met; returning the best point found";
  return out;
}

// Normalized mean-field rate: raw objective minus its infimum (the value
// field of a converged minimize_rate(meanfield) run). Zero at the minimizer.
inline double rate_meanfield(const std::vector<Matrix>& qs, const Matrix& x,
                             const Vector& y, double beta,
                             const FcNetworkSpec& spec, double infimum) {
  std::vector<Matrix> thetas;
  thetas.reserve(qs.size());
  for (const Matrix& q : qs) thetas.push_back(log_cholesky_from_spd(q));
  return rate_value_and_gradient(RateObjective::meanfield, spec, x, y, beta,
                                 thetas)
             .value -
         infimum;
}

// Convenience overload computing the infimum on the fly; prefer caching the
// minimize_rate value when evaluating many points.
inline double rate_meanfield(const std::vector<Matrix>& qs, const Matrix& x,
                             const Vector& y, double beta,
                             const FcNetworkSpec& spec) {
  const RatePoint minimum =
      minimize_rate(RateObjective::meanfield, spec, x, y, beta);
  return rate_meanfield(qs, x, y, beta, spec, minimum.value);
}

// ---------------------------------------------------------------------------
// Scalar saddle point (equal widths, scalar output)
// ---------------------------------------------------------------------------

// Minimizes, over a single common layer scalar u > 0,
//   phi(u) = L (u - log u)
//          + (alpha/P) [ y^T (u^L G + I/beta)^{-1} y + log det(I + beta u^L G) ]
// with G = x^T x / (N_0 lambda*). Returns the minimizing u0 and the
// stationarity residual |phi'(u0)|. The determinant term enters here (unlike
// the mean-field rate) because alpha keeps the data block at the same order
// as the prior block in the proportional regime.
inline SaddleScalar saddle_scalar_solve(const FcNetworkSpec& spec,
                                        const Matrix& x, const Vector& y,
                                        double alpha, double beta) {
  spec.validate();
  if (spec.d != 1)
    throw ConfigError("saddle_scalar_solve: requires a scalar output");
  for (const int w : spec.widths) {
    if (w != spec.widths.front())
      throw ConfigError("saddle_scalar_solve: requires equal layer widths");
  }
  if (alpha < 0.0)
    throw ConfigError("saddle_scalar_solve: alpha must be nonnegative");
  if (!(beta > 0.0))
    throw ConfigError("saddle_scalar_solve: beta must be positive");
  if (x.size() > 0 && x.rows() != spec.n0)
    throw ShapeMismatch("saddle_scalar_solve: input rows do not match spec");
  if (y.size() != x.cols())
    throw ShapeMismatch("saddle_scalar_solve: one label per example");

  const double layers = spec.depth();
  const Eigen::Index p = x.cols();
  Vector sigma = Vector::Zero(0), proj = Vector::Zero(0);
  if (p > 0 && alpha > 0.0) {
    const Matrix gram = x.transpose() * x /
                        (static_cast<double>(spec.n0) * spec.lambda_star());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    sigma = eig.eigenvalues();
    proj = eig.eigenvectors().transpose() * y;
  }
  const double data_scale =
      (p > 0 && alpha > 0.0) ? alpha / static_cast<double>(p) : 0.0;

  auto phi = [&](double u) {
    double value = layers * (u - std::log(u));
    const double ul = std::pow(u, layers);
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      value += data_scale * (proj[i] * proj[i] / (ul * sigma[i] + 1.0 / beta) +
                             std::log1p(beta * ul * sigma[i]));
    }
    return value;
  };
  auto dphi = [&](double u) {
    double value = layers * (1.0 - 1.0 / u);
    const double dul = layers * std::pow(u, layers - 1.0);
    const double ul = std::pow(u, layers);
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      const double denom = ul * sigma[i] + 1.0 / beta;
      value += data_scale * dul * sigma[i] *
               (beta / (1.0 + beta * ul * sigma[i]) -
                proj[i] * proj[i] / (denom * denom));
    }
    return value;
  };

  // Scan a log grid for descent-to-ascent sign changes of phi', bisect each,
  // and keep the best interior minimum.
  const double lo = 1e-8, hi = 1e8;
  const int scan = 400;
  double best_u = 0.0, best_phi = std::numeric_limits<double>::infinity();
  double prev_u = lo, prev_d = dphi(lo);
  for (int i = 1; i <= scan; ++i) {
    const double u = lo * std::pow(hi / lo, static_cast<double>(i) / scan);
    const double du = dphi(u);
    if (!std::isfinite(du))
      throw NonFiniteObjective("saddle_scalar_solve: non-finite derivative");
    if (prev_d < 0.0 && du >= 0.0) {
      double a = prev_u, b = u;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        (dphi(mid) < 0.0 ? a : b) = mid;
      }
      const double root = 0.5 * (a + b);
      if (phi(root) < best_phi) {
        best_phi = phi(root);
        best_u = root;
      }
    }
    prev_u = u;
    prev_d = du;
  }
  if (best_u == 0.0)
    throw NoInteriorMinimum(
        "saddle_scalar_solve: the action is monotone over the bracketing "
        "interval [1e-8, 1e8]");
  return SaddleScalar{best_u, std::abs(dphi(best_u))};
}

// ---------------------------------------------------------------------------
// Concentration probe
// ---------------------------------------------------------------------------

struct ConcentrationRow {
  int width = 0;
  double mean_distance = 0.0;
};

namespace detail {

// Log-shifted weighted mean of a nonnegative statistic; deterministic merge.
struct WeightedDistanceAccumulator {
  double shift = -std::numeric_limits<double>::infinity();
  double weight_sum = 0.0;
  double stat_sum = 0.0;
  std::int64_t count = 0;

  void rescale(double new_shift) {
    const double f = std::exp(shift - new_shift);
    weight_sum *= f;
    stat_sum *= f;
    shift = new_shift;
  }
  void add(double log_w, double stat) {
    if (!std::isfinite(log_w) || !std::isfinite(stat))
      throw NonFiniteObjective("concentration_probe: non-finite sample");
    if (count == 0)
      shift = log_w;
    else if (log_w > shift)
      rescale(log_w);
    const double w = std::exp(log_w - shift);
    weight_sum += w;
    stat_sum += w * stat;
    ++count;
  }
  void merge(const WeightedDistanceAccumulator& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    if (o.shift > shift) rescale(o.shift);
    const double f = std::exp(o.shift - shift);
    weight_sum += f * o.weight_sum;
    stat_sum += f * o.stat_sum;
    count += o.count;
  }
  double mean() const { return stat_sum / weight_sum; }
};

}  // namespace detail

// Mean distance of the top mixing matrix to its predicted concentration
// point across a ladder of (equal) layer widths. The lazy regime samples the
// prior and targets the identity; the mean-field regime reweights by
// exp(-(N/2) Phi0 - R/2) and targets the minimize_rate(meanfield) solution.
inline std::vector<ConcentrationRow> concentration_probe(
    const FcNetworkSpec& spec, ConcentrationRegime regime,
    const std::vector<int>& widths, std::int64_t n_draws, const RngStream& rng,
    const Matrix& x = Matrix(), const Vector& y = Vector(), double beta = 1.0,
    int threads = 0) {
  spec.validate();
  if (widths.empty())
    throw ConfigError("concentration_probe: need at least one width");
  if (n_draws < 1)
    throw ConfigError("concentration_probe: need at least one draw");
  const auto depth = static_cast<std::size_t>(spec.depth());
  Matrix target = Matrix::Identity(spec.d, spec.d);
  if (regime == ConcentrationRegime::meanfield) {
    if (x.size() == 0 || y.size() == 0)
      throw ConfigError(
          "concentration_probe: the mean-field regime needs training data");
    const RatePoint minimum =
        minimize_rate(RateObjective::meanfield, spec, x, y, beta);
    target = make_mixing_sample(minimum.qs).q_top.matrix();
  }

  std::vector<ConcentrationRow> rows;
  rows.reserve(widths.size());
  for (std::size_t w_idx = 0; w_idx < widths.size(); ++w_idx) {
    FcNetworkSpec ladder = spec;
    ladder.widths.assign(depth, widths[w_idx]);
    ladder.validate();
    ladder.require_mixture();
    const double width = widths[w_idx];
    const Matrix gram =
        regime == ConcentrationRegime::meanfield
            ? Matrix(x.transpose() * x /
                     (static_cast<double>(spec.n0) * spec.lambda_star()))
            : Matrix();
    const RngStream base = rng.substream(w_idx);
    using Acc = detail::WeightedDistanceAccumulator;
    const Acc acc = chunked_reduce<Acc>(
        n_draws, threads, [] { return Acc{}; },
        [&](Acc& a, std::int64_t i) {
          RngStream sub = base.substream(static_cast<std::uint64_t>(i));
          const MixingSample mix = sample_mixing(ladder, sub);
          const double dist =
              (mix.q_top.matrix() - target).norm();
          double log_w = 0.0;
          if (regime == ConcentrationRegime::meanfield) {
            const SpdMatrix s11(Matrix(kron(gram, mix.q_top.matrix())));
            const PhiParts parts = phi_beta_parts(s11, y, beta);
            log_w = -0.5 * (width * parts.quadratic + parts.log_det);
          }
          a.add(log_w, dist);
        },
        [](Acc& a, const Acc& b) { a.merge(b); });
    rows.push_back({widths[w_idx], acc.mean()});
  }
  return rows;
}

// Least-squares slope of log(mean_distance) against log(width).
inline double log_log_slope(const std::vector<ConcentrationRow>& rows) {
  if (rows.size() < 2)
    throw ConfigError("log_log_slope: need at least two ladder points");
  double mx = 0.0, my = 0.0;
  for (const ConcentrationRow& r : rows) {
    mx += std::log(static_cast<double>(r.width));
    my += std::log(r.mean_distance);
  }
  mx /= static_cast<double>(rows.size());
  my /= static_cast<double>(rows.size());
  double sxy = 0.0, sxx = 0.0;
  for (const ConcentrationRow& r : rows) {
    const double dx = std::log(static_cast<double>(r.width)) - mx;
    sxy += dx * (std::log(r.mean_distance) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Streaming weighted histogram of the scalar top mixing variable
// ---------------------------------------------------------------------------
// Locating the mode of a reweighted mixing density needs every draw, not the
// stride-thinned subsets the posterior samplers retain: a single rare draw
// with an enormous weight otherwise dominates some far-out bin. This streams
// draws through fixed bins in O(bins) memory.

enum class MixingWeight {
  prior,      // unweighted: the mixing measure itself
  posterior,  // exp(-(quad + logdet)/2): Bayes posterior over the mixture
  meanfield   // exp(-(N quad + logdet)/2): width-amplified labels
};

inline const char* to_string(MixingWeight w) {
  switch (w) {
    case MixingWeight::prior: return "prior";
    case MixingWeight::posterior: return "posterior";
    default: return "meanfield";
  }
}

struct ScalarMixingHistogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> mass;     // per-bin sum of exp(log_weight - log_shift)
  double log_shift = 0.0;       // common shift of the accumulated weights
  std::int64_t in_range = 0;    // raw draws that landed inside [lo, hi)
  std::int64_t n_draws = 0;
};

namespace detail {

struct HistogramAccumulator {
  double shift = -std::numeric_limits<double>::infinity();
  std::vector<double> mass;
  std::int64_t inside = 0;

  void rescale(double new_shift) {
    const double factor = std::exp(shift - new_shift);
    for (double& m : mass) m *= factor;
    shift = new_shift;
  }
  void add(double log_w, int bin) {
    if (std::isnan(log_w))
      throw NonFiniteObjective("mixing histogram: non-finite weight");
    if (log_w > shift + 30.0) rescale(log_w);
    mass[static_cast<std::size_t>(bin)] += std::exp(log_w - shift);
    ++inside;
  }
  void merge(const HistogramAccumulator& other) {
    if (other.mass.empty()) return;
    if (mass.empty()) {
      *this = other;
      return;
    }
    HistogramAccumulator rhs = other;
    if (rhs.shift > shift) rescale(rhs.shift);
    else rhs.rescale(shift);
    for (std::size_t b = 0; b < mass.size(); ++b) mass[b] += rhs.mass[b];
    inside += rhs.inside;
  }
};

}  // namespace detail

inline ScalarMixingHistogram mixing_scalar_histogram(
    const FcNetworkSpec& spec, MixingWeight weight, const Matrix& x,
    const Vector& y, double beta, double lo, double hi, int bins,
    std::int64_t n_draws, const RngStream& rng, int threads = 0) {
  spec.validate();
  spec.require_mixture();
  if (spec.d != 1)
    throw ConfigError(
        "mixing_scalar_histogram: the binned variable is the scalar top "
        "mixing matrix, so a scalar output is required");
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw ConfigError("mixing_scalar_histogram: need a finite range lo < hi");
  if (bins < 3)
    throw ConfigError("mixing_scalar_histogram: need at least three bins");
  if (n_draws < 1)
    throw ConfigError("mixing_scalar_histogram: need at least one draw");
  Matrix gram;
  if (weight != MixingWeight::prior) {
    if (x.size() == 0 || y.size() == 0)
      throw ConfigError(
          "mixing_scalar_histogram: weighted variants need training data");
    if (x.rows() != spec.n0)
      throw ShapeMismatch(
          "mixing_scalar_histogram: input rows do not match the spec");
    if (y.size() != x.cols())
      throw ShapeMismatch("mixing_scalar_histogram: one label per example");
    if (!(beta > 0.0))
      throw ConfigError("mixing_scalar_histogram: beta must be positive");
    gram = x.transpose() * x /
           (static_cast<double>(spec.n0) * spec.lambda_star());
  }
  if (weight == MixingWeight::meanfield) {
    for (const int w : spec.widths) {
      if (w != spec.widths.front())
        throw ConfigError(
            "mixing_scalar_histogram: the mean-field amplification assumes "
            "equal widths");
    }
  }
  const double width_factor = static_cast<double>(spec.widths.front());

  using Acc = detail::HistogramAccumulator;
  auto fresh = [bins] {
    Acc acc;
    acc.mass.assign(static_cast<std::size_t>(bins), 0.0);
    return acc;
  };
  const Acc acc = chunked_reduce<Acc>(
      n_draws, threads, fresh,
      [&](Acc& a, std::int64_t i) {
        RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
        const MixingSample mix = sample_mixing(spec, sub);
        const double q = mix.q_top.matrix()(0, 0);
        if (q < lo || q >= hi) return;
        const int bin = static_cast<int>((q - lo) / (hi - lo) *
                                         static_cast<double>(bins));
        double log_w = 0.0;
        if (weight != MixingWeight::prior) {
          const SpdMatrix s11(Matrix(gram * q));
          const PhiParts parts = phi_beta_parts(s11, y, beta);
          const double amplify =
              weight == MixingWeight::meanfield ? width_factor : 1.0;
          log_w = -0.5 * (amplify * parts.quadratic + parts.log_det);
        }
        a.add(log_w, std::min(bin, bins - 1));
      },
      [](Acc& a, const Acc& b) { a.merge(b); });

  ScalarMixingHistogram out;
  out.lo = lo;
  out.hi = hi;
  out.mass = acc.mass;
  out.log_shift = acc.shift;
  out.in_range = acc.inside;
  out.n_draws = n_draws;
  return out;
}

// Mode of a histogram: a least-squares quadratic through the argmax bin and
// two neighbors on each side (three-point parabola near an edge, plain bin
// center at the edge itself). The fit averages out per-bin sampling noise
// that a raw argmax would pass straight through.
inline double histogram_mode(const ScalarMixingHistogram& hist) {
  if (hist.mass.size() < 3)
    throw ConfigError("histogram_mode: need at least three bins");
  if (hist.in_range < 1)
    throw ConfigError("histogram_mode: no draws landed inside the range");
  const auto peak = std::max_element(hist.mass.begin(), hist.mass.end());
  const auto k = static_cast<std::size_t>(peak - hist.mass.begin());
  const double w =
      (hist.hi - hist.lo) / static_cast<double>(hist.mass.size());
  const double center = hist.lo + (static_cast<double>(k) + 0.5) * w;
  if (k >= 2 && k + 2 < hist.mass.size()) {
    // Fit m ~ a + b t + c t^2 over t = -2..2; vertex at -b/(2c).
    double sm = 0.0, stm = 0.0, sttm = 0.0;
    for (int t = -2; t <= 2; ++t) {
      const double m = hist.mass[k + static_cast<std::size_t>(t + 2) - 2];
      sm += m;
      stm += static_cast<double>(t) * m;
      sttm += static_cast<double>(t * t) * m;
    }
    const double b = stm / 10.0;
    const double c = (5.0 * sttm - 10.0 * sm) / 70.0;
    if (c < 0.0) {
      const double vertex = -b / (2.0 * c);
      if (std::abs(vertex) <= 2.5) return center + vertex * w;
    }
  }
  if (k > 0 && k + 1 < hist.mass.size()) {
    const double a = hist.mass[k - 1], b = hist.mass[k], c = hist.mass[k + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0.0) return center + 0.5 * w * (a - c) / denom;
  }
  return center;
}

}  // namespace dlnk
