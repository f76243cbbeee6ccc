#pragma once

// Gaussian-likelihood posterior machinery shared by both architectures.
//
// Conditionally on a mixing draw the joint law of (test output, training
// outputs) is a centred Gaussian with block covariance
//
//   Sigma = [[S00, S01], [S01^T, S11]],
//
// so the posterior predictive is the Gaussian conditional
//
//   m0  = S01 (S11 + I/beta)^{-1} y,
//   cov = S00 - S01 (S11 + I/beta)^{-1} S01^T,
//
// reweighted over mixing draws by exp(-Phi_beta/2) with
//
//   Phi_beta = y^T (S11 + I/beta)^{-1} y + log det(I + beta S11).
//
// Two samplers target that mixing measure: self-normalized importance
// sampling from the prior (exact weights, preferred at desk scale) and
// random-walk Metropolis in log-Cholesky coordinates (covers concentrated
// posteriors where the importance weights degenerate). The mean-field
// variant rescales the quadratic part of the weight by the common width.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dlnk/conv.hpp"
#include "dlnk/errors.hpp"
#include "dlnk/fc.hpp"
#include "dlnk/linalg.hpp"
#include "dlnk/montecarlo.hpp"
#include "dlnk/rng.hpp"
#include "dlnk/wishart.hpp"

namespace dlnk {

// ---------------------------------------------------------------------------
// Covariance blocks
// ---------------------------------------------------------------------------

struct SigmaBlocks {
  SpdMatrix s00;  // test-test, dim D (FC) or 1 (conv)
  Matrix s01;     // test-train, D x (D P)
  SpdMatrix s11;  // train-train, dim D P

  Matrix assembled() const {
    const Eigen::Index d = s00.dim(), n = s11.dim();
    Matrix full(d + n, d + n);
    full.topLeftCorner(d, d) = s00.matrix();
    full.topRightCorner(d, n) = s01;
    full.bottomLeftCorner(n, d) = s01.transpose();
    full.bottomRightCorner(n, n) = s11.matrix();
    return full;
  }
};

inline SigmaBlocks sigma_blocks_fc(const FcNetworkSpec& spec, const Vector& x0,
                                   const Matrix& x, const MixingSample& mix) {
  if (x0.size() != spec.n0 || x.rows() != spec.n0)
    throw ShapeMismatch("sigma_blocks_fc: inputs must have n0 rows");
  const double norm =
      static_cast<double>(spec.n0) * spec.lambda_star();
  const Matrix& q = mix.q_top.matrix();
  const Eigen::Index d = spec.d, p = x.cols();
  SigmaBlocks b{SpdMatrix(Matrix(x0.squaredNorm() / norm * q)),
                Matrix(d, d * p),
                SpdMatrix(Matrix(kron(Matrix(x.transpose() * x / norm), q)))};
  const Vector g01 = x.transpose() * x0 / norm;
  for (Eigen::Index mu = 0; mu < p; ++mu)
    b.s01.block(0, mu * d, d, d) = g01[mu] * q;
  return b;
}

inline SigmaBlocks sigma_blocks_conv(const ConvNetworkSpec& spec,
                                     const Matrix& x0,
                                     const std::vector<Matrix>& x,
                                     const SpdMatrix& tq) {
  if (x0.rows() != spec.channels.front() || x0.cols() != spec.n0)
    throw ShapeMismatch("sigma_blocks_conv: test example shape mismatch");
  const double norm = spec.lambda_star() *
                      static_cast<double>(spec.channels.front()) *
                      static_cast<double>(spec.n0);
  const Eigen::Index p = static_cast<Eigen::Index>(x.size());
  SigmaBlocks b{SpdMatrix::identity(1), Matrix::Zero(1, p),
                kernel_conv(spec, x, tq)};
  double s00 = 0.0;
  for (Eigen::Index a = 0; a < x0.rows(); ++a) {
    const Vector tx0 = tq.matrix() * x0.row(a).transpose();
    s00 += x0.row(a).dot(tx0);
    for (Eigen::Index mu = 0; mu < p; ++mu)
      b.s01(0, mu) += x[static_cast<std::size_t>(mu)].row(a).dot(tx0);
  }
  b.s00 = SpdMatrix(Matrix::Constant(1, 1, s00 / norm));
  b.s01 /= norm;
  return b;
}

// ---------------------------------------------------------------------------
// Phi_beta
// ---------------------------------------------------------------------------

struct PhiParts {
  double quadratic = 0.0;  // y^T (S11 + I/beta)^{-1} y
  double log_det = 0.0;    // log det(I + beta S11)
  double total() const { return quadratic + log_det; }
};

inline PhiParts phi_beta_parts(const SpdMatrix& s11, const Vector& y,
                               double beta) {
  if (!(beta > 0.0)) throw ConfigError("phi_beta: beta must be > 0");
  if (y.size() != s11.dim())
    throw ShapeMismatch("phi_beta: y length != Sigma11 dim");
  const Eigen::Index n = s11.dim();
  const SpdMatrix a(
      Matrix(s11.matrix() + Matrix::Identity(n, n) / beta));
  const CholeskyFactor c = cholesky(a);
  const Vector v = c.lower().triangularView<Eigen::Lower>().solve(y);
  PhiParts parts;
  parts.quadratic = v.squaredNorm();
  // log det(I + beta S11) = n log(beta) + log det(S11 + I/beta).
  parts.log_det = static_cast<double>(n) * std::log(beta) + c.log_det();
  return parts;
}

inline double phi_beta(const SpdMatrix& s11, const Vector& y, double beta) {
  return phi_beta_parts(s11, y, beta).total();
}

// ---------------------------------------------------------------------------
// Predictive moments for one mixing draw
// ---------------------------------------------------------------------------

struct PredictiveMoments {
  Vector mean;    // m0, length D
  SpdMatrix cov;  // conditional covariance, D x D
};

inline PredictiveMoments predictive_moments(const SigmaBlocks& b,
                                            const Vector& y, double beta) {
  if (!(beta > 0.0))
    throw ConfigError("predictive_moments: beta must be > 0");
  if (y.size() != b.s11.dim())
    throw ShapeMismatch("predictive_moments: y length != Sigma11 dim");
  const Eigen::Index n = b.s11.dim();
  const CholeskyFactor c = cholesky(
      SpdMatrix(Matrix(b.s11.matrix() + Matrix::Identity(n, n) / beta)));
  PredictiveMoments pm;
  pm.mean = b.s01 * c.solve(y);
  const Matrix schur =
      b.s00.matrix() - b.s01 * c.solve(Matrix(b.s01.transpose()));
  pm.cov = SpdMatrix(Matrix((schur + schur.transpose()) * 0.5));
  return pm;
}

// ---------------------------------------------------------------------------
// Weighted mixtures
// ---------------------------------------------------------------------------

struct ConvMixingSample {
  std::vector<SpdMatrix> qs;  // Q_1 .. Q_L, each N_0 x N_0
  SpdMatrix tq;               // cached backward-map output T(Q_1..Q_L)
};

inline const std::vector<SpdMatrix>& mixing_layers(const MixingSample& m) {
  return m.qs;
}
inline const Matrix& mixing_top(const MixingSample& m) {
  return m.q_top.matrix();
}
inline const std::vector<SpdMatrix>& mixing_layers(const ConvMixingSample& m) {
  return m.qs;
}
inline const Matrix& mixing_top(const ConvMixingSample& m) {
  return m.tq.matrix();
}

template <class MixT>
struct MixtureEntry {
  MixT mix;
  double log_weight = 0.0;
  std::optional<PredictiveMoments> moments;
};

template <class MixT>
struct WeightedMixture {
  // Stride-thinned retained samples (all weighted statistics below use every
  // draw, not just the retained ones).
  std::vector<MixtureEntry<MixT>> samples;
  double log_normalizer = 0.0;  // log of the mean importance weight
  double ess = 0.0;
  double acceptance_rate =
      std::numeric_limits<double>::quiet_NaN();  // Metropolis only
  std::vector<Matrix> layer_means;  // weighted mean of each Q_l
  Matrix top_mean;                  // weighted mean of Q^(L) (FC) / T (conv)
  std::vector<std::string> warnings;
};

using FcWeightedMixture = WeightedMixture<MixingSample>;
using ConvWeightedMixture = WeightedMixture<ConvMixingSample>;

namespace detail {

// Log-shifted weighted sums: numerically safe self-normalized averages that
// merge deterministically in chunk order.
template <class MixT>
struct PosteriorAccumulator {
  double shift = -std::numeric_limits<double>::infinity();
  double sum_w = 0.0;   // sum exp(lw - shift)
  double sum_w2 = 0.0;  // sum exp(2(lw - shift))
  std::int64_t count = 0;
  std::vector<Matrix> layer_sums;
  Matrix top_sum;
  Vector mean_sum;    // sum w * m0 (when predictive moments are tracked)
  Matrix second_sum;  // sum w * (cov + m0 m0^T)
  std::vector<MixtureEntry<MixT>> stored;

  void rescale(double new_shift) {
    const double f = std::exp(shift - new_shift);
    sum_w *= f;
    sum_w2 *= f * f;
    for (Matrix& m : layer_sums) m *= f;
    if (top_sum.size() > 0) top_sum *= f;
    if (mean_sum.size() > 0) mean_sum *= f;
    if (second_sum.size() > 0) second_sum *= f;
    shift = new_shift;
  }

  void add(MixT mix, double lw,
           std::optional<PredictiveMoments> moments, bool store) {
    if (!std::isfinite(lw))
      throw NonFiniteObjective("posterior mixing: non-finite log-weight");
    if (count == 0) {
      const auto& qs = mixing_layers(mix);
      layer_sums.assign(qs.size(), Matrix());
      for (std::size_t l = 0; l < qs.size(); ++l)
        layer_sums[l] = Matrix::Zero(qs[l].dim(), qs[l].dim());
      top_sum = Matrix::Zero(mixing_top(mix).rows(), mixing_top(mix).cols());
      if (moments) {
        const Eigen::Index d = moments->mean.size();
        mean_sum = Vector::Zero(d);
        second_sum = Matrix::Zero(d, d);
      }
      shift = lw;
    } else if (lw > shift) {
      rescale(lw);
    }
    const double w = std::exp(lw - shift);
    sum_w += w;
    sum_w2 += w * w;
    const auto& qs = mixing_layers(mix);
    for (std::size_t l = 0; l < qs.size(); ++l)
      layer_sums[l] += w * qs[l].matrix();
    top_sum += w * mixing_top(mix);
    if (moments) {
      mean_sum += w * moments->mean;
      second_sum += w * (moments->cov.matrix() +
                         moments->mean * moments->mean.transpose());
    }
    ++count;
    if (store) stored.push_back({std::move(mix), lw, std::move(moments)});
  }

  void merge(const PosteriorAccumulator& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double m = std::max(shift, o.shift);
    rescale(m);
    const double f = std::exp(o.shift - m);
    sum_w += f * o.sum_w;
    sum_w2 += f * f * o.sum_w2;
    for (std::size_t l = 0; l < layer_sums.size(); ++l)
      layer_sums[l] += f * o.layer_sums[l];
    top_sum += f * o.top_sum;
    if (mean_sum.size() > 0) {
      mean_sum += f * o.mean_sum;
      second_sum += f * o.second_sum;
    }
    count += o.count;
    stored.insert(stored.end(), o.stored.begin(), o.stored.end());
  }

  double ess() const { return sum_w * sum_w / sum_w2; }
  double log_normalizer() const {
    return shift + std::log(sum_w) - std::log(static_cast<double>(count));
  }
};

// Self-normalized importance run with per-draw substreams. draw(rng) yields a
// mixing sample; eval(mix) returns its log-weight and (optionally) the
// predictive moments to average.
template <class MixT, class DrawFn, class EvalFn>
PosteriorAccumulator<MixT> run_importance(std::int64_t n, const RngStream& rng,
                                          int threads, DrawFn draw,
                                          EvalFn eval) {
  const std::int64_t stride = std::max<std::int64_t>(1, n / 100000);
  using Acc = PosteriorAccumulator<MixT>;
  return chunked_reduce<Acc>(
      n, threads, [] { return Acc{}; },
      [&](Acc& acc, std::int64_t i) {
        RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
        MixT mix = draw(sub);
        auto [lw, moments] = eval(mix);
        acc.add(std::move(mix), lw, std::move(moments), i % stride == 0);
      },
      [](Acc& a, const Acc& b) { a.merge(b); });
}

template <class MixT>
void finalize_mixture(const PosteriorAccumulator<MixT>& acc,
                      WeightedMixture<MixT>& out) {
  out.samples = acc.stored;
  out.log_normalizer = acc.log_normalizer();
  out.ess = acc.ess();
  out.layer_means.clear();
  for (const Matrix& s : acc.layer_sums) out.layer_means.push_back(s / acc.sum_w);
  out.top_mean = acc.top_sum / acc.sum_w;
}

// Geyer initial-monotone-sequence effective sample size of a scalar trace.
inline double geyer_ess(const std::vector<double>& trace) {
  const std::int64_t m = static_cast<std::int64_t>(trace.size());
  if (m < 4) return static_cast<double>(m);
  double mean = 0.0;
  for (const double v : trace) mean += v;
  mean /= static_cast<double>(m);
  auto gamma = [&](std::int64_t k) {
    double s = 0.0;
    for (std::int64_t t = 0; t + k < m; ++t)
      s += (trace[static_cast<std::size_t>(t)] - mean) *
           (trace[static_cast<std::size_t>(t + k)] - mean);
    return s / static_cast<double>(m);
  };
  const double g0 = gamma(0);
  if (!(g0 > 0.0)) return static_cast<double>(m);
  double sigma2 = -g0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::int64_t j = 0; 2 * j + 1 < m; ++j) {
    double pair = gamma(2 * j) + gamma(2 * j + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev);
    sigma2 += 2.0 * pair;
    prev = pair;
  }
  const double ess = static_cast<double>(m) * g0 / sigma2;
  return std::min(std::max(ess, 1.0), static_cast<double>(m));
}

// Random-walk Metropolis in log-Cholesky coordinates. The Model supplies the
// layer dims/dofs, the Phi_beta evaluation from the per-layer lower factors,
// and the conversion from factors to the stored mixing type.
template <class Model>
WeightedMixture<typename Model::Mix> run_metropolis(const Model& model,
                                                    std::int64_t n_steps,
                                                    double step_size,
                                                    RngStream rng,
                                                    std::int64_t thin) {
  using MixT = typename Model::Mix;
  if (n_steps < 10) throw ConfigError("metropolis: need at least 10 steps");
  if (!(step_size > 0.0))
    throw ConfigError("metropolis: step_size must be > 0");

  const std::size_t n_layers = model.dofs.size();
  std::vector<Eigen::Index> offsets(n_layers + 1, 0);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Eigen::Index d = model.dims[l];
    offsets[l + 1] = offsets[l] + d * (d + 1) / 2;
  }
  const Eigen::Index n_coords = offsets[n_layers];

  // theta -> per-layer lower factors (diagonal stored in log scale).
  std::vector<Matrix> factors(n_layers);
  auto unpack = [&](const Vector& theta) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      const Eigen::Index d = model.dims[l];
      Matrix lf = Matrix::Zero(d, d);
      Eigen::Index k = offsets[l];
      for (Eigen::Index j = 0; j < d; ++j) {
        lf(j, j) = std::exp(theta[k++]);
        for (Eigen::Index i = j + 1; i < d; ++i) lf(i, j) = theta[k++];
      }
      factors[l] = std::move(lf);
    }
  };

  // Unnormalized log posterior over theta: per-layer Wishart prior density,
  // the log-Cholesky Jacobian, and the likelihood term -Phi_beta/2.
  auto log_target = [&](const Vector& theta) {
    double t = 0.0;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const Eigen::Index d = model.dims[l];
      const double dof = model.dofs[l];
      const Matrix& lf = factors[l];
      double log_diag_sum = 0.0, jac = static_cast<double>(d) * std::log(2.0);
      Eigen::Index k = offsets[l];
      for (Eigen::Index j = 0; j < d; ++j) {
        log_diag_sum += theta[k];
        jac += static_cast<double>(d - j + 1) * theta[k];
        k += d - j;
      }
      t += (dof - static_cast<double>(d) - 1.0) * log_diag_sum -
           0.5 * dof * lf.squaredNorm() + jac;
    }
    return t - 0.5 * model.phi(factors);
  };

  const std::int64_t n_burn = n_steps / 5;
  const std::int64_t n_keep = n_steps - n_burn;
  if (thin <= 0) thin = std::max<std::int64_t>(1, n_keep / 20000);

  Vector theta = Vector::Zero(n_coords);
  unpack(theta);
  double current = log_target(theta);

  WeightedMixture<MixT> out;
  PosteriorAccumulator<MixT> acc;
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(n_keep / thin + 1));
  std::int64_t accepted = 0;
  Vector proposal(n_coords);

  for (std::int64_t s = 0; s < n_steps; ++s) {
    for (Eigen::Index i = 0; i < n_coords; ++i)
      proposal[i] = theta[i] + step_size * rng.normal();
    unpack(proposal);
    const double cand = log_target(proposal);
    if (std::log(rng.uniform()) < cand - current) {
      theta = proposal;
      current = cand;
      ++accepted;
    } else {
      unpack(theta);  // restore factors for the accumulator below
    }
    if (s >= n_burn) {
      const bool store = (s - n_burn) % thin == 0;
      acc.add(model.pack(factors), 0.0, std::nullopt, store);
      if (store) trace.push_back(current);
    }
  }

  finalize_mixture(acc, out);
  out.ess = geyer_ess(trace);
  out.acceptance_rate =
      static_cast<double>(accepted) / static_cast<double>(n_steps);
  if (out.acceptance_rate < 0.1 || out.acceptance_rate > 0.7) {
    out.warnings.push_back(
        "ChainNotMixed: acceptance rate " +
        std::to_string(out.acceptance_rate) +
        " outside [0.1, 0.7]; adjust step_size");
  }
  return out;
}

struct FcMetropolisModel {
  using Mix = MixingSample;
  const FcNetworkSpec& spec;
  const Matrix& gram;  // X^T X / (N_0 lambda*)
  const Vector& y;
  double beta;
  std::vector<Eigen::Index> dims;
  std::vector<double> dofs;

  double phi(const std::vector<Matrix>& factors) const {
    Matrix b = Matrix::Identity(spec.d, spec.d);
    for (const Matrix& lf : factors) b = b * lf.transpose();
    const SpdMatrix s11(Matrix(kron(gram, Matrix(b.transpose() * b))));
    return phi_beta(s11, y, beta);
  }

  Mix pack(const std::vector<Matrix>& factors) const {
    std::vector<SpdMatrix> qs;
    qs.reserve(factors.size());
    for (const Matrix& lf : factors)
      qs.push_back(SpdMatrix(Matrix(lf * lf.transpose())));
    return make_mixing_sample(std::move(qs));
  }
};

struct ConvMetropolisModel {
  using Mix = ConvMixingSample;
  const ConvNetworkSpec& spec;
  const std::vector<Matrix>& x;
  const Vector& y;
  double beta;
  std::vector<Eigen::Index> dims;
  std::vector<double> dofs;

  double phi(const std::vector<Matrix>& factors) const {
    return phi_beta(kernel_conv(spec, x, tmap(factors)), y, beta);
  }

  SpdMatrix tmap(const std::vector<Matrix>& factors) const {
    std::vector<SpdMatrix> qs;
    qs.reserve(factors.size());
    for (const Matrix& lf : factors)
      qs.push_back(SpdMatrix(Matrix(lf * lf.transpose())));
    return backward_tmap(spec, qs);
  }

  Mix pack(const std::vector<Matrix>& factors) const {
    std::vector<SpdMatrix> qs;
    qs.reserve(factors.size());
    for (const Matrix& lf : factors)
      qs.push_back(SpdMatrix(Matrix(lf * lf.transpose())));
    return ConvMixingSample{qs, backward_tmap(spec, qs)};
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Mixing-measure samplers
// ---------------------------------------------------------------------------

inline FcWeightedMixture posterior_mixing_is(const FcNetworkSpec& spec,
                                             const Matrix& x, const Vector& y,
                                             double beta,
                                             std::int64_t n_samples,
                                             RngStream rng, int threads = 0) {
  spec.validate();
  spec.require_mixture();
  const Matrix gram =
      x.transpose() * x / (static_cast<double>(spec.n0) * spec.lambda_star());
  auto acc = detail::run_importance<MixingSample>(
      n_samples, rng, threads,
      [&](RngStream& r) { return sample_mixing(spec, r); },
      [&](const MixingSample& mix) {
        const SpdMatrix s11(
            Matrix(kron(gram, mix.q_top.matrix())));
        return std::pair{-0.5 * phi_beta(s11, y, beta),
                         std::optional<PredictiveMoments>{}};
      });
  FcWeightedMixture out;
  detail::finalize_mixture(acc, out);
  if (out.ess < 10.0) {
    throw DegenerateWeights(
        "posterior_mixing_is: effective sample size " +
        std::to_string(out.ess) +
        " < 10; the weights have degenerated -- use posterior_mixing_mh");
  }
  return out;
}

inline ConvWeightedMixture posterior_mixing_is(const ConvNetworkSpec& spec,
                                               const std::vector<Matrix>& x,
                                               const Vector& y, double beta,
                                               std::int64_t n_samples,
                                               RngStream rng,
                                               int threads = 0) {
  spec.validate();
  spec.require_mixture();
  auto acc = detail::run_importance<ConvMixingSample>(
      n_samples, rng, threads,
      [&](RngStream& r) {
        std::vector<SpdMatrix> qs = sample_conv_mixing(spec, r);
        SpdMatrix tq = backward_tmap(spec, qs);
        return ConvMixingSample{std::move(qs), std::move(tq)};
      },
      [&](const ConvMixingSample& mix) {
        return std::pair{
            -0.5 * phi_beta(kernel_conv(spec, x, mix.tq), y, beta),
            std::optional<PredictiveMoments>{}};
      });
  ConvWeightedMixture out;
  detail::finalize_mixture(acc, out);
  if (out.ess < 10.0) {
    throw DegenerateWeights(
        "posterior_mixing_is: effective sample size " +
        std::to_string(out.ess) +
        " < 10; the weights have degenerated -- use posterior_mixing_mh");
  }
  return out;
}

inline FcWeightedMixture posterior_mixing_mh(const FcNetworkSpec& spec,
                                             const Matrix& x, const Vector& y,
                                             double beta, std::int64_t n_steps,
                                             double step_size, RngStream rng,
                                             std::int64_t thin = 0) {
  spec.validate();
  spec.require_mixture();
  const Matrix gram =
      x.transpose() * x / (static_cast<double>(spec.n0) * spec.lambda_star());
  detail::FcMetropolisModel model{spec, gram, y, beta, {}, {}};
  for (const int w : spec.widths) {
    model.dims.push_back(spec.d);
    model.dofs.push_back(static_cast<double>(w));
  }
  return detail::run_metropolis(model, n_steps, step_size, rng, thin);
}

inline ConvWeightedMixture posterior_mixing_mh(const ConvNetworkSpec& spec,
                                               const std::vector<Matrix>& x,
                                               const Vector& y, double beta,
                                               std::int64_t n_steps,
                                               double step_size, RngStream rng,
                                               std::int64_t thin = 0) {
  spec.validate();
  spec.require_mixture();
  detail::ConvMetropolisModel model{spec, x, y, beta, {}, {}};
  for (int l = 1; l <= spec.depth(); ++l) {
    model.dims.push_back(spec.n0);
    model.dofs.push_back(
        static_cast<double>(spec.channels[static_cast<std::size_t>(l)]));
  }
  return detail::run_metropolis(model, n_steps, step_size, rng, thin);
}

// Mean-field reweighting: the quadratic part of Phi scales with the common
// width N while the determinant part does not, so the log-weight is
// -(N/2) Phi0 - R/2. Any predictive mean formed from this mixture must be
// rescaled by sqrt(N) (the outputs concentrate at scale 1/sqrt(N)).
inline FcWeightedMixture meanfield_mixing(const FcNetworkSpec& spec,
                                          const Matrix& x, const Vector& y,
                                          double beta, std::int64_t n_samples,
                                          RngStream rng, int threads = 0) {
  spec.validate();
  spec.require_mixture();
  for (const int w : spec.widths) {
    if (w != spec.widths.front())
      throw ConfigError(
          "meanfield_mixing: the mean-field rescaling assumes equal widths");
  }
  const double width = static_cast<double>(spec.widths.front());
  const Matrix gram =
      x.transpose() * x / (static_cast<double>(spec.n0) * spec.lambda_star());
  auto acc = detail::run_importance<MixingSample>(
      n_samples, rng, threads,
      [&](RngStream& r) { return sample_mixing(spec, r); },
      [&](const MixingSample& mix) {
        const SpdMatrix s11(
            Matrix(kron(gram, mix.q_top.matrix())));
        const PhiParts parts = phi_beta_parts(s11, y, beta);
        return std::pair{-0.5 * (width * parts.quadratic + parts.log_det),
                         std::optional<PredictiveMoments>{}};
      });
  FcWeightedMixture out;
  detail::finalize_mixture(acc, out);
  if (out.ess < 10.0) {
    throw DegenerateWeights(
        "meanfield_mixing: effective sample size " + std::to_string(out.ess) +
        " < 10 (expected at large width; use the rate-function machinery)");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Design-rank gates
// ---------------------------------------------------------------------------

namespace detail {

constexpr double kRankTolerance = 1e-10;

// Full matrix rank of the enlarged design (all min(rows, cols) singular
// values above tolerance x largest): the testable proxy for the strict
// positivity hypothesis on the enlarged Gram matrix.
inline void require_full_rank(const Matrix& design, const char* where) {
  Eigen::JacobiSVD<Matrix> svd(design);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv[0] > 0.0) ||
      sv[sv.size() - 1] < kRankTolerance * sv[0]) {
    const double smallest = sv.size() == 0 ? 0.0 : sv[sv.size() - 1];
    throw RankDeficientDesign(
        std::string(where) +
        ": enlarged design is numerically rank-deficient; smallest singular "
        "value " +
        std::to_string(smallest) + " (largest " +
        std::to_string(sv.size() == 0 ? 0.0 : sv[0]) + ")");
  }
}

inline void require_conv_design(const ConvNetworkSpec& spec, const Matrix& x0,
                                const std::vector<Matrix>& x,
                                const char* where) {
  Matrix g = Matrix::Zero(spec.n0, spec.n0);
  for (Eigen::Index a = 0; a < x0.rows(); ++a) {
    g += x0.row(a).transpose() * x0.row(a);
    for (const Matrix& xe : x) g += xe.row(a).transpose() * xe.row(a);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
  const auto& ev = eig.eigenvalues();
  if (!(ev[ev.size() - 1] > 0.0) ||
      ev[0] < kRankTolerance * ev[ev.size() - 1]) {
    throw RankDeficientDesign(
        std::string(where) +
        ": summed channel Gram of the enlarged design is rank-deficient; "
        "smallest eigenvalue " +
        std::to_string(ev[0]) + " (largest " +
        std::to_string(ev[ev.size() - 1]) + ")");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Posterior predictive mixtures
// ---------------------------------------------------------------------------

enum class PosteriorSampler { importance, metropolis };

template <class MixT>
struct PredictiveMixture {
  Vector mean;    // mixture mean of the test output
  SpdMatrix cov;  // mixture covariance (law of total variance)
  WeightedMixture<MixT> mixture;
};

inline PredictiveMixture<MixingSample> predictive_mixture(
    const FcNetworkSpec& spec, const Vector& x0, const Matrix& x,
    const Vector& y, double beta, PosteriorSampler sampler, std::int64_t n,
    RngStream rng, double step_size = 0.1, int threads = 0) {
  spec.validate();
  spec.require_mixture();
  Matrix enlarged(spec.n0, x.cols() + 1);
  enlarged.col(0) = x0;
  enlarged.rightCols(x.cols()) = x;
  detail::require_full_rank(enlarged, "predictive_mixture");

  PredictiveMixture<MixingSample> out;
  if (sampler == PosteriorSampler::importance) {
    auto acc = detail::run_importance<MixingSample>(
        n, rng, threads,
        [&](RngStream& r) { return sample_mixing(spec, r); },
        [&](const MixingSample& mix) {
          const SigmaBlocks blocks = sigma_blocks_fc(spec, x0, x, mix);
          const double lw = -0.5 * phi_beta(blocks.s11, y, beta);
          return std::pair{
              lw, std::optional<PredictiveMoments>(
                      predictive_moments(blocks, y, beta))};
        });
    detail::finalize_mixture(acc, out.mixture);
    if (out.mixture.ess < 10.0) {
      throw DegenerateWeights(
          "predictive_mixture: effective sample size " +
          std::to_string(out.mixture.ess) + " < 10; use the metropolis sampler");
    }
    out.mean = acc.mean_sum / acc.sum_w;
    const Matrix second = acc.second_sum / acc.sum_w;
    out.cov = SpdMatrix(Matrix(second - out.mean * out.mean.transpose()));
    return out;
  }

  out.mixture = posterior_mixing_mh(spec, x, y, beta, n, step_size, rng);
  Vector mean = Vector::Zero(spec.d);
  Matrix second = Matrix::Zero(spec.d, spec.d);
  for (auto& entry : out.mixture.samples) {
    const SigmaBlocks blocks = sigma_blocks_fc(spec, x0, x, entry.mix);
    entry.moments = predictive_moments(blocks, y, beta);
    mean += entry.moments->mean;
    second += entry.moments->cov.matrix() +
              entry.moments->mean * entry.moments->mean.transpose();
  }
  const double m = static_cast<double>(out.mixture.samples.size());
  out.mean = mean / m;
  out.cov = SpdMatrix(Matrix(second / m - out.mean * out.mean.transpose()));
  return out;
}

inline PredictiveMixture<ConvMixingSample> predictive_mixture(
    const ConvNetworkSpec& spec, const Matrix& x0,
    const std::vector<Matrix>& x, const Vector& y, double beta,
    PosteriorSampler sampler, std::int64_t n, RngStream rng,
    double step_size = 0.1, int threads = 0) {
  spec.validate();
  spec.require_mixture();
  detail::require_conv_design(spec, x0, x, "predictive_mixture");

  PredictiveMixture<ConvMixingSample> out;
  if (sampler == PosteriorSampler::importance) {
    auto acc = detail::run_importance<ConvMixingSample>(
        n, rng, threads,
        [&](RngStream& r) {
          std::vector<SpdMatrix> qs = sample_conv_mixing(spec, r);
          SpdMatrix tq = backward_tmap(spec, qs);
          return ConvMixingSample{std::move(qs), std::move(tq)};
        },
        [&](const ConvMixingSample& mix) {
          const SigmaBlocks blocks = sigma_blocks_conv(spec, x0, x, mix.tq);
          const double lw = -0.5 * phi_beta(blocks.s11, y, beta);
          return std::pair{
              lw, std::optional<PredictiveMoments>(
                      predictive_moments(blocks, y, beta))};
        });
    detail::finalize_mixture(acc, out.mixture);
    if (out.mixture.ess < 10.0) {
      throw DegenerateWeights(
          "predictive_mixture: effective sample size " +
          std::to_string(out.mixture.ess) + " < 10; use the metropolis sampler");
    }
    out.mean = acc.mean_sum / acc.sum_w;
    const Matrix second = acc.second_sum / acc.sum_w;
    out.cov = SpdMatrix(Matrix(second - out.mean * out.mean.transpose()));
    return out;
  }

  out.mixture = posterior_mixing_mh(spec, x, y, beta, n, step_size, rng);
  Vector mean = Vector::Zero(1);
  Matrix second = Matrix::Zero(1, 1);
  for (auto& entry : out.mixture.samples) {
    const SigmaBlocks blocks = sigma_blocks_conv(spec, x0, x, entry.mix.tq);
    entry.moments = predictive_moments(blocks, y, beta);
    mean += entry.moments->mean;
    second += entry.moments->cov.matrix() +
              entry.moments->mean * entry.moments->mean.transpose();
  }
  const double m = static_cast<double>(out.mixture.samples.size());
  out.mean = mean / m;
  out.cov = SpdMatrix(Matrix(second / m - out.mean * out.mean.transpose()));
  return out;
}

// ---------------------------------------------------------------------------
// Joint posterior over (test, training) outputs for one mixing draw
// ---------------------------------------------------------------------------

struct GaussianMoments {
  Vector mean;
  SpdMatrix cov;
};

// The joint posterior of all D(P+1) output coordinates is Gaussian with
// precision beta Pi0 + Sigma^{-1} and mean beta (beta Pi0 + Sigma^{-1})^{-1} ytilde,
// where Pi0 zeroes the test block and ytilde = (0, y). Solved through
// (beta Pi0 + Sigma^{-1})^{-1} = Sigma (I + beta Pi0 Sigma)^{-1} so that
// Sigma is never inverted on its own.
inline GaussianMoments joint_posterior_moments(const FcNetworkSpec& spec,
                                               const Vector& x0,
                                               const Matrix& x,
                                               const Vector& y, double beta,
                                               const MixingSample& mix) {
  if (!(beta > 0.0))
    throw ConfigError("joint_posterior_moments: beta must be > 0");
  const Eigen::Index d = spec.d, p = x.cols();
  if (y.size() != d * p)
    throw ShapeMismatch("joint_posterior_moments: y length != D*P");
  // The joint law needs the full enlarged covariance to be invertible, which
  // requires the enlarged design to have independent columns.
  if (p + 1 > spec.n0) {
    throw RankDeficientDesign(
        "joint_posterior_moments: enlarged design has more examples than "
        "input dimensions, so the joint covariance is singular");
  }
  Matrix enlarged(spec.n0, p + 1);
  enlarged.col(0) = x0;
  enlarged.rightCols(p) = x;
  detail::require_full_rank(enlarged, "joint_posterior_moments");

  const SigmaBlocks blocks = sigma_blocks_fc(spec, x0, x, mix);
  const Matrix sigma = blocks.assembled();
  const Eigen::Index total = d * (p + 1);
  Vector ytilde = Vector::Zero(total);
  ytilde.tail(d * p) = y;
  // M = I + beta Pi0 Sigma: Pi0 keeps only the training rows.
  Matrix m = Matrix::Identity(total, total);
  m.bottomRows(d * p) += beta * sigma.bottomRows(d * p);
  Eigen::PartialPivLU<Matrix> lu(m);
  GaussianMoments out;
  out.mean = beta * (sigma * lu.solve(ytilde));
  const Matrix cov = sigma * lu.solve(Matrix(Matrix::Identity(total, total)));
  out.cov = SpdMatrix(Matrix((cov + cov.transpose()) * 0.5));
  return out;
}

}  // namespace dlnk
