#pragma once

// 1-D convolutional deep linear network (periodic boundary, unit stride,
// scalar output).
//
// Weight space: channel-mixing taps W^(l)_{m,ab} plus a readout carrying both
// a channel and a spatial index,
//
//   h^(l)_{a,i} = 1/sqrt(M C_{l-1}) sum_{b,m} W^(l-1)_{m,ab} h^(l-1)_{b,i+m},
//   S           = 1/sqrt(C_L N_0)  sum_{a,i} W^(L)_{a,i} h^(L)_{a,i},
//
// indices mod N_0, m in [-floor(M/2), floor(M/2)], entries iid N(0,1/lambda).
//
// Mixture: Q_l ~ W_{N_0}(I/C_l, C_l) independently; the backward recursion
//
//   Q*_L = avg_m T_m^T Q_L T_m,
//   Q*_l = avg_m T_m^T (L*_{l+1} Q_l L*_{l+1}^T) T_m   (l = L-1, ..., 1),
//
// with L* the lower Cholesky factor of Q*_{l+1}, produces the local kernel
// matrix T = Q*_1; conditionally on the Q's the output vector is N(0, K_C),
//
//   K_C[mu,nu] = sum_{a0} x^mu_{a0,:} T x^nu_{a0,:}^T / (lambda* C_0 N_0).
//
// The 1/N_0 comes from the readout normalization: integrating the readout
// layer leaves 1/(lambda_L C_L N_0) in the exponent and the backward
// recursion never absorbs that spatial factor (check: for a single layer,
// E[S^mu S^nu] = sum_{a0} <x^mu_{a0}, x^nu_{a0}> / (lambda* C_0 N_0) directly
// from the weight-space definition, matching the kernel at E[T] = identity).

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dlnk/errors.hpp"
#include "dlnk/linalg.hpp"
#include "dlnk/rng.hpp"
#include "dlnk/wishart.hpp"

namespace dlnk {

struct ConvNetworkSpec {
  Eigen::Index n0 = 0;             // spatial size N_0
  std::vector<int> channels;      // C_0 .. C_L
  int mask = 1;                    // M, odd, 1 <= M <= N_0
  std::vector<double> precisions;  // lambda_0 .. lambda_L

  int depth() const { return static_cast<int>(channels.size()) - 1; }

  double lambda_star() const {
    double p = 1.0;
    for (const double l : precisions) p *= l;
    return p;
  }

  int min_hidden_channels() const {
    int m = channels[1];
    for (std::size_t l = 1; l < channels.size(); ++l)
      m = std::min(m, channels[l]);
    return m;
  }

  bool mixture_representable() const {
    return min_hidden_channels() > n0;
  }

  void validate() const {
    if (n0 < 1) throw ConfigError("conv spec: n0 must be >= 1");
    if (channels.size() < 2)
      throw ConfigError("conv spec: need input channels plus at least one layer");
    for (const int c : channels)
      if (c < 1) throw ConfigError("conv spec: channel counts must be >= 1");
    if (mask < 1 || mask > n0)
      throw ConfigError("conv spec: mask must satisfy 1 <= M <= n0");
    if (mask % 2 == 0)
      throw ConfigError("conv spec: mask width must be odd");
    if (precisions.size() != channels.size()) {
      throw ConfigError("conv spec: expected " +
                        std::to_string(channels.size()) + " precisions, got " +
                        std::to_string(precisions.size()));
    }
    for (const double l : precisions)
      if (!(l > 0.0)) throw ConfigError("conv spec: precisions must be > 0");
  }

  void require_mixture() const {
    if (!mixture_representable()) {
      throw DofTooSmall("conv spec: mixture representation needs min channels " +
                        std::to_string(min_hidden_channels()) +
                        " > spatial size " + std::to_string(n0));
    }
  }
};

struct ConvDataset {
  std::vector<Matrix> x;  // per example, a C_0 x N_0 matrix (row = channel)
  Vector y;               // length P

  Eigen::Index p() const { return static_cast<Eigen::Index>(x.size()); }

  void validate(const ConvNetworkSpec& spec) const {
    for (const Matrix& xi : x) {
      if (xi.rows() != spec.channels.front() || xi.cols() != spec.n0) {
        throw ShapeMismatch("conv dataset: example has shape " +
                            std::to_string(xi.rows()) + "x" +
                            std::to_string(xi.cols()) + ", spec wants " +
                            std::to_string(spec.channels.front()) + "x" +
                            std::to_string(spec.n0));
      }
    }
    if (y.size() != p())
      throw ShapeMismatch("conv dataset: label count != example count");
  }
};

// Cyclic shift operator T_m with [T_m]_{ij} = 1 iff j = i + m (mod n0).
struct TranslationOp {
  int m = 0;
  Eigen::Index n0 = 0;

  Matrix matrix() const {
    Matrix t = Matrix::Zero(n0, n0);
    for (Eigen::Index i = 0; i < n0; ++i) {
      const Eigen::Index j = (((i + m) % n0) + n0) % n0;
      t(i, j) = 1.0;
    }
    return t;
  }
};

// (1/M) sum_m T_m^T q T_m, computed entrywise as the wrapped-diagonal average
// [out]_{ij} = (1/M) sum_m q_{i+m, j+m} (mod n0).
inline SpdMatrix translation_average(const SpdMatrix& q, int mask) {
  const Eigen::Index n0 = q.dim();
  const int half = mask / 2;
  Matrix out = Matrix::Zero(n0, n0);
  for (Eigen::Index i = 0; i < n0; ++i) {
    for (Eigen::Index j = 0; j < n0; ++j) {
      double s = 0.0;
      for (int m = -half; m <= half; ++m) {
        const Eigen::Index im = (((i + m) % n0) + n0) % n0;
        const Eigen::Index jm = (((j + m) % n0) + n0) % n0;
        s += q(im, jm);
      }
      out(i, j) = s / mask;
    }
  }
  return SpdMatrix(std::move(out));
}

// Backward recursion through the layers; returns T(Q_1, ..., Q_L) = Q*_1.
inline SpdMatrix backward_tmap(const ConvNetworkSpec& spec,
                               const std::vector<SpdMatrix>& qs) {
  if (static_cast<int>(qs.size()) != spec.depth())
    throw ShapeMismatch("backward_tmap: expected one Q per layer");
  SpdMatrix qstar = translation_average(qs.back(), spec.mask);
  for (int l = spec.depth() - 2; l >= 0; --l) {
    const Matrix lstar = cholesky(qstar).lower();
    const Matrix inner =
        lstar * qs[static_cast<std::size_t>(l)].matrix() * lstar.transpose();
    qstar = translation_average(SpdMatrix(inner), spec.mask);
  }
  return qstar;
}

// Local kernel K_C[mu,nu] = sum_{a0} x^mu_{a0,:} tq x^nu_{a0,:}^T / (lambda* C_0 N_0).
inline SpdMatrix kernel_conv(const ConvNetworkSpec& spec,
                             const std::vector<Matrix>& x,
                             const SpdMatrix& tq) {
  const Eigen::Index p = static_cast<Eigen::Index>(x.size());
  const Eigen::Index c0 = spec.channels.front();
  Matrix k = Matrix::Zero(p, p);
  Matrix xa(p, spec.n0);
  for (Eigen::Index a = 0; a < c0; ++a) {
    for (Eigen::Index mu = 0; mu < p; ++mu) xa.row(mu) = x[static_cast<std::size_t>(mu)].row(a);
    k += xa * tq.matrix() * xa.transpose();
  }
  k /= spec.lambda_star() * static_cast<double>(c0) *
       static_cast<double>(spec.n0);
  return SpdMatrix(std::move(k));
}

struct ConvWeights {
  // layers[l][m + M/2] is the C_{l+1} x C_l tap matrix at shift m.
  std::vector<std::vector<Matrix>> layers;
  Matrix readout;  // C_L x N_0
};

inline ConvWeights sample_conv_weights(const ConvNetworkSpec& spec,
                                       RngStream& rng) {
  ConvWeights w;
  w.layers.resize(static_cast<std::size_t>(spec.depth()));
  for (int l = 0; l < spec.depth(); ++l) {
    const double sd = 1.0 / std::sqrt(spec.precisions[static_cast<std::size_t>(l)]);
    auto& taps = w.layers[static_cast<std::size_t>(l)];
    taps.reserve(static_cast<std::size_t>(spec.mask));
    for (int t = 0; t < spec.mask; ++t) {
      Matrix tap(spec.channels[static_cast<std::size_t>(l) + 1],
                 spec.channels[static_cast<std::size_t>(l)]);
      for (Eigen::Index j = 0; j < tap.cols(); ++j)
        for (Eigen::Index i = 0; i < tap.rows(); ++i) tap(i, j) = sd * rng.normal();
      taps.push_back(std::move(tap));
    }
  }
  const double sd = 1.0 / std::sqrt(spec.precisions.back());
  w.readout.resize(spec.channels.back(), spec.n0);
  for (Eigen::Index j = 0; j < spec.n0; ++j)
    for (Eigen::Index i = 0; i < w.readout.rows(); ++i)
      w.readout(i, j) = sd * rng.normal();
  return w;
}

// Deterministic forward pass for one example (a C_0 x N_0 matrix).
inline double conv_forward_one(const ConvNetworkSpec& spec,
                               const ConvWeights& w, const Matrix& x) {
  if (x.rows() != spec.channels.front() || x.cols() != spec.n0)
    throw ShapeMismatch("conv_forward: example shape mismatch");
  const int half = spec.mask / 2;
  Matrix h = x;
  for (int l = 0; l < spec.depth(); ++l) {
    const auto& taps = w.layers[static_cast<std::size_t>(l)];
    const double scale =
        1.0 / std::sqrt(static_cast<double>(spec.mask) *
                        spec.channels[static_cast<std::size_t>(l)]);
    Matrix next = Matrix::Zero(spec.channels[static_cast<std::size_t>(l) + 1],
                               spec.n0);
    for (int m = -half; m <= half; ++m) {
      const Matrix& tap = taps[static_cast<std::size_t>(m + half)];
      for (Eigen::Index i = 0; i < spec.n0; ++i) {
        const Eigen::Index src = (((i + m) % spec.n0) + spec.n0) % spec.n0;
        next.col(i) += tap * h.col(src);
      }
    }
    h = scale * next;
  }
  const double norm = std::sqrt(static_cast<double>(spec.channels.back()) *
                                static_cast<double>(spec.n0));
  return w.readout.cwiseProduct(h).sum() / norm;
}

inline Vector conv_forward(const ConvNetworkSpec& spec, const ConvWeights& w,
                           const std::vector<Matrix>& x) {
  spec.validate();
  Vector s(static_cast<Eigen::Index>(x.size()));
  for (std::size_t mu = 0; mu < x.size(); ++mu)
    s[static_cast<Eigen::Index>(mu)] = conv_forward_one(spec, w, x[mu]);
  return s;
}

inline Vector sample_prior_conv_weightspace_one(const ConvNetworkSpec& spec,
                                                const std::vector<Matrix>& x,
                                                RngStream& rng) {
  const ConvWeights w = sample_conv_weights(spec, rng);
  return conv_forward(spec, w, x);
}

// PSD square root via the symmetric eigendecomposition; tolerates the
// semidefinite kernels produced by rank-deficient designs.
inline Matrix psd_sqrt(const SpdMatrix& k) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k.matrix());
  Vector roots = eig.eigenvalues();
  for (Eigen::Index i = 0; i < roots.size(); ++i)
    roots[i] = std::sqrt(std::max(roots[i], 0.0));
  return eig.eigenvectors() * roots.asDiagonal() *
         eig.eigenvectors().transpose();
}

inline std::vector<SpdMatrix> sample_conv_mixing(const ConvNetworkSpec& spec,
                                                 RngStream& rng) {
  std::vector<SpdMatrix> qs;
  qs.reserve(static_cast<std::size_t>(spec.depth()));
  for (int l = 1; l <= spec.depth(); ++l) {
    const int c = spec.channels[static_cast<std::size_t>(l)];
    const SpdMatrix scale(Matrix(Matrix::Identity(spec.n0, spec.n0) / c));
    qs.push_back(sample_wishart(spec.n0, c, scale, rng));
  }
  return qs;
}

inline Vector sample_prior_conv_mixture_one(const ConvNetworkSpec& spec,
                                            const std::vector<Matrix>& x,
                                            RngStream& rng) {
  const std::vector<SpdMatrix> qs = sample_conv_mixing(spec, rng);
  const SpdMatrix tq = backward_tmap(spec, qs);
  const SpdMatrix k = kernel_conv(spec, x, tq);
  Vector z(k.dim());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return psd_sqrt(k) * z;
}

inline std::vector<Vector> sample_prior_conv_mixture(
    const ConvNetworkSpec& spec, const std::vector<Matrix>& x,
    std::int64_t n_samples, RngStream rng) {
  spec.validate();
  spec.require_mixture();
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (std::int64_t i = 0; i < n_samples; ++i) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
    out.push_back(sample_prior_conv_mixture_one(spec, x, sub));
  }
  return out;
}

// Both sides of the determinant-collapse identity
//   det(I_{N0 P} + (I_{N0} (x) s s^T) K)
//     = det(I_{N0} + sum_{mu,nu} s_mu s_nu K_{.,mu nu}),
// for a PSD four-index tensor K given in its matrix form with multi-index
// (i, mu) = i*P + mu (space-major).
struct SpectrumLemmaCheck {
  double lhs = 0.0;
  double rhs = 0.0;
};

inline SpectrumLemmaCheck spectrum_lemma_check(const Matrix& k_tensor,
                                               const Vector& s) {
  const Eigen::Index p = s.size();
  if (k_tensor.rows() != k_tensor.cols() || k_tensor.rows() % p != 0)
    throw ShapeMismatch("spectrum_lemma_check: tensor shape incompatible with s");
  const Eigen::Index n0 = k_tensor.rows() / p;
  SpectrumLemmaCheck out;
  const Matrix ss = s * s.transpose();
  out.lhs = (Matrix::Identity(n0 * p, n0 * p) +
             kron(Matrix::Identity(n0, n0), ss) * k_tensor)
                .determinant();
  Matrix contracted = Matrix::Zero(n0, n0);
  for (Eigen::Index i = 0; i < n0; ++i)
    for (Eigen::Index j = 0; j < n0; ++j)
      for (Eigen::Index mu = 0; mu < p; ++mu)
        for (Eigen::Index nu = 0; nu < p; ++nu)
          contracted(i, j) += s[mu] * s[nu] * k_tensor(i * p + mu, j * p + nu);
  out.rhs = (Matrix::Identity(n0, n0) + contracted).determinant();
  return out;
}

}  // namespace dlnk
