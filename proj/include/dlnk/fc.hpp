#pragma once

// Fully-connected deep linear network prior.
//
// Two independent routes to the same output law S of shape D x P:
//
//   weight space   S = W^(L)/sqrt(N_L) ... W^(0) X / sqrt(N_0),
//                  W^(l) entries iid N(0, 1/lambda_l);
//
//   mixture        draw Q_l ~ W_D(1/N_l * I, N_l) independently, set
//                  B = U_1 ... U_L with U_l the upper Cholesky transpose of
//                  Q_l, then S = B^T Z X / sqrt(N_0 lambda*) with Z a D x N_0
//                  standard normal matrix. Conditionally on the Q's the draw
//                  is Gaussian with kernel (X^T X / (N_0 lambda*)) (x) Q^(L),
//                  Q^(L) = B^T B.
//
// Keeping the two routes as genuinely separate code paths is the point: their
// agreement is the central equivalence check of the test suite.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dlnk/errors.hpp"
#include "dlnk/linalg.hpp"
#include "dlnk/rng.hpp"
#include "dlnk/wishart.hpp"

namespace dlnk {

struct FcNetworkSpec {
  Eigen::Index n0 = 0;             // input dimension N_0
  std::vector<int> widths;         // hidden widths N_1 .. N_L
  Eigen::Index d = 0;              // output dimension D
  std::vector<double> precisions;  // lambda_0 .. lambda_L

  int depth() const { return static_cast<int>(widths.size()); }

  double lambda_star() const {
    double p = 1.0;
    for (const double l : precisions) p *= l;
    return p;
  }

  int min_width() const {
    int m = widths.front();
    for (const int w : widths) m = std::min(m, w);
    return m;
  }

  // The dimension-reduced representation exists only when every hidden layer
  // is wider than the output; below that only the weight-space sampler is
  // offered.
  bool mixture_representable() const { return min_width() > d; }

  void validate() const {
    if (n0 < 1) throw ConfigError("fc spec: n0 must be >= 1");
    if (d < 1) throw ConfigError("fc spec: output dimension must be >= 1");
    if (widths.empty()) throw ConfigError("fc spec: at least one hidden layer is required");
    for (const int w : widths)
      if (w < 1) throw ConfigError("fc spec: widths must be >= 1");
    if (precisions.size() != widths.size() + 1) {
      throw ConfigError("fc spec: expected " +
                        std::to_string(widths.size() + 1) + " precisions, got " +
                        std::to_string(precisions.size()));
    }
    for (const double l : precisions)
      if (!(l > 0.0)) throw ConfigError("fc spec: precisions must be > 0");
  }

  void require_mixture() const {
    if (!mixture_representable()) {
      throw DofTooSmall("fc spec: mixture representation needs min width " +
                        std::to_string(min_width()) + " > output dim " +
                        std::to_string(d));
    }
  }
};

struct FcDataset {
  Matrix x;  // N_0 x P, one column per example
  Vector y;  // stacked labels (y^1, ..., y^P), length D*P

  Eigen::Index p() const { return x.cols(); }

  void validate(const FcNetworkSpec& spec) const {
    if (x.rows() != spec.n0) {
      throw ShapeMismatch("fc dataset: inputs have dimension " +
                          std::to_string(x.rows()) + ", spec says " +
                          std::to_string(spec.n0));
    }
    if (y.size() != spec.d * x.cols()) {
      throw ShapeMismatch("fc dataset: expected " +
                          std::to_string(spec.d * x.cols()) +
                          " stacked label entries, got " +
                          std::to_string(y.size()));
    }
  }
};

// One draw (Q_1, ..., Q_L) from the prior mixing measure, with the Cholesky
// factors and their running product cached for reuse.
struct MixingSample {
  std::vector<SpdMatrix> qs;
  std::vector<CholeskyFactor> us;  // lower factors L_l (U_l = L_l^T)
  Matrix b;                        // U_1 ... U_L, so q_top = b^T b
  SpdMatrix q_top;
};

inline MixingSample make_mixing_sample(std::vector<SpdMatrix> qs) {
  std::vector<CholeskyFactor> us;
  us.reserve(qs.size());
  Matrix b = Matrix::Identity(qs.front().dim(), qs.front().dim());
  for (const SpdMatrix& q : qs) {
    us.push_back(cholesky(q));
    b = b * us.back().lower().transpose();
  }
  SpdMatrix q_top{Matrix(b.transpose() * b)};
  return MixingSample{std::move(qs), std::move(us), std::move(b),
                      std::move(q_top)};
}

// Q_l ~ W_D(I/N_l, N_l) independently across layers.
inline MixingSample sample_mixing(const FcNetworkSpec& spec, RngStream& rng) {
  spec.validate();
  spec.require_mixture();
  std::vector<SpdMatrix> qs;
  qs.reserve(spec.widths.size());
  for (const int n : spec.widths) {
    const SpdMatrix scale(Matrix(Matrix::Identity(spec.d, spec.d) / n));
    qs.push_back(sample_wishart(spec.d, n, scale, rng));
  }
  return make_mixing_sample(std::move(qs));
}

// Deterministic forward pass through given weights; biases are zero.
inline Matrix fc_forward(const FcNetworkSpec& spec,
                         const std::vector<Matrix>& weights, const Matrix& x) {
  spec.validate();
  if (static_cast<int>(weights.size()) != spec.depth() + 1) {
    throw ShapeMismatch("fc_forward: expected " +
                        std::to_string(spec.depth() + 1) + " weight matrices");
  }
  if (x.rows() != spec.n0) {
    throw ShapeMismatch("fc_forward: input dimension mismatch");
  }
  Matrix h = x;
  Eigen::Index fan_in = spec.n0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Eigen::Index fan_out = (l + 1 < weights.size())
                                     ? spec.widths[l]
                                     : spec.d;
    if (weights[l].rows() != fan_out || weights[l].cols() != fan_in) {
      throw ShapeMismatch("fc_forward: weight " + std::to_string(l) +
                          " has shape " + std::to_string(weights[l].rows()) +
                          "x" + std::to_string(weights[l].cols()) +
                          ", expected " + std::to_string(fan_out) + "x" +
                          std::to_string(fan_in));
    }
    h = (weights[l] * h) / std::sqrt(static_cast<double>(fan_in));
    fan_in = fan_out;
  }
  return h;
}

// Weight tensor with entries iid N(0, 1/lambda_l), drawn in a fixed
// (layer, column-major) order for replay determinism.
inline std::vector<Matrix> sample_fc_weights(const FcNetworkSpec& spec,
                                             RngStream& rng) {
  std::vector<Matrix> weights;
  weights.reserve(spec.widths.size() + 1);
  Eigen::Index fan_in = spec.n0;
  for (int l = 0; l <= spec.depth(); ++l) {
    const Eigen::Index fan_out =
        (l < spec.depth()) ? spec.widths[static_cast<std::size_t>(l)] : spec.d;
    Matrix w(fan_out, fan_in);
    const double sd = 1.0 / std::sqrt(spec.precisions[static_cast<std::size_t>(l)]);
    for (Eigen::Index j = 0; j < fan_in; ++j)
      for (Eigen::Index i = 0; i < fan_out; ++i) w(i, j) = sd * rng.normal();
    weights.push_back(std::move(w));
    fan_in = fan_out;
  }
  return weights;
}

// One weight-space output draw (direct representation).
inline Matrix sample_prior_weightspace_one(const FcNetworkSpec& spec,
                                           const Matrix& x, RngStream& rng) {
  return fc_forward(spec, sample_fc_weights(spec, rng), x);
}

inline std::vector<Matrix> sample_prior_weightspace(const FcNetworkSpec& spec,
                                                    const Matrix& x,
                                                    std::int64_t n_samples,
                                                    RngStream rng) {
  spec.validate();
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (std::int64_t i = 0; i < n_samples; ++i) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
    out.push_back(sample_prior_weightspace_one(spec, x, sub));
  }
  return out;
}

// Shape-renormalized kernel (X^T X / (N_0 lambda*)) (x) Q^(L). Positive
// semidefinite always; strictly positive definite iff X^T X is.
inline SpdMatrix kernel_fc(const FcNetworkSpec& spec, const Matrix& x,
                           const MixingSample& mix) {
  const Matrix gram =
      (x.transpose() * x) / (static_cast<double>(spec.n0) * spec.lambda_star());
  return SpdMatrix(kron(gram, mix.q_top.matrix()));
}

// One mixture-representation output draw: S = B^T Z X / sqrt(N_0 lambda*).
inline Matrix sample_prior_mixture_one(const FcNetworkSpec& spec,
                                       const Matrix& x, RngStream& rng) {
  const MixingSample mix = sample_mixing(spec, rng);
  Matrix z(spec.d, spec.n0);
  for (Eigen::Index j = 0; j < spec.n0; ++j)
    for (Eigen::Index i = 0; i < spec.d; ++i) z(i, j) = rng.normal();
  return (mix.b.transpose() * z * x) /
         std::sqrt(static_cast<double>(spec.n0) * spec.lambda_star());
}

inline std::vector<Matrix> sample_prior_mixture(const FcNetworkSpec& spec,
                                                const Matrix& x,
                                                std::int64_t n_samples,
                                                RngStream rng) {
  spec.validate();
  spec.require_mixture();
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  for (std::int64_t i = 0; i < n_samples; ++i) {
    RngStream sub = rng.substream(static_cast<std::uint64_t>(i));
    out.push_back(sample_prior_mixture_one(spec, x, sub));
  }
  return out;
}

}  // namespace dlnk
