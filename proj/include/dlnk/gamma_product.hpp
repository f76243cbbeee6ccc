#pragma once

// Density of the product q = Q_1 ... Q_L of independent Q_ell ~
// Gamma(N_ell/2, rate N_ell/2) variables — the scalar mixing law of a
// width-N_ell stack. Computed in the log domain: T = log q is the sum of
// the layer variables T_ell = log Q_ell, whose densities are smooth and
// unimodal, so the product density is an L-fold convolution evaluated on a
// shared uniform lattice with Simpson weights. All tables are max-shifted so
// the arithmetic stays in a safe floating-point range for any width.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "dlnk/errors.hpp"

namespace dlnk {

namespace detail {

// log density of T = log Q for Q ~ Gamma(n/2, rate n/2):
//   log f(t) = (n/2) log(n/2) - lgamma(n/2) + (n/2) t - (n/2) e^t.
inline double log_gamma_exp_density(double dof, double t) {
  const double a = 0.5 * dof;
  return a * std::log(a) - std::lgamma(a) + a * t - a * std::exp(t);
}

// Bracket [t_lo, t_hi] around the peak t = 0 where the log density stays
// above (peak - drop); the left tail is linear, the right superexponential.
inline std::pair<double, double> gamma_exp_bracket(double dof, double drop) {
  const double a = 0.5 * dof;
  // g(t) = a (t - e^t + 1) is 0 at t = 0 and decreasing away from it.
  auto g = [&](double t) { return a * (t - std::exp(t) + 1.0); };
  double left_a = -1.0;
  while (g(left_a) > -drop) left_a *= 2.0;
  double left_b = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (left_a + left_b);
    (g(m) > -drop ? left_b : left_a) = m;
  }
  double right_a = 0.0, right_b = 1.0;
  while (g(right_b) > -drop) right_b *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double m = 0.5 * (right_a + right_b);
    (g(m) > -drop ? right_a : right_b) = m;
  }
  return {left_a, right_b};
}

}  // namespace detail

// Tabulated density of q = prod Q_ell on a uniform lattice in t = log q.
class GammaProductDensity {
 public:
  explicit GammaProductDensity(std::vector<double> dofs, double grid_step = 0.0)
      : dofs_(std::move(dofs)) {
    if (dofs_.empty())
      throw ConfigError("GammaProductDensity: need at least one layer");
    for (const double n : dofs_)
      if (!(n > 0.0)) throw ConfigError("GammaProductDensity: dof must be > 0");
    h_ = grid_step > 0.0 ? grid_step : (dofs_.size() <= 2 ? 0.005 : 0.01);
    constexpr double kLogDrop = 160.0;

    // Per-layer tables on the shared lattice t = i * h, as linear values
    // relative to a running log shift.
    struct Table {
      long start;                 // lattice index of the first sample
      std::vector<double> vals;   // e^{log f - shift}
      double shift;
    };
    auto layer_table = [&](double dof) {
      const auto [lo, hi] = detail::gamma_exp_bracket(dof, kLogDrop);
      long i0 = static_cast<long>(std::floor(lo / h_));
      long i1 = static_cast<long>(std::ceil(hi / h_));
      if ((i1 - i0) % 2 != 0) ++i1;  // even interval count for Simpson
      Table t;
      t.start = i0;
      t.vals.resize(static_cast<std::size_t>(i1 - i0) + 1);
      double peak = -1e300;
      for (long i = i0; i <= i1; ++i)
        peak = std::max(peak,
                        detail::log_gamma_exp_density(dof, i * h_));
      t.shift = peak;
      for (long i = i0; i <= i1; ++i)
        t.vals[static_cast<std::size_t>(i - i0)] =
            std::exp(detail::log_gamma_exp_density(dof, i * h_) - peak);
      return t;
    };

    Table acc = layer_table(dofs_.front());
    for (std::size_t l = 1; l < dofs_.size(); ++l) {
      Table nxt = layer_table(dofs_[l]);
      // Simpson weights folded into the shorter factor.
      const Table& small = nxt.vals.size() <= acc.vals.size() ? nxt : acc;
      const Table& large = nxt.vals.size() <= acc.vals.size() ? acc : nxt;
      std::vector<double> weighted(small.vals.size());
      for (std::size_t j = 0; j < small.vals.size(); ++j) {
        double w = (j == 0 || j + 1 == small.vals.size()) ? 1.0
                   : (j % 2 == 1)                         ? 4.0
                                                          : 2.0;
        weighted[j] = small.vals[j] * w * (h_ / 3.0);
      }
      Table out;
      out.start = acc.start + nxt.start;
      out.shift = acc.shift + nxt.shift;
      out.vals.assign(acc.vals.size() + nxt.vals.size() - 1, 0.0);
      for (std::size_t k = 0; k < out.vals.size(); ++k) {
        double s = 0.0;
        const std::size_t j_lo =
            k >= large.vals.size() ? k - large.vals.size() + 1 : 0;
        const std::size_t j_hi = std::min(k, weighted.size() - 1);
        for (std::size_t j = j_lo; j <= j_hi; ++j)
          s += weighted[j] * large.vals[k - j];
        out.vals[k] = s;
      }
      const double m = *std::max_element(out.vals.begin(), out.vals.end());
      for (double& v : out.vals) v /= m;
      out.shift += std::log(m);
      acc = std::move(out);
    }

    start_ = acc.start;
    log_f_.resize(acc.vals.size());
    for (std::size_t i = 0; i < log_f_.size(); ++i)
      log_f_[i] = acc.vals[i] > 0.0 ? std::log(acc.vals[i]) + acc.shift
                                    : -1e300;

    // Normalization bookkeeping: Simpson over the final lattice (the table
    // length is odd by construction since every factor had even intervals).
    double z = 0.0;
    for (std::size_t i = 0; i < log_f_.size(); ++i) {
      const double w = (i == 0 || i + 1 == log_f_.size()) ? 1.0
                       : (i % 2 == 1)                     ? 4.0
                                                          : 2.0;
      z += w * (h_ / 3.0) * std::exp(log_f_[i]);
    }
    defect_ = std::abs(z - 1.0);
    log_rescale_ = -std::log(z);
  }

  // Density of the product variable q (zero off the positive half-line).
  double density(double q) const {
    if (std::isnan(q)) throw ConfigError("GammaProductDensity: q is NaN");
    if (q <= 0.0) return 0.0;
    const double t = std::log(q);
    const double lf = log_density_t(t);
    return lf <= -1e290 ? 0.0 : std::exp(lf - t);
  }

  // Log density of T = log q, cubic-Hermite interpolated on the lattice
  // (zero outside: the table already covers everything above peak - 160).
  double log_density_t(double t) const {
    const double u = t / h_ - static_cast<double>(start_);
    if (u < 0.0 || u > static_cast<double>(log_f_.size() - 1)) return -1e300;
    const auto n = static_cast<long>(log_f_.size());
    long i = std::min(static_cast<long>(u), n - 2);
    const double s = u - static_cast<double>(i);
    const double f0 = log_f_[static_cast<std::size_t>(i)];
    const double f1 = log_f_[static_cast<std::size_t>(i + 1)];
    if (f0 <= -1e290 || f1 <= -1e290)
      return std::min(f0, f1);
    auto slope = [&](long j) {
      if (j > 0 && j + 1 < n) {
        const double a = log_f_[static_cast<std::size_t>(j - 1)];
        const double b = log_f_[static_cast<std::size_t>(j + 1)];
        if (a > -1e290 && b > -1e290) return 0.5 * (b - a);
      }
      if (j + 1 < n)
        return log_f_[static_cast<std::size_t>(j + 1)] -
               log_f_[static_cast<std::size_t>(j)];
      return log_f_[static_cast<std::size_t>(j)] -
             log_f_[static_cast<std::size_t>(j - 1)];
    };
    const double d0 = slope(i), d1 = slope(i + 1);
    const double s2 = s * s, s3 = s2 * s;
    const double v = (2.0 * s3 - 3.0 * s2 + 1.0) * f0 +
                     (s3 - 2.0 * s2 + s) * d0 +
                     (-2.0 * s3 + 3.0 * s2) * f1 + (s3 - s2) * d1;
    return v + log_rescale_;
  }

  // |integral - 1| of the raw convolution table, before the internal rescale
  // that pins the returned density to total mass one.
  double normalization_defect() const { return defect_; }

  double t_lower() const { return static_cast<double>(start_) * h_; }
  double t_upper() const {
    return (static_cast<double>(start_) +
            static_cast<double>(log_f_.size() - 1)) *
           h_;
  }
  double grid_step() const { return h_; }
  const std::vector<double>& dofs() const { return dofs_; }

 private:
  std::vector<double> dofs_;
  double h_;
  long start_ = 0;
  std::vector<double> log_f_;
  double defect_ = 0.0;
  double log_rescale_ = 0.0;
};

// Convenience one-shot evaluation (builds the table; prefer constructing a
// GammaProductDensity when evaluating many points).
inline double gamma_product_density(const std::vector<double>& dofs,
                                    double q) {
  return GammaProductDensity(dofs).density(q);
}

}  // namespace dlnk
