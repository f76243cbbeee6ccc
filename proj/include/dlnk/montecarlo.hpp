#pragma once

// Deterministic parallel Monte-Carlo plumbing.
//
// Work is split into fixed-size chunks (the chunk size never depends on the
// thread count), every chunk owns its accumulator, and chunk results are
// merged in ascending chunk order. Together with per-draw substreams this
// makes every Monte-Carlo estimate bit-identical across thread counts and
// runs -- the determinism contract the CLI reports are tested against.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <utility>
#include <vector>

#include "dlnk/linalg.hpp"

namespace dlnk {

inline int effective_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// make() -> Acc, item(Acc&, i) for each i in [0, n), merge(Acc&, const Acc&)
// applied in ascending chunk order.
template <class Acc, class Make, class Item, class Merge>
Acc chunked_reduce(std::int64_t n, int threads, Make make, Item item,
                   Merge merge, std::int64_t chunk_size = 1024) {
  const std::int64_t n_chunks =
      n <= 0 ? 0 : (n + chunk_size - 1) / chunk_size;
  std::vector<Acc> parts;
  parts.reserve(static_cast<std::size_t>(n_chunks));
  for (std::int64_t c = 0; c < n_chunks; ++c) parts.push_back(make());

  auto run_chunk = [&](std::int64_t c) {
    Acc& acc = parts[static_cast<std::size_t>(c)];
    const std::int64_t lo = c * chunk_size;
    const std::int64_t hi = std::min(n, lo + chunk_size);
    for (std::int64_t i = lo; i < hi; ++i) item(acc, i);
  };

  const int workers = std::min<std::int64_t>(effective_threads(threads), n_chunks);
  if (workers <= 1) {
    for (std::int64_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    std::atomic<std::int64_t> next{0};
    auto loop = [&] {
      for (;;) {
        const std::int64_t c = next.fetch_add(1, std::memory_order_relaxed);
        if (c >= n_chunks) return;
        run_chunk(c);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int t = 0; t + 1 < workers; ++t) pool.emplace_back(loop);
    loop();
    for (auto& th : pool) th.join();
  }

  Acc total = make();
  for (auto& p : parts) merge(total, p);
  return total;
}

// Streaming power sums for vector-valued draws: enough to report means,
// raw second/fourth moments and selected cross moments together with their
// Monte-Carlo standard errors.
class MomentAccumulator {
 public:
  MomentAccumulator() = default;
  MomentAccumulator(Eigen::Index dim,
                    std::vector<std::pair<int, int>> cross_pairs = {})
      : n_(0),
        s1_(Vector::Zero(dim)),
        s2_(Vector::Zero(dim)),
        s4_(Vector::Zero(dim)),
        s8_(Vector::Zero(dim)),
        pairs_(std::move(cross_pairs)),
        p1_(Vector::Zero(static_cast<Eigen::Index>(pairs_.size()))),
        p2_(Vector::Zero(static_cast<Eigen::Index>(pairs_.size()))) {}

  void add(const Vector& x) {
    ++n_;
    s1_ += x;
    const Vector x2 = x.cwiseProduct(x);
    s2_ += x2;
    const Vector x4 = x2.cwiseProduct(x2);
    s4_ += x4;
    s8_ += x4.cwiseProduct(x4);
    for (std::size_t k = 0; k < pairs_.size(); ++k) {
      const double v = x[pairs_[k].first] * x[pairs_[k].second];
      p1_[static_cast<Eigen::Index>(k)] += v;
      p2_[static_cast<Eigen::Index>(k)] += v * v;
    }
  }

  void merge(const MomentAccumulator& o) {
    n_ += o.n_;
    s1_ += o.s1_;
    s2_ += o.s2_;
    s4_ += o.s4_;
    s8_ += o.s8_;
    p1_ += o.p1_;
    p2_ += o.p2_;
  }

  struct Stat {
    double mean = 0.0;
    double std_error = 0.0;
  };

  std::int64_t count() const { return n_; }
  Eigen::Index dim() const { return s1_.size(); }
  std::size_t n_pairs() const { return pairs_.size(); }

  Stat first(Eigen::Index i) const { return stat(s1_[i], s2_[i]); }
  Stat second(Eigen::Index i) const { return stat(s2_[i], s4_[i]); }
  Stat fourth(Eigen::Index i) const { return stat(s4_[i], s8_[i]); }
  Stat cross(std::size_t k) const {
    const auto i = static_cast<Eigen::Index>(k);
    return stat(p1_[i], p2_[i]);
  }

 private:
  // Mean and standard error of a statistic from its sum and sum of squares.
  Stat stat(double sum, double sum_sq) const {
    Stat st;
    const double n = static_cast<double>(n_);
    st.mean = sum / n;
    const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
    st.std_error = std::sqrt(var / n);
    return st;
  }

  std::int64_t n_ = 0;
  Vector s1_, s2_, s4_, s8_;
  std::vector<std::pair<int, int>> pairs_;
  Vector p1_, p2_;
};

// Two-sample z-score with a guard for exactly deterministic statistics.
inline double z_score(const MomentAccumulator::Stat& a,
                      const MomentAccumulator::Stat& b) {
  const double se = std::sqrt(a.std_error * a.std_error +
                              b.std_error * b.std_error);
  const double diff = std::abs(a.mean - b.mean);
  if (se == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / se;
}

// log(sum(exp(v))) without overflow.
inline double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace dlnk
