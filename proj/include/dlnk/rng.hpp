#pragma once

// Counter-based random number generation built on Philox4x32-10.
//
// Why counter-based: Monte-Carlo work is partitioned across threads by
// *stream*, and a stream is a pure function of (seed, stream_id, position).
// Draw sequences are therefore reproducible independent of thread scheduling,
// and substreams can be split off without any shared mutable state.
//
// The block function is the standard Philox4x32 with 10 rounds; the
// known-answer vectors from the published test suite are frozen in the unit
// tests. On top of the raw 32-bit blocks we provide uniform(0,1) doubles,
// Box-Muller normals, Marsaglia-Tsang gamma variates and chi variates --
// everything the Wishart/Bartlett machinery needs.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace dlnk {

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

// SplitMix64 finalizer; used to derive well-separated substream ids.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::array<std::uint32_t, 4> philox4x32_10(
    std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kPhiloxM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kPhiloxM1} * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
           static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
           static_cast<std::uint32_t>(p0)};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

}  // namespace detail

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Derives the n-th child stream. Children of distinct (stream_id, n) pairs
  // land on well-separated counters with overwhelming probability.
  RngStream substream(std::uint64_t n) const {
    return RngStream(
        seed_, detail::splitmix64(stream_id_ + 0x9E3779B97F4A7C15ull * (n + 1)));
  }

  std::uint64_t next_u64() {
    if (buffered_ == 0) {
      const auto block = detail::philox4x32_10(
          {static_cast<std::uint32_t>(pos_),
           static_cast<std::uint32_t>(pos_ >> 32),
           static_cast<std::uint32_t>(stream_id_),
           static_cast<std::uint32_t>(stream_id_ >> 32)},
          {static_cast<std::uint32_t>(seed_),
           static_cast<std::uint32_t>(seed_ >> 32)});
      ++pos_;
      buffer_[0] = (std::uint64_t{block[1]} << 32) | block[0];
      buffer_[1] = (std::uint64_t{block[3]} << 32) | block[2];
      buffered_ = 2;
    }
    return buffer_[--buffered_];
  }

  // Uniform on the open interval (0, 1); never returns 0 or 1 so logs and
  // Box-Muller are always finite.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
  }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Gamma(shape a, rate 1) via Marsaglia-Tsang squeeze; a > 0.
  double gamma(double a) {
    if (a < 1.0) {
      // Boost to shape a+1 and scale back: G(a) = G(a+1) * U^{1/a}.
      return gamma(a + 1.0) * std::pow(uniform(), 1.0 / a);
    }
    const double d = a - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // chi distribution with nu degrees of freedom: sqrt(chi^2_nu).
  double chi(double nu) { return std::sqrt(2.0 * gamma(0.5 * nu)); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t pos_ = 0;
  std::uint64_t buffer_[2] = {0, 0};
  int buffered_ = 0;
};

}  // namespace dlnk
