#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace switchstein {

namespace detail {

// Philox4x32-10 block cipher (Salmon et al., "Parallel Random Numbers: As
// Easy as 1, 2, 3"). Counter-based: the n-th block of a stream is a pure
// function of (key, counter), so disjoint streams and parallel draws need no
// shared state.
inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = std::uint64_t(kPhiloxM1) * ctr[2];
    ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
           std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

}  // namespace detail

/// Purpose codes keep the draws of one Monte Carlo path on disjoint
/// substreams, so adding a consumer never perturbs the others.
enum class StreamPurpose : std::uint64_t {
  chain = 1,
  noise = 2,
  probe = 3,
  stats = 4,
  init = 5,
};

/// Counter-based random stream: seed goes into the Philox key, the stream id
/// into the counter prefix. Streams with distinct (stream id, purpose) are
/// non-overlapping by construction, which is what makes path-parallel Monte
/// Carlo reproducible independent of thread count.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id,
               StreamPurpose purpose = StreamPurpose::init)
      : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)} {
    const std::uint64_t sid = stream_id ^ (std::uint64_t(purpose) << 56);
    base_[0] = std::uint32_t(sid);
    base_[1] = std::uint32_t(sid >> 32);
  }

  std::uint64_t next_u64() {
    if (pos_ >= 4) refill();
    const std::uint64_t lo = buf_[pos_];
    const std::uint64_t hi = buf_[pos_ + 1];
    pos_ += 2;
    return lo | (hi << 32);
  }

  /// Uniform draw in the open interval (0, 1); never returns an endpoint, so
  /// log(u) is always finite.
  double uniform() {
    const std::uint64_t bits = next_u64() >> 11;  // top 53 bits
    return (double(bits) + 0.5) * 0x1.0p-53;
  }

  /// Standard Gaussian via Box-Muller; the second value of each pair is
  /// cached so consecutive calls cost one transform per two draws.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  /// Exponential with the given rate; rate 0 means "never", returned as +inf.
  double exponential(double rate) {
    if (rate <= 0.0) return std::numeric_limits<double>::infinity();
    return -std::log(uniform()) / rate;
  }

 private:
  void refill() {
    buf_ = detail::philox4x32_10({std::uint32_t(block_), std::uint32_t(block_ >> 32),
                                  base_[0], base_[1]},
                                 key_);
    ++block_;
    pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> base_{};
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace switchstein
