#pragma once

#include <array>
#include <cstdint>
#include <limits>

#include <boost/random/normal_distribution.hpp>

namespace odedyn {

/// xoshiro256++ with splitmix64 seeding.
///
/// Streams are split by tag: `Rng::stream(seed, tag)` seeds the state from
/// splitmix64(seed ^ (0x9e3779b97f4a7c15 * (tag + 1))). Every consumer of
/// randomness in the library takes its own tag (see `StreamTag`), so a run's
/// draws never depend on what other runs or threads are doing.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);
  static Rng stream(std::uint64_t seed, std::uint64_t tag);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double normal() { return normal_(*this); }

  /// Rademacher sign, +1 or -1 with equal probability.
  double sign() { return ((*this)() >> 63) ? 1.0 : -1.0; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_{};
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

enum class StreamTag : std::uint64_t {
  kTeacher = 1,
  kStudentInit = 2,
  kSgd = 3,
  kMonteCarlo = 4,
  kKernelCheck = 5,
};

inline Rng make_stream(std::uint64_t seed, StreamTag tag) {
  return Rng::stream(seed, static_cast<std::uint64_t>(tag));
}

}  // namespace odedyn
