#ifndef TEMVIP_RNG_HPP
#define TEMVIP_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>

namespace temvip {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based stream: draw k is a pure function of (key, k), so streams
/// keyed by (scenario, seed, replicate, purpose) are independent of the order
/// in which replicates run.
class RandomStream {
 public:
  explicit RandomStream(std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k));
    key_ = h;
  }

  std::uint64_t next_u64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform on (0, 1), 53-bit resolution, never exactly 0 or 1.
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double prob) { return uniform() < prob; }

  /// Failures before the first success, plus one: support {1, 2, ...}.
  long geometric_shifted(double success_prob) {
    if (success_prob >= 1.0) return 1;
    if (success_prob <= 0.0) return std::numeric_limits<long>::max();
    const double u = uniform();
    const double k = std::floor(std::log(u) / std::log1p(-success_prob));
    if (k > 1e15) return std::numeric_limits<long>::max();
    return static_cast<long>(k) + 1;
  }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    const auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(bound));
    return k < bound ? k : bound - 1;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace temvip

#endif  // TEMVIP_RNG_HPP
