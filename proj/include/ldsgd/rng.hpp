#pragma once

#include <cmath>
#include <cstdint>

namespace ldsgd {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

}  // namespace detail

// Counter-based stream keyed by (seed, node, step). Each draw is a pure
// function of the key and a per-stream counter, so values do not depend on
// evaluation order across nodes, steps, or threads.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t node, std::uint64_t step)
      : key_(derive_key(seed, node, step)) {}

  std::uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * detail::kGolden); }

  // strictly inside (0, 1)
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // standard normal via Box-Muller; pairs are cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u = uniform01();
    const double v = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 6.283185307179586476925286766559 * v;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, bound); bound must be positive
  std::uint64_t below(std::uint64_t bound) { return next_u64() % bound; }

 private:
  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t node, std::uint64_t step) {
    std::uint64_t h = detail::mix64(seed + detail::kGolden);
    h = detail::mix64(h ^ (node + 0xd1b54a32d192ed03ULL));
    h = detail::mix64(h ^ (step + 0x2545f4914f6cdd1dULL));
    return h;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ldsgd
