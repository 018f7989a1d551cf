#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace stlab {

// Seeded generator with fully specified output on every platform.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The standard distributions are implementation-defined, so the
// conversions below are written out by hand:
//   uniform()   53 high bits of one draw scaled by 2^-53, in [0, 1)
//   below(n)    rejection sampling on the top bits, unbiased
//   normal()    Box-Muller on two uniform() draws, no cached second value
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Uniform integer in [lo, hi], inclusive.
  std::int64_t between(std::int64_t lo, std::int64_t hi);
  double normal();

  // Fisher-Yates from the back.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed from a base seed and a label.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

// 64-bit FNV-1a, used to turn stage and artifact names into salts.
std::uint64_t fnv1a(std::string_view text);

}  // namespace stlab
