#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vitsim {

// Violations of internal invariants. The CLI maps this to exit code 3,
// while std::invalid_argument (bad user input) maps to exit code 2.
class internal_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

#define VITSIM_CHECK(cond, msg)                                             \
  do {                                                                      \
    if (!(cond))                                                            \
      throw ::vitsim::internal_error(std::string("invariant violated: ") + \
                                     (msg));                                \
  } while (0)

// FNV-1a, used to derive per-tensor seeds from a name. std::hash is
// implementation-defined; this is stable everywhere.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// mt19937_64 with fixed bit-to-double mapping. The standard distributions
// are implementation-defined, so outputs would not be reproducible through
// them; this mapping is pinned.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(gen_() % n);
  }

 private:
  std::mt19937_64 gen_;
};

// Independent stream for a named tensor under one master seed.
inline Rng named_rng(std::uint64_t seed, std::string_view name) {
  return Rng(mix64(seed ^ fnv1a(name)));
}

}  // namespace vitsim
