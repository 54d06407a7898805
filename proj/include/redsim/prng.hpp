#pragma once

#include <cstdint>
#include <random>

namespace redsim {

// All randomness in the project flows through explicitly seeded mt19937_64
// engines. The raw 64-bit output sequence of mt19937_64 is fully specified
// by the C++ standard, so runs are reproducible across platforms; the
// standard *distributions* are not, which is why ranges are reduced by hand
// below.
inline constexpr const char* kPrngAlgorithm = "mt19937_64";

class Prng {
 public:
  explicit Prng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }
  std::uint32_t next_u32() { return static_cast<std::uint32_t>(eng_()); }
  std::uint16_t next_u16() { return static_cast<std::uint16_t>(eng_()); }

  // Uniform in [0, n). Modulo bias is irrelevant for test traffic.
  std::uint64_t below(std::uint64_t n) { return n ? eng_() % n : 0; }

  // Uniform in [lo, hi] inclusive.
  std::uint64_t range(std::uint64_t lo, std::uint64_t hi) {
    return lo + below(hi - lo + 1);
  }

  // True with probability per_mille/1000.
  bool chance_milli(std::uint32_t per_mille) { return below(1000) < per_mille; }

 private:
  std::mt19937_64 eng_;
};

// Derives an independent stream seed from a base seed and a (tag, index)
// pair, so sub-generators never share a sequence.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                                 std::uint64_t index = 0) {
  std::uint64_t x = base ^ (0x9E3779B97F4A7C15ull * (tag + 1)) ^
                    (0xC2B2AE3D27D4EB4Full * (index + 1));
  // splitmix-style finalizer, used only for seed derivation
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

}  // namespace redsim
