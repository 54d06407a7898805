#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "redsim/prng.hpp"
#include "redsim/softfloat.hpp"

// Verification-vector generator for the floating-point units: a fixed
// corner-case block (all pairings over a set of special values, plus
// tie-constructing and near-cancellation pairs) followed by seeded,
// category-stratified random vectors. Deterministic for a given
// (count, seed).

namespace redsim {

enum class VecCategory : std::uint8_t {
  random,
  signed_zero,
  infinity,
  nan,
  subnormal,
  exponent_extreme,
  near_cancellation,
  tie_case,
};

inline std::string_view to_string(VecCategory c) {
  switch (c) {
    case VecCategory::random: return "random";
    case VecCategory::signed_zero: return "signed-zero";
    case VecCategory::infinity: return "infinity";
    case VecCategory::nan: return "nan";
    case VecCategory::subnormal: return "subnormal";
    case VecCategory::exponent_extreme: return "exponent-extreme";
    case VecCategory::near_cancellation: return "near-cancellation";
    case VecCategory::tie_case: return "tie-case";
  }
  return "?";
}

struct TestVector {
  Fp32Bits a, b;
  VecCategory category = VecCategory::random;
};

namespace vecdetail {

inline constexpr std::uint32_t kCornerValues[] = {
    0x00000000u,  // +0
    0x80000000u,  // -0
    0x3F800000u,  // +1
    0xBF800000u,  // -1
    0x7F800000u,  // +Inf
    0xFF800000u,  // -Inf
    0x7FC00000u,  // NaN
    0x7F7FFFFFu,  // max normal
    0x00800000u,  // min normal
    0x007FFFFFu,  // max subnormal
    0x00000001u,  // min subnormal
};
inline constexpr std::size_t kCornerCount =
    sizeof(kCornerValues) / sizeof(kCornerValues[0]);

// exact-halfway constructions; (1.0, 2^-24) is the canonical one
inline constexpr std::uint32_t kTiePairs[][2] = {
    {0x3F800000u, 0x33800000u}, {0x3F800001u, 0x33800000u},
    {0xBF800000u, 0xB3800000u}, {0x40000000u, 0x34000000u},
    {0x3F800800u, 0x3F800800u},  // (1+2^-12)^2 lands on the round boundary
    {0x40000800u, 0x40000800u},
};

inline constexpr std::uint32_t kCancelPairs[][2] = {
    {0x3F800000u, 0xBF800001u}, {0x3F800001u, 0xBF800000u},
    {0x7F7FFFFFu, 0xFF7FFFFEu}, {0x00800001u, 0x80800000u},
    {0x40490FDBu, 0xC0490FDAu}, {0x3F7FFFFFu, 0xBF800000u},
};

inline VecCategory classify_pair(std::uint32_t a, std::uint32_t b) {
  using namespace fpdetail;
  if (is_nan(a) || is_nan(b)) return VecCategory::nan;
  if (is_inf(a) || is_inf(b)) return VecCategory::infinity;
  if (is_subnormal(a) || is_subnormal(b)) return VecCategory::subnormal;
  if (is_zero(a) || is_zero(b)) return VecCategory::signed_zero;
  const auto extreme = [](std::uint32_t x) {
    const std::uint32_t e = exp_of(x);
    return e == 1u || e == 0xFEu;
  };
  if (extreme(a) || extreme(b)) return VecCategory::exponent_extreme;
  return VecCategory::random;
}

inline std::uint32_t rand_normal(Prng& rng) {
  const std::uint32_t sign = rng.next_u32() & 0x80000000u;
  const std::uint32_t e = static_cast<std::uint32_t>(rng.range(1, 0xFE));
  return sign | (e << 23) | (rng.next_u32() & 0x7FFFFFu);
}

}  // namespace vecdetail

inline constexpr std::size_t corner_block_size() {
  using namespace vecdetail;
  return kCornerCount * kCornerCount +
         sizeof(kTiePairs) / sizeof(kTiePairs[0]) +
         sizeof(kCancelPairs) / sizeof(kCancelPairs[0]);
}

inline std::vector<TestVector> gen_test_vectors(std::size_t count,
                                                std::uint64_t seed) {
  using namespace vecdetail;
  if (count < corner_block_size())
    throw std::invalid_argument(
        "vector count smaller than the fixed corner-case block (" +
        std::to_string(corner_block_size()) + ")");

  std::vector<TestVector> out;
  out.reserve(count);
  for (std::uint32_t a : kCornerValues)
    for (std::uint32_t b : kCornerValues)
      out.push_back({{a}, {b}, classify_pair(a, b)});
  for (const auto& p : kTiePairs)
    out.push_back({{p[0]}, {p[1]}, VecCategory::tie_case});
  for (const auto& p : kCancelPairs)
    out.push_back({{p[0]}, {p[1]}, VecCategory::near_cancellation});

  Prng rng(seed);
  static constexpr VecCategory kCycle[] = {
      VecCategory::random,           VecCategory::signed_zero,
      VecCategory::infinity,         VecCategory::nan,
      VecCategory::subnormal,        VecCategory::exponent_extreme,
      VecCategory::near_cancellation, VecCategory::tie_case,
  };
  std::size_t i = 0;
  while (out.size() < count) {
    const VecCategory cat = kCycle[i++ % (sizeof(kCycle) / sizeof(kCycle[0]))];
    std::uint32_t a = 0, b = 0;
    switch (cat) {
      case VecCategory::random:
        a = rng.next_u32();
        b = rng.next_u32();
        break;
      case VecCategory::signed_zero:
        a = (rng.next_u32() & 0x80000000u);
        b = rng.next_u32();
        if (rng.chance_milli(500)) std::swap(a, b);
        break;
      case VecCategory::infinity:
        a = 0x7F800000u | (rng.next_u32() & 0x80000000u);
        b = rng.next_u32();
        if (rng.chance_milli(500)) std::swap(a, b);
        break;
      case VecCategory::nan: {
        std::uint32_t frac = rng.next_u32() & 0x7FFFFFu;
        if (frac == 0) frac = 1;
        a = 0x7F800000u | (rng.next_u32() & 0x80000000u) | frac;
        b = rng.next_u32();
        if (rng.chance_milli(500)) std::swap(a, b);
        break;
      }
      case VecCategory::subnormal: {
        std::uint32_t frac = rng.next_u32() & 0x7FFFFFu;
        if (frac == 0) frac = 1;
        a = (rng.next_u32() & 0x80000000u) | frac;
        b = rng.chance_milli(300)
                ? ((rng.next_u32() & 0x80000000u) | ((rng.next_u32() & 0x7FFFFFu) | 1u))
                : rng.next_u32();
        if (rng.chance_milli(500)) std::swap(a, b);
        break;
      }
      case VecCategory::exponent_extreme: {
        static constexpr std::uint32_t kEdge[] = {1u, 2u, 0xFDu, 0xFEu};
        a = (rng.next_u32() & 0x80000000u) | (kEdge[rng.below(4)] << 23) |
            (rng.next_u32() & 0x7FFFFFu);
        b = (rng.next_u32() & 0x80000000u) | (kEdge[rng.below(4)] << 23) |
            (rng.next_u32() & 0x7FFFFFu);
        break;
      }
      case VecCategory::near_cancellation: {
        a = rand_normal(rng);
        // opposite sign, up to 3 ulps apart
        std::uint32_t mag = (a & 0x7FFFFFFFu);
        const std::uint32_t delta = static_cast<std::uint32_t>(rng.below(4));
        mag = (mag > delta) ? mag - delta : mag + delta;
        b = mag | (~a & 0x80000000u);
        break;
      }
      case VecCategory::tie_case: {
        // a + b is an exact halfway case: b is the half-ulp power of two of
        // a's exponent, same sign (no cancellation path)
        const std::uint32_t sign = rng.next_u32() & 0x80000000u;
        const std::uint32_t e = static_cast<std::uint32_t>(rng.range(27, 227));
        std::uint32_t frac = rng.next_u32() & 0x7FFFFFu;
        if (frac == 0x7FFFFFu) frac &= ~2u;  // avoid the all-ones carry case
        a = sign | (e << 23) | frac;
        b = sign | ((e - 24) << 23);
        break;
      }
    }
    out.push_back({{a}, {b}, cat});
  }
  return out;
}

}  // namespace redsim
