#pragma once

#include <bit>
#include <cstdint>
#include <deque>
#include <optional>
#include <utility>

// Bit-accurate BF16/FP32 arithmetic. Every operation here works on raw IEEE
// bit patterns with explicit normalize/round logic; host floating-point
// hardware is never touched. The default numeric policy matches the modeled
// hardware: denormals-are-zero on inputs, flush-to-zero on results,
// round-to-nearest-even, and a single canonical quiet-NaN output pattern.

namespace redsim {

struct Fp32Bits {
  std::uint32_t bits = 0;
  friend bool operator==(Fp32Bits, Fp32Bits) = default;
};

struct Bf16Bits {
  std::uint16_t bits = 0;
  friend bool operator==(Bf16Bits, Bf16Bits) = default;
};

enum class Rounding : std::uint8_t { nearest_even };

struct FpPolicy {
  bool daz = true;
  bool ftz = true;
  Rounding rounding = Rounding::nearest_even;
};

inline constexpr std::uint32_t kFp32QuietNan = 0x7FC00000u;
inline constexpr std::uint16_t kBf16QuietNan = 0x7FC0u;

namespace fpdetail {

inline constexpr std::uint32_t sign_of(std::uint32_t x) { return x >> 31; }
inline constexpr std::uint32_t exp_of(std::uint32_t x) { return (x >> 23) & 0xFFu; }
inline constexpr std::uint32_t frac_of(std::uint32_t x) { return x & 0x7FFFFFu; }

inline constexpr bool is_nan(std::uint32_t x) {
  return exp_of(x) == 0xFFu && frac_of(x) != 0;
}
inline constexpr bool is_inf(std::uint32_t x) {
  return exp_of(x) == 0xFFu && frac_of(x) == 0;
}
inline constexpr bool is_subnormal(std::uint32_t x) {
  return exp_of(x) == 0 && frac_of(x) != 0;
}
inline constexpr bool is_zero(std::uint32_t x) { return (x << 1) == 0; }

inline constexpr std::uint32_t apply_daz(std::uint32_t x, const FpPolicy& pol) {
  return (pol.daz && is_subnormal(x)) ? (x & 0x80000000u) : x;
}

// Right shift that ORs every shifted-out bit into bit 0 (sticky).
inline constexpr std::uint64_t shr_sticky64(std::uint64_t v, unsigned n) {
  if (n == 0) return v;
  if (n >= 64) return v != 0 ? 1u : 0u;
  std::uint64_t out = v >> n;
  if (v & ((std::uint64_t{1} << n) - 1)) out |= 1u;
  return out;
}

// Packs (sign, biased exponent, 27-bit significand with 3 low round bits)
// into an FP32 pattern under round-to-nearest-even. `e` uses the convention
// that e == 1 is the weight of both the minimum normal and the subnormal
// range, so callers never special-case gradual underflow. FTZ is applied
// after rounding, which is what lets results that round *up* to the minimum
// normal survive the flush.
inline std::uint32_t round_pack(std::uint32_t sign, int e, std::uint64_t m27,
                                const FpPolicy& pol) {
  if (e < 1) {
    m27 = shr_sticky64(m27, static_cast<unsigned>(1 - e));
    e = 1;
  }
  const std::uint32_t round_bits = static_cast<std::uint32_t>(m27 & 7u);
  std::uint32_t m = static_cast<std::uint32_t>((m27 + 4u) >> 3);
  if (round_bits == 4u) m &= ~1u;  // exact tie: clear LSB (ties-to-even)
  if (m & 0x1000000u) {            // rounding carried out of the mantissa
    m >>= 1;
    ++e;
  }
  if (m == 0) return sign << 31;
  if (m & 0x800000u) {
    if (e >= 0xFF) return (sign << 31) | 0x7F800000u;  // overflow -> Inf
    return (sign << 31) | (static_cast<std::uint32_t>(e) << 23) | (m & 0x7FFFFFu);
  }
  // subnormal result (exponent field 0)
  if (pol.ftz) return sign << 31;
  return (sign << 31) | m;
}

struct Unpacked {
  int e;             // biased exponent, subnormals mapped to e = 1
  std::uint32_t m;   // 24-bit significand (implicit bit set for normals)
};

inline constexpr Unpacked unpack_finite(std::uint32_t x) {
  const std::uint32_t e = exp_of(x);
  if (e == 0) return {1, frac_of(x)};
  return {static_cast<int>(e), frac_of(x) | 0x800000u};
}

}  // namespace fpdetail

// --- conversions -----------------------------------------------------------

// Widening is a pure zero-pad of the mantissa (the exponent fields of BF16
// and FP32 are both 8 bits wide); subnormal inputs read as signed zero under
// DAZ.
inline Fp32Bits bf16_to_fp32(Bf16Bits x, const FpPolicy& pol = {}) {
  const std::uint16_t e = static_cast<std::uint16_t>((x.bits >> 7) & 0xFFu);
  const std::uint16_t f = static_cast<std::uint16_t>(x.bits & 0x7Fu);
  if (pol.daz && e == 0 && f != 0)
    return {static_cast<std::uint32_t>(x.bits & 0x8000u) << 16};
  return {static_cast<std::uint32_t>(x.bits) << 16};
}

// Narrowing truncates the low 16 mantissa bits (round-toward-zero in
// magnitude), after DAZ on the input. NaNs collapse to the canonical quiet
// pattern so truncation can never manufacture an Inf.
inline Bf16Bits fp32_to_bf16(Fp32Bits x, const FpPolicy& pol = {}) {
  using namespace fpdetail;
  std::uint32_t v = apply_daz(x.bits, pol);
  if (is_nan(v)) return {kBf16QuietNan};
  return {static_cast<std::uint16_t>(v >> 16)};
}

// --- arithmetic -------------------------------------------------------------

inline Fp32Bits fp32_add(Fp32Bits ab, Fp32Bits bb, const FpPolicy& pol = {}) {
  using namespace fpdetail;
  std::uint32_t a = apply_daz(ab.bits, pol);
  std::uint32_t b = apply_daz(bb.bits, pol);

  if (exp_of(a) == 0xFFu || exp_of(b) == 0xFFu) {
    if (is_nan(a) || is_nan(b)) return {kFp32QuietNan};
    if (is_inf(a) && is_inf(b))
      return sign_of(a) == sign_of(b) ? Fp32Bits{a} : Fp32Bits{kFp32QuietNan};
    return is_inf(a) ? Fp32Bits{a} : Fp32Bits{b};
  }
  if (is_zero(a) && is_zero(b)) {
    // (+0) + (-0) = +0 under RNE; equal signs keep the sign.
    return a == b ? Fp32Bits{a} : Fp32Bits{0};
  }
  if (is_zero(a)) return {b};
  if (is_zero(b)) return {a};

  Unpacked ua = unpack_finite(a);
  Unpacked ub = unpack_finite(b);
  std::uint32_t sa = sign_of(a), sb = sign_of(b);
  // order so (ua, A) is the larger magnitude
  if (ua.e < ub.e || (ua.e == ub.e && ua.m < ub.m)) {
    std::swap(ua, ub);
    std::swap(sa, sb);
  }
  // 30 bits of headroom below the significand: alignment up to 30 positions
  // is exact, anything farther collapses into sticky and can never be
  // promoted back (cancellation beyond one position implies an exact
  // subtraction).
  std::uint64_t A = static_cast<std::uint64_t>(ua.m) << 30;
  std::uint64_t B = shr_sticky64(static_cast<std::uint64_t>(ub.m) << 30,
                                 static_cast<unsigned>(ua.e - ub.e));
  std::uint32_t sign = sa;
  int e = ua.e;
  std::uint64_t S;
  if (sa == sb) {
    S = A + B;
  } else {
    S = A - B;
    if (S == 0) return {0};  // exact cancellation -> +0
  }
  // normalize so the leading bit sits at position 53
  const int lz = std::countl_zero(S);
  int shift = lz - 10;
  if (shift > 0) {
    if (shift > e - 1) shift = e - 1;  // stop at the subnormal range
    S <<= shift;
    e -= shift;
  } else if (shift < 0) {
    S = shr_sticky64(S, static_cast<unsigned>(-shift));
    e += -shift;
  }
  return {round_pack(sign, e, shr_sticky64(S, 27), pol)};
}

inline Fp32Bits fp32_mul(Fp32Bits ab, Fp32Bits bb, const FpPolicy& pol = {}) {
  using namespace fpdetail;
  std::uint32_t a = apply_daz(ab.bits, pol);
  std::uint32_t b = apply_daz(bb.bits, pol);
  const std::uint32_t sign = sign_of(a) ^ sign_of(b);

  if (exp_of(a) == 0xFFu || exp_of(b) == 0xFFu) {
    if (is_nan(a) || is_nan(b)) return {kFp32QuietNan};
    // one operand is Inf; Inf * 0 is invalid
    if (is_zero(a) || is_zero(b)) return {kFp32QuietNan};
    return {(sign << 31) | 0x7F800000u};
  }
  if (is_zero(a) || is_zero(b)) return {sign << 31};

  Unpacked ua = unpack_finite(a);
  Unpacked ub = unpack_finite(b);
  std::uint64_t P = static_cast<std::uint64_t>(ua.m) * ub.m;  // exact, < 2^48
  // normalize the product so its leading bit sits at position 47; with the
  // significands scaled by 2^23 each, a bit-47 leader means exponent
  // ea + eb - 126 - shift
  const int shift = std::countl_zero(P) - 16;  // >= 0 for 24x24 products
  P <<= shift;
  const int e = ua.e + ub.e - 126 - shift;
  return {round_pack(sign, e, shr_sticky64(P, 21), pol)};
}

// One aggregator lane step: widen the BF16 contribution and accumulate it
// into the FP32 partial sum.
inline Fp32Bits accumulate_bf16(Fp32Bits acc, Bf16Bits x, const FpPolicy& pol = {}) {
  return fp32_add(acc, bf16_to_fp32(x, pol), pol);
}

// --- exponential ------------------------------------------------------------

namespace fpdetail {

inline constexpr std::uint32_t kC5 = 0x3C088889u;  // 1/120
inline constexpr std::uint32_t kC4 = 0x3D2AAAABu;  // 1/24
inline constexpr std::uint32_t kC3 = 0x3E2AAAABu;  // 1/6
inline constexpr std::uint32_t kC2 = 0x3F000000u;  // 1/2
inline constexpr std::uint32_t kOne = 0x3F800000u;
inline constexpr std::uint32_t kLn2 = 0x3F317218u;
inline constexpr std::uint32_t kInvLn2 = 0x3FB8AA3Bu;
inline constexpr std::uint32_t kLn2Hi = 0x3F317200u;  // exact when scaled by small ints
inline constexpr std::uint32_t kLn2Lo = 0x35BFBE8Eu;

// truncation toward zero; callers guarantee a small nonnegative value
inline std::uint32_t fp32_trunc_to_u32(std::uint32_t x) {
  const int e = static_cast<int>(exp_of(x)) - 127;
  if (e < 0 || exp_of(x) == 0) return 0;
  if (e >= 31) return 0xFFFFFFFFu;  // saturate; callers clamp anyway
  const std::uint32_t m = frac_of(x) | 0x800000u;
  if (e >= 23) return m << (e - 23);
  return m >> (23 - e);
}

inline std::uint32_t u32_to_fp32(std::uint32_t k) {
  if (k == 0) return 0;
  const int top = 31 - std::countl_zero(k);
  std::uint32_t frac = (top <= 23) ? (k << (23 - top)) : (k >> (top - 23));
  return (static_cast<std::uint32_t>(127 + top) << 23) | (frac & 0x7FFFFFu);
}

}  // namespace fpdetail

// Fifth-order Taylor polynomial of e^x in Horner form:
//   1 + x(1 + x(1/2 + x(1/6 + x(1/24 + x/120))))
// Each step is one fp32 multiply and one fp32 add under the default policy.
// Accurate on [-ln2, 0]; callers needing a wider domain reduce the range
// first (see exp_neg below).
inline Fp32Bits exp_neg_taylor5(Fp32Bits x) {
  using namespace fpdetail;
  const FpPolicy pol{};
  Fp32Bits t{kC5};
  t = fp32_add({kC4}, fp32_mul(x, t, pol), pol);
  t = fp32_add({kC3}, fp32_mul(x, t, pol), pol);
  t = fp32_add({kC2}, fp32_mul(x, t, pol), pol);
  t = fp32_add({kOne}, fp32_mul(x, t, pol), pol);
  t = fp32_add({kOne}, fp32_mul(x, t, pol), pol);
  return t;
}

// e^x for finite x <= 0: split |x| = k*ln2 + r with r in [0, ln2) via a
// two-term Cody-Waite subtraction, evaluate the Taylor core at -r, then
// scale by 2^-k with a plain exponent-field subtraction (subnormal scale
// results flush to +0). Out-of-domain inputs give unspecified finite values
// and are not signaled.
inline Fp32Bits exp_neg(Fp32Bits x) {
  using namespace fpdetail;
  const FpPolicy pol{};
  if (exp_of(x.bits) == 0xFFu) return {0};  // Inf/NaN: pick a finite value
  std::uint32_t ax = apply_daz(x.bits, pol) & 0x7FFFFFFFu;
  if (ax <= kLn2) return exp_neg_taylor5({ax | 0x80000000u});

  const Fp32Bits m = fp32_mul({ax}, {kInvLn2}, pol);
  std::uint32_t k = fp32_trunc_to_u32(m.bits);
  if (k > 200) return {0};  // result far below the normal range
  const Fp32Bits kf{u32_to_fp32(k)};
  Fp32Bits r = fp32_add({ax}, {fp32_mul(kf, {kLn2Hi}, pol).bits ^ 0x80000000u}, pol);
  r = fp32_add(r, {fp32_mul(kf, {kLn2Lo}, pol).bits ^ 0x80000000u}, pol);
  const Fp32Bits p = exp_neg_taylor5({r.bits ^ 0x80000000u});
  const std::uint32_t pe = exp_of(p.bits);
  if (pe <= k) return {0};  // 2^-k scale underflows (FTZ)
  return {(p.bits & 0x807FFFFFu) | ((pe - k) << 23)};
}

// --- pipeline wrapper -------------------------------------------------------

// Fixed-depth pipeline model around fp32_add: one operand pair enters per
// push, the sum emerges `depth` pushes later. Depth 11 mirrors the
// fully-pipelined add/sub unit; the aggregator lanes use the same shape at
// depth 8.
class Fp32AddPipeline {
 public:
  explicit Fp32AddPipeline(unsigned depth = 11, FpPolicy pol = {})
      : depth_(depth ? depth : 1), pol_(pol) {}

  unsigned depth() const { return depth_; }

  // Push one operand pair; returns the result that retires this cycle, if
  // the pipe is full.
  struct Retired {
    bool valid = false;
    Fp32Bits value{};
  };
  Retired push(Fp32Bits a, Fp32Bits b) {
    stages_.push_back(fp32_add(a, b, pol_));
    Retired out;
    if (stages_.size() > depth_) {
      out.valid = stages_.front().has_value();
      if (out.valid) out.value = *stages_.front();
      stages_.pop_front();
    }
    return out;
  }

  // Advance without new input (a bubble); drains one stage if occupied.
  Retired push_bubble() {
    stages_.push_back(std::nullopt);
    Retired out;
    if (stages_.size() > depth_) {
      if (stages_.front()) {
        out.valid = true;
        out.value = *stages_.front();
      }
      stages_.pop_front();
    }
    return out;
  }

 private:
  unsigned depth_;
  FpPolicy pol_;
  std::deque<std::optional<Fp32Bits>> stages_;
};

}  // namespace redsim
