#pragma once

#include <cmath>
#include <cstring>

#include "redsim/softfloat.hpp"

// Independent reference models. The arithmetic oracle is the host's native
// IEEE-754 single-precision unit composed with explicit pre/post subnormal
// flushing and NaN canonicalization; it shares no code with the softfloat
// implementation it checks. Nothing outside tests and the self-test command
// may include this header.

namespace redsim::oracle {

namespace detail {

inline float to_float(std::uint32_t u) {
  float f;
  std::memcpy(&f, &u, sizeof f);
  return f;
}
inline std::uint32_t to_bits(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, sizeof u);
  return u;
}
inline bool sub32(std::uint32_t u) {
  return ((u >> 23) & 0xFFu) == 0 && (u & 0x7FFFFFu) != 0;
}
inline bool nan32(std::uint32_t u) {
  return ((u >> 23) & 0xFFu) == 0xFFu && (u & 0x7FFFFFu) != 0;
}
inline std::uint32_t flush_in(std::uint32_t u, const FpPolicy& pol) {
  return (pol.daz && sub32(u)) ? (u & 0x80000000u) : u;
}
inline std::uint32_t flush_out(std::uint32_t u, const FpPolicy& pol) {
  if (nan32(u)) return kFp32QuietNan;
  return (pol.ftz && sub32(u)) ? (u & 0x80000000u) : u;
}

}  // namespace detail

inline Fp32Bits add(Fp32Bits a, Fp32Bits b, const FpPolicy& pol = {}) {
  using namespace detail;
  const float fa = to_float(flush_in(a.bits, pol));
  const float fb = to_float(flush_in(b.bits, pol));
  return {flush_out(to_bits(fa + fb), pol)};
}

inline Fp32Bits mul(Fp32Bits a, Fp32Bits b, const FpPolicy& pol = {}) {
  using namespace detail;
  const float fa = to_float(flush_in(a.bits, pol));
  const float fb = to_float(flush_in(b.bits, pol));
  return {flush_out(to_bits(fa * fb), pol)};
}

// High-precision e^x of the value an Fp32 pattern denotes.
inline long double exp_exact(Fp32Bits x) {
  return std::exp(static_cast<long double>(detail::to_float(x.bits)));
}

// Host-float rendering of a pattern, for error measurements.
inline double value_of(Fp32Bits x) {
  return static_cast<double>(detail::to_float(x.bits));
}

}  // namespace redsim::oracle
