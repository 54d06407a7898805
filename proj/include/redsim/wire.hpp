#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "redsim/softfloat.hpp"

// Beat-level stream representation and the canonical byte layouts for
// regular and allreduce packets. Everything on the wire is little-endian and
// byte-packed with no inter-field padding; see docs/packet_format.md for the
// bit-exact reference.

namespace redsim {

inline constexpr std::size_t kBusBytes = 8;       // 64-bit data bus
inline constexpr std::uint32_t kAllreduceMagic = 0xA11F3D00u;
inline constexpr std::uint32_t kMaxElemCount = 512;
inline constexpr std::size_t kAllreduceHeaderBytes = 12;

// One 64-bit bus transfer. `keep` is a contiguous low-order run of byte
// enables (bit i covers byte i); every non-last beat carries keep = 0xFF.
struct Beat {
  std::uint64_t data = 0;
  std::uint8_t keep = 0xFF;
  bool last = false;
};

struct AllreduceHeader {
  std::uint32_t magic = kAllreduceMagic;
  std::uint32_t elem_count = 0;
  std::uint32_t aggr_no = 0;
};

enum class PacketKind : std::uint8_t { regular, allreduce };

// Framed packet as the simulator tracks it. dest_port is out-of-band
// metadata (the base switch's routing header is not modeled); for allreduce
// packets it must equal aggr_no.
struct PacketDesc {
  std::uint64_t id = 0;
  int ingress_port = 0;
  int dest_port = 0;
  std::vector<std::uint8_t> payload;
  PacketKind kind = PacketKind::regular;
  std::uint64_t inject_cycle = 0;
};

inline std::size_t beats_for(std::size_t payload_bytes) {
  return (payload_bytes + kBusBytes - 1) / kBusBytes;
}

// A full 512-element packet is 12 + 1024 = 1036 bytes, i.e. exactly 130
// beats; the line-rate accounting leans on this constant.
inline constexpr std::size_t kMaxElemPacketBeats = 130;
static_assert((kAllreduceHeaderBytes + 2 * kMaxElemCount + kBusBytes - 1) /
                  kBusBytes == kMaxElemPacketBeats);

inline std::vector<std::uint8_t> encode_allreduce(std::uint32_t aggr_no,
                                                  std::span<const Bf16Bits> values) {
  if (values.empty() || values.size() > kMaxElemCount)
    throw std::invalid_argument("allreduce element count must be in [1, 512]");
  if (aggr_no > 3)
    throw std::invalid_argument("aggr_no must be in [0, 3]");
  std::vector<std::uint8_t> out;
  out.reserve(kAllreduceHeaderBytes + 2 * values.size());
  const auto le32 = [&out](std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
  };
  le32(kAllreduceMagic);
  le32(static_cast<std::uint32_t>(values.size()));
  le32(aggr_no);
  for (Bf16Bits v : values) {
    out.push_back(static_cast<std::uint8_t>(v.bits));
    out.push_back(static_cast<std::uint8_t>(v.bits >> 8));
  }
  return out;
}

enum class PayloadClass : std::uint8_t {
  regular,              // no magic prefix
  allreduce,            // parsed cleanly
  malformed_allreduce,  // magic present but bounds or length are wrong
};

struct DecodedPayload {
  PayloadClass cls = PayloadClass::regular;
  AllreduceHeader header;
  std::vector<Bf16Bits> values;
};

inline DecodedPayload decode_allreduce(std::span<const std::uint8_t> payload) {
  const auto le32_at = [&payload](std::size_t off) {
    return static_cast<std::uint32_t>(payload[off]) |
           (static_cast<std::uint32_t>(payload[off + 1]) << 8) |
           (static_cast<std::uint32_t>(payload[off + 2]) << 16) |
           (static_cast<std::uint32_t>(payload[off + 3]) << 24);
  };
  DecodedPayload out;
  if (payload.size() < 4 || le32_at(0) != kAllreduceMagic) return out;
  if (payload.size() < kAllreduceHeaderBytes) {
    out.cls = PayloadClass::malformed_allreduce;
    return out;
  }
  out.header.magic = le32_at(0);
  out.header.elem_count = le32_at(4);
  out.header.aggr_no = le32_at(8);
  if (out.header.elem_count < 1 || out.header.elem_count > kMaxElemCount ||
      out.header.aggr_no > 3 ||
      payload.size() != kAllreduceHeaderBytes + 2 * out.header.elem_count) {
    out.cls = PayloadClass::malformed_allreduce;
    return out;
  }
  out.cls = PayloadClass::allreduce;
  out.values.reserve(out.header.elem_count);
  for (std::size_t i = 0; i < out.header.elem_count; ++i) {
    const std::size_t off = kAllreduceHeaderBytes + 2 * i;
    out.values.push_back({static_cast<std::uint16_t>(
        payload[off] | (static_cast<std::uint16_t>(payload[off + 1]) << 8))});
  }
  return out;
}

inline std::vector<Beat> packet_to_beats(std::span<const std::uint8_t> payload) {
  if (payload.empty())
    throw std::invalid_argument("cannot frame an empty payload");
  std::vector<Beat> beats;
  beats.reserve(beats_for(payload.size()));
  for (std::size_t off = 0; off < payload.size(); off += kBusBytes) {
    const std::size_t n = std::min(kBusBytes, payload.size() - off);
    Beat b;
    b.data = 0;
    for (std::size_t i = 0; i < n; ++i)
      b.data |= static_cast<std::uint64_t>(payload[off + i]) << (8 * i);
    b.keep = static_cast<std::uint8_t>((1u << n) - 1);
    b.last = off + n == payload.size();
    beats.push_back(b);
  }
  return beats;
}

// Beat protocol breaches here are fabric bugs, not scenario errors, so they
// abort with a diagnostic rather than degrade.
inline std::vector<std::uint8_t> beats_to_packet(std::span<const Beat> beats) {
  if (beats.empty()) throw std::logic_error("beat stream is empty");
  std::vector<std::uint8_t> out;
  for (std::size_t bi = 0; bi < beats.size(); ++bi) {
    const Beat& b = beats[bi];
    const bool is_last = bi + 1 == beats.size();
    if (b.last != is_last)
      throw std::logic_error("last flag must be set exactly on the final beat");
    if (b.keep == 0 || (b.keep & (b.keep + 1)) != 0)
      throw std::logic_error("keep must be a contiguous low-order byte mask");
    if (!is_last && b.keep != 0xFF)
      throw std::logic_error("non-last beat with partial keep");
    for (unsigned i = 0; i < 8; ++i)
      if (b.keep & (1u << i))
        out.push_back(static_cast<std::uint8_t>(b.data >> (8 * i)));
  }
  return out;
}

}  // namespace redsim
