#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "redsim/prng.hpp"

namespace redsim {

// Per-cycle event log record. One record per line in trace files, fields in
// this order: cycle, kind, port (or aggregator), packet id, beat index.
// For inject records the beat-index column carries the classification code
// (0 regular, 1 allreduce, 2 malformed-allreduce), which is how malformed
// packets surface in traces.
enum class TraceKind : std::uint8_t {
  inject,
  voq_enq,
  grant,
  egress_beat,
  agg_absorb,
  agg_ready,
  broadcast_start,
  broadcast_end,
  stall,
};

inline std::string_view to_string(TraceKind k) {
  switch (k) {
    case TraceKind::inject: return "inject";
    case TraceKind::voq_enq: return "voq-enq";
    case TraceKind::grant: return "grant";
    case TraceKind::egress_beat: return "egress-beat";
    case TraceKind::agg_absorb: return "agg-absorb";
    case TraceKind::agg_ready: return "agg-ready";
    case TraceKind::broadcast_start: return "broadcast-start";
    case TraceKind::broadcast_end: return "broadcast-end";
    case TraceKind::stall: return "stall";
  }
  return "?";
}

struct TraceEvent {
  std::uint64_t cycle = 0;
  TraceKind kind = TraceKind::inject;
  int port = 0;  // ingress, egress, or aggregator index depending on kind
  std::uint64_t pkt_id = 0;
  std::int64_t beat_index = -1;
};

struct TraceSink {
  virtual ~TraceSink() = default;
  virtual void on_event(const TraceEvent&) = 0;
};

struct VectorTraceSink final : TraceSink {
  std::vector<TraceEvent> events;
  void on_event(const TraceEvent& ev) override { events.push_back(ev); }
};

// Result packets get ids disjoint from injected-packet ids.
inline constexpr std::uint64_t kResultIdBase = 0x8000000000000000ull;
inline constexpr std::uint64_t make_result_id(int aggregator, std::uint64_t ordinal) {
  return kResultIdBase | (static_cast<std::uint64_t>(aggregator) << 32) | ordinal;
}

// --- measured counters -------------------------------------------------------

struct IngressStats {
  std::uint64_t offered_beats = 0;   // cycles a beat was presented
  std::uint64_t accepted_beats = 0;  // beats that entered a VOQ
  std::uint64_t bubble_cycles = 0;
  std::uint64_t voq_full_stalls = 0;
};

struct EgressStats {
  std::uint64_t delivered_beats = 0;
  std::uint64_t delivered_packets = 0;
  std::uint64_t regular_packets = 0;
  std::uint64_t result_copies = 0;
  std::uint64_t gate_start_stalls = 0;  // regular head held by the gate
};

struct AggStats {
  std::uint64_t packets_absorbed = 0;
  std::uint64_t beats_absorbed = 0;
  std::uint64_t rounds_completed = 0;
  std::uint64_t broadcasts_sent = 0;
  std::uint64_t hazard_stalls = 0;  // scoreboard read-after-write holds
  std::uint64_t gate_stalls = 0;    // buffer busy with a pending/live emission
};

struct LatencyStats {
  std::uint64_t count = 0;
  std::uint64_t sum = 0;
  std::uint64_t min = 0;
  std::uint64_t max = 0;
  void record(std::uint64_t v) {
    if (count == 0 || v < min) min = v;
    if (v > max) max = v;
    ++count;
    sum += v;
  }
};

struct Stats {
  std::string_view prng = kPrngAlgorithm;
  std::uint64_t cycles_run = 0;
  std::uint64_t drain_cycles = 0;
  std::array<IngressStats, 4> ingress{};
  std::array<EgressStats, 4> egress{};
  std::array<AggStats, 4> agg{};
  LatencyStats regular_latency{};  // inject -> last egress beat
  std::uint64_t injected_packets = 0;
  std::uint64_t injected_regular = 0;
  std::uint64_t injected_allreduce = 0;
  std::uint64_t malformed_packets = 0;
  std::uint64_t delivered_regular = 0;
  std::uint64_t rounds_completed = 0;
  std::uint64_t broadcasts = 0;
  std::uint64_t gate_hold_cycles = 0;

  // steady-state line-rate verdict: accepted fraction of offered beats
  double acceptance_fraction(int port) const {
    const auto& s = ingress[static_cast<std::size_t>(port)];
    return s.offered_beats ? static_cast<double>(s.accepted_beats) /
                                 static_cast<double>(s.offered_beats)
                           : 1.0;
  }
};

}  // namespace redsim
