#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <unordered_map>

#include "redsim/aggregator.hpp"
#include "redsim/check.hpp"
#include "redsim/trace.hpp"
#include "redsim/wire.hpp"

// Cycle-driven 4x4 virtual-output-queue switch with an inline aggregation
// unit on every output port. Each cycle runs in two phases: phase A computes
// every grant/ready/gate decision from state as it stood at the start of the
// cycle, phase B commits all transfers at once. That two-phase discipline is
// what makes runs bit-reproducible.
//
// Datapaths per egress port:
//   VOQ[i][e] -> crossbar (packet-granular round-robin grant) -> output unit
//     regular packets: bypass straight to the port, gated while any
//       aggregator has a result pending;
//     allreduce packets: absorbed into the aggregator (headers consumed,
//       values issued to the adder lanes), independent of the port output,
//       so absorption continues while a broadcast is on the wire.
// Result broadcasts own all four ports at once and move in lockstep when
// every sink is ready.

namespace redsim {

struct FabricConfig {
  static constexpr int kNumPorts = 4;  // 4 input ports x 4 output ports
  std::size_t voq_depth = 2048;        // beats per (ingress, egress) queue
  std::uint32_t adder_latency = 8;     // pipelined adder stages
  std::uint64_t buffer_init_seed = 0;  // aggregator reset garbage pattern
  FpPolicy policy{};
};

// Ready/valid stream handshake at the fabric boundary: a transfer happens on
// a cycle iff valid and ready; an offered beat is held stable until it
// transfers.
struct PortIo {
  bool valid = false;
  bool ready = false;
  Beat beat{};
};

struct OfferedBeat {
  Beat beat{};
  std::uint64_t pkt_id = 0;
  bool first = false;
  std::uint32_t beat_index = 0;
  const PacketDesc* desc = nullptr;  // non-null on the first beat
};

struct IngressSource {
  virtual ~IngressSource() = default;
  virtual std::optional<OfferedBeat> peek(int port, std::uint64_t cycle) = 0;
  virtual void consume(int port) = 0;
};

struct EgressSink {
  virtual ~EgressSink() = default;
  virtual bool ready(int port, std::uint64_t cycle) = 0;
  virtual void accept(int port, const Beat& beat, std::uint64_t pkt_id,
                      std::uint64_t cycle) = 0;
};

// Route decision for one parsed packet.
struct RouteDecision {
  int egress = 0;
  PacketKind kind = PacketKind::regular;
  bool malformed = false;
  std::uint32_t elem_count = 0;
};

// Allreduce packets go to the egress their aggr_no names; regular (and
// malformed-allreduce) packets follow the out-of-band destination.
inline RouteDecision ingress_classify(const PacketDesc& pkt) {
  RouteDecision r;
  const DecodedPayload dec = decode_allreduce(pkt.payload);
  if (dec.cls == PayloadClass::allreduce) {
    r.kind = PacketKind::allreduce;
    r.egress = static_cast<int>(dec.header.aggr_no);
    r.elem_count = dec.header.elem_count;
  } else {
    r.kind = PacketKind::regular;
    r.malformed = dec.cls == PayloadClass::malformed_allreduce;
    r.egress = pkt.dest_port;
  }
  return r;
}

// Crossbar grant rule: first requesting ingress strictly after the last
// grant in cyclic order. Grants are packet-granular; the arbiter pointer
// advances only when a granted packet completes.
inline std::optional<int> crossbar_grant(std::uint32_t request_mask,
                                         int rr_last) {
  return rr_select(request_mask, rr_last);
}

class Fabric {
 public:
  static constexpr int kPorts = FabricConfig::kNumPorts;

  Fabric(const FabricConfig& cfg, Stats* stats, TraceSink* trace = nullptr)
      : cfg_(cfg), stats_(stats), trace_(trace) {
    for (int i = 0; i < kPorts; ++i)
      aggs_[i] = std::make_unique<Aggregator>(i, cfg.adder_latency,
                                              cfg.buffer_init_seed, cfg.policy);
  }

  const FabricConfig& config() const { return cfg_; }
  const Aggregator& aggregator(int i) const { return *aggs_[i]; }

  struct GateState {
    bool hold = false;          // regular starts blocked
    bool broadcasting = false;  // a result is on the wire
    int selected_agg = -1;
  };
  GateState gate() const {
    GateState g;
    g.broadcasting = bcast_.active;
    g.selected_agg = bcast_.agg;
    for (const auto& a : aggs_) g.hold |= a->ready();
    g.hold |= bcast_.active;
    return g;
  }

  bool quiescent() const {
    for (int i = 0; i < kPorts; ++i) {
      for (int e = 0; e < kPorts; ++e)
        if (!voq_[i][e].empty()) return false;
      if (locked_[i] >= 0) return false;
      if (aggs_[i]->ready() || aggs_[i]->inflight_writes()) return false;
    }
    return !bcast_.active;
  }

  // Executes one cycle. Aggregator pipes retire first, then phase A plans
  // all transfers against start-of-cycle state, then phase B commits them.
  void step(std::uint64_t cycle, IngressSource& in, EgressSink& out) {
    for (auto& a : aggs_) a->tick(cycle);

    // ---- phase A ----------------------------------------------------
    std::array<bool, kPorts> sink_ready{};
    for (int e = 0; e < kPorts; ++e) sink_ready[e] = out.ready(e, cycle);

    // gate and broadcast plan
    bool any_pending = false;
    for (const auto& a : aggs_) any_pending |= a->ready();
    bool tx_idle = true;
    for (int e = 0; e < kPorts; ++e) tx_idle &= !tx_[e].active;

    int start_bcast = -1;
    if (!bcast_.active && any_pending && tx_idle) {
      std::uint32_t mask = 0;
      for (int a = 0; a < kPorts; ++a)
        if (aggs_[a]->emission_ready(cycle)) mask |= 1u << a;
      if (auto sel = rr_select(mask, bcast_last_)) start_bcast = *sel;
    }
    const bool bcast_now = bcast_.active || start_bcast >= 0;
    const bool gate_hold = any_pending || bcast_now;
    if (gate_hold && stats_) ++stats_->gate_hold_cycles;

    bool all_sinks_ready = true;
    for (int e = 0; e < kPorts; ++e) all_sinks_ready &= sink_ready[e];
    const bool bcast_xfer = bcast_now && all_sinks_ready;

    // per-egress crossbar plan
    struct EgressPlan {
      int from = -1;          // granted ingress with a transferring beat
      bool to_absorb = false;
      bool lock_first = false;
      std::uint32_t absorb_nvals = 0;
      std::array<Bf16Bits, 4> vals{};
    };
    std::array<EgressPlan, kPorts> plan{};

    for (int e = 0; e < kPorts; ++e) {
      if (locked_[e] >= 0) {
        const int i = locked_[e];
        if (voq_[i][e].empty()) continue;  // underrun: beat not here yet
        const VoqEntry& head = voq_[i][e].front();
        const Meta& m = meta_.at(head.pkt_id);
        if (m.kind == PacketKind::regular) {
          if (sink_ready[e]) plan[e].from = i;
        } else {
          plan_absorb(e, i, head, cycle, plan[e]);
        }
        continue;
      }
      // unlocked: every present head is a packet's first beat
      std::uint32_t eligible = 0;
      bool regular_blocked = false;
      for (int i = 0; i < kPorts; ++i) {
        if (voq_[i][e].empty()) continue;
        const VoqEntry& head = voq_[i][e].front();
        hard_assert(head.first, "packet boundary lost in VOQ");
        const Meta& m = meta_.at(head.pkt_id);
        if (m.kind == PacketKind::regular) {
          if (gate_hold || bcast_now) {
            regular_blocked = true;
          } else if (sink_ready[e]) {
            eligible |= 1u << i;
          }
        } else {
          eligible |= 1u << i;  // header beat, always absorbable
        }
      }
      if (regular_blocked && stats_)
        ++stats_->egress[static_cast<std::size_t>(e)].gate_start_stalls;
      if (auto g = crossbar_grant(eligible, xbar_last_[e])) {
        const VoqEntry& head = voq_[*g][e].front();
        const Meta& m = meta_.at(head.pkt_id);
        plan[e].from = *g;
        plan[e].lock_first = true;
        plan[e].to_absorb = m.kind == PacketKind::allreduce;
      }
    }

    // ingress plan
    std::array<std::optional<OfferedBeat>, kPorts> offered;
    std::array<bool, kPorts> ingress_accept{};
    for (int i = 0; i < kPorts; ++i) {
      offered[i] = in.peek(i, cycle);
      if (!offered[i]) continue;
      const OfferedBeat& ob = *offered[i];
      if (!meta_.contains(ob.pkt_id)) register_packet(ob, cycle);
      const Meta& m = meta_.at(ob.pkt_id);
      if (stats_) ++stats_->ingress[static_cast<std::size_t>(i)].offered_beats;
      if (voq_[i][m.egress].size() < cfg_.voq_depth) {
        ingress_accept[i] = true;
      } else if (stats_) {
        ++stats_->ingress[static_cast<std::size_t>(i)].voq_full_stalls;
        trace({cycle, TraceKind::stall, i, ob.pkt_id,
               static_cast<std::int64_t>(ob.beat_index)});
      }
    }

    // ---- phase B ----------------------------------------------------
    if (start_bcast >= 0) begin_broadcast(start_bcast, cycle);
    if (bcast_xfer) advance_broadcast(cycle, out);

    for (int e = 0; e < kPorts; ++e) {
      if (plan[e].from < 0) continue;
      commit_crossbar(e, plan[e], cycle, out);
    }

    for (int i = 0; i < kPorts; ++i) {
      if (!offered[i] || !ingress_accept[i]) continue;
      const OfferedBeat& ob = *offered[i];
      Meta& m = meta_.at(ob.pkt_id);
      voq_[i][m.egress].push_back({ob.beat, ob.pkt_id, ob.beat_index == 0});
      in.consume(i);
      if (stats_) ++stats_->ingress[static_cast<std::size_t>(i)].accepted_beats;
      trace({cycle, TraceKind::voq_enq, i, ob.pkt_id,
             static_cast<std::int64_t>(ob.beat_index)});
    }
  }

 private:
  struct VoqEntry {
    Beat beat;
    std::uint64_t pkt_id;
    bool first;
  };

  struct Meta {
    PacketKind kind = PacketKind::regular;
    bool malformed = false;
    int egress = 0;
    std::uint32_t elem_count = 0;
    std::uint64_t inject_cycle = 0;
    std::uint32_t beats_out = 0;  // beats delivered or absorbed so far
  };

  // absorb-side per-egress stream context
  struct RxState {
    bool active = false;
    std::uint64_t pkt_id = 0;
    std::size_t byte_cursor = 0;
    std::uint32_t wire_count = 0;
  };

  struct Broadcast {
    bool active = false;
    int agg = -1;
    std::uint64_t result_id = 0;
    std::uint32_t elem_count = 0;
    std::size_t total_bytes = 0;
    std::size_t byte_cursor = 0;
  };

  void trace(const TraceEvent& ev) {
    if (trace_) trace_->on_event(ev);
  }

  void register_packet(const OfferedBeat& ob, std::uint64_t cycle) {
    hard_assert(ob.desc != nullptr, "first beat offered without a descriptor");
    const RouteDecision r = ingress_classify(*ob.desc);
    hard_assert(r.kind == ob.desc->kind,
                "scenario descriptor disagrees with wire classification");
    if (r.kind == PacketKind::allreduce)
      hard_assert(r.egress == ob.desc->dest_port,
                  "allreduce dest_port must equal aggr_no");
    Meta m;
    m.kind = r.kind;
    m.malformed = r.malformed;
    m.egress = r.egress;
    m.elem_count = r.elem_count;
    m.inject_cycle = ob.desc->inject_cycle;
    meta_.emplace(ob.pkt_id, m);
    if (stats_) {
      ++stats_->injected_packets;
      if (r.kind == PacketKind::allreduce)
        ++stats_->injected_allreduce;
      else
        ++stats_->injected_regular;
      if (r.malformed) ++stats_->malformed_packets;
    }
    const std::int64_t kind_code = r.malformed ? 2 : (r.kind == PacketKind::allreduce ? 1 : 0);
    trace({cycle, TraceKind::inject, ob.desc->ingress_port, ob.pkt_id, kind_code});
  }

  // Decides whether the locked allreduce packet's head beat can be absorbed
  // this cycle, extracting the value lanes it carries.
  void plan_absorb(int e, int i, const VoqEntry& head, std::uint64_t cycle,
                   auto& pl) {
    const RxState& rx = rx_[e];
    hard_assert(rx.active && rx.pkt_id == head.pkt_id,
                "absorb stream out of sync with crossbar lock");
    const unsigned nbytes = static_cast<unsigned>(std::popcount(head.beat.keep));
    const std::size_t lo = rx.byte_cursor;
    const std::size_t hi = lo + nbytes;
    std::uint32_t first_val = 0, nvals = 0;
    if (hi > kAllreduceHeaderBytes) {
      first_val = static_cast<std::uint32_t>(
          (std::max(lo, kAllreduceHeaderBytes) - kAllreduceHeaderBytes) / 2);
      const std::uint32_t end_val =
          static_cast<std::uint32_t>((hi - kAllreduceHeaderBytes) / 2);
      nvals = end_val - first_val;
    }
    if (nvals == 0) {
      pl.from = i;  // pure header bytes, nothing to stall on
      return;
    }
    const StallCause cause = aggs_[e]->probe_values(nvals, cycle);
    if (cause == StallCause::none) {
      pl.from = i;
      pl.to_absorb = true;
      pl.absorb_nvals = nvals;
      for (std::uint32_t v = 0; v < nvals; ++v) {
        const std::size_t off = kAllreduceHeaderBytes + 2 * (first_val + v) - lo;
        pl.vals[v].bits = static_cast<std::uint16_t>(
            (head.beat.data >> (8 * off)) & 0xFFFFu);
      }
      return;
    }
    if (stats_) {
      auto& as = stats_->agg[static_cast<std::size_t>(e)];
      if (cause == StallCause::hazard)
        ++as.hazard_stalls;
      else
        ++as.gate_stalls;
    }
    trace({cycle, TraceKind::stall, e, head.pkt_id,
           static_cast<std::int64_t>(rx.byte_cursor / kBusBytes)});
  }

  void commit_crossbar(int e, const auto& pl, std::uint64_t cycle,
                       EgressSink& out) {
    const int i = pl.from;
    VoqEntry head = voq_[i][e].front();
    Meta& m = meta_.at(head.pkt_id);

    if (pl.lock_first) {
      locked_[e] = i;
      trace({cycle, TraceKind::grant, e, head.pkt_id, 0});
      if (m.kind == PacketKind::allreduce) {
        rx_[e] = {true, head.pkt_id, 0, 0};
      } else {
        tx_[e] = {true, head.pkt_id};
      }
    }

    voq_[i][e].pop_front();
    const std::int64_t beat_idx = m.beats_out++;

    if (m.kind == PacketKind::regular) {
      out.accept(e, head.beat, head.pkt_id, cycle);
      trace({cycle, TraceKind::egress_beat, e, head.pkt_id, beat_idx});
      if (stats_) {
        auto& es = stats_->egress[static_cast<std::size_t>(e)];
        ++es.delivered_beats;
        if (head.beat.last) {
          ++es.delivered_packets;
          ++es.regular_packets;
          ++stats_->delivered_regular;
          stats_->regular_latency.record(cycle - m.inject_cycle);
        }
      }
      if (head.beat.last) {
        tx_[e] = {};
        complete_packet_grant(e, i, head.pkt_id);
      }
      return;
    }

    // allreduce absorption path
    RxState& rx = rx_[e];
    const unsigned nbytes = static_cast<unsigned>(std::popcount(head.beat.keep));
    if (rx.byte_cursor == 0) {
      // header beat 0 carries magic and elem_count straight off the wire
      const std::uint32_t wire_magic =
          static_cast<std::uint32_t>(head.beat.data & 0xFFFFFFFFu);
      rx.wire_count =
          static_cast<std::uint32_t>((head.beat.data >> 32) & 0xFFFFFFFFu);
      hard_assert(wire_magic == kAllreduceMagic, "absorb stream lost the magic");
      hard_assert(rx.wire_count == m.elem_count,
                  "wire element count diverged from classification");
      aggs_[e]->begin_packet(rx.wire_count, cycle);
    }
    const std::uint64_t rounds_before = aggs_[e]->rounds_completed();
    if (pl.absorb_nvals > 0 || head.beat.last) {
      aggs_[e]->absorb_values(
          std::span<const Bf16Bits>(pl.vals.data(), pl.absorb_nvals),
          head.beat.last, cycle);
    }
    rx.byte_cursor += nbytes;
    if (stats_) ++stats_->agg[static_cast<std::size_t>(e)].beats_absorbed;
    trace({cycle, TraceKind::agg_absorb, e, head.pkt_id, beat_idx});
    if (head.beat.last) {
      hard_assert(rx.byte_cursor == kAllreduceHeaderBytes + 2 * rx.wire_count,
                  "allreduce packet length mismatch at absorb");
      rx_[e] = {};
      if (stats_) {
        ++stats_->agg[static_cast<std::size_t>(e)].packets_absorbed;
        stats_->agg[static_cast<std::size_t>(e)].rounds_completed =
            aggs_[e]->rounds_completed();
        stats_->rounds_completed = 0;
        for (const auto& a : aggs_) stats_->rounds_completed += a->rounds_completed();
      }
      if (aggs_[e]->rounds_completed() != rounds_before) {
        trace({cycle, TraceKind::agg_ready, e,
               make_result_id(e, aggs_[e]->rounds_completed()), 0});
      }
      complete_packet_grant(e, i, head.pkt_id);
    }
  }

  void complete_packet_grant(int e, int i, std::uint64_t pkt_id) {
    locked_[e] = -1;
    xbar_last_[e] = i;
    meta_.erase(pkt_id);
  }

  void begin_broadcast(int agg, std::uint64_t cycle) {
    const auto& round = aggs_[agg]->begin_emission();
    bcast_.active = true;
    bcast_.agg = agg;
    bcast_.result_id = make_result_id(agg, round.ordinal);
    bcast_.elem_count = round.elem_count;
    bcast_.total_bytes = kAllreduceHeaderBytes + 2 * round.elem_count;
    bcast_.byte_cursor = 0;
    trace({cycle, TraceKind::broadcast_start, agg, bcast_.result_id, 0});
  }

  // One lockstep broadcast beat to all four ports; values are read live from
  // the emitting buffer at transfer time.
  void advance_broadcast(std::uint64_t cycle, EgressSink& out) {
    const std::size_t lo = bcast_.byte_cursor;
    const std::size_t n = std::min(kBusBytes, bcast_.total_bytes - lo);
    Beat beat;
    beat.data = 0;
    beat.keep = static_cast<std::uint8_t>((1u << n) - 1);
    beat.last = lo + n == bcast_.total_bytes;
    std::uint32_t nvals = 0;
    for (std::size_t off = 0; off < n; ++off) {
      const std::size_t pos = lo + off;
      std::uint8_t byte = 0;
      if (pos < 4) {
        byte = static_cast<std::uint8_t>(kAllreduceMagic >> (8 * pos));
      } else if (pos < 8) {
        byte = static_cast<std::uint8_t>(bcast_.elem_count >> (8 * (pos - 4)));
      } else if (pos < 12) {
        byte = static_cast<std::uint8_t>(static_cast<std::uint32_t>(bcast_.agg) >>
                                         (8 * (pos - 8)));
      } else {
        const std::uint32_t vi = static_cast<std::uint32_t>((pos - 12) / 2);
        const Bf16Bits v = aggs_[bcast_.agg]->emit_value(vi);
        byte = static_cast<std::uint8_t>(((pos - 12) % 2) ? (v.bits >> 8) : v.bits);
        if ((pos - 12) % 2 == 1) ++nvals;
      }
      beat.data |= static_cast<std::uint64_t>(byte) << (8 * off);
    }
    const std::int64_t beat_idx =
        static_cast<std::int64_t>(bcast_.byte_cursor / kBusBytes);
    for (int e = 0; e < kPorts; ++e) {
      out.accept(e, beat, bcast_.result_id, cycle);
      trace({cycle, TraceKind::egress_beat, e, bcast_.result_id, beat_idx});
      if (stats_) {
        auto& es = stats_->egress[static_cast<std::size_t>(e)];
        ++es.delivered_beats;
        if (beat.last) {
          ++es.delivered_packets;
          ++es.result_copies;
        }
      }
    }
    aggs_[bcast_.agg]->note_emitted(nvals);
    bcast_.byte_cursor += n;
    if (beat.last) {
      aggs_[bcast_.agg]->end_emission();
      if (stats_) {
        ++stats_->broadcasts;
        ++stats_->agg[static_cast<std::size_t>(bcast_.agg)].broadcasts_sent;
      }
      trace({cycle, TraceKind::broadcast_end, bcast_.agg, bcast_.result_id,
             beat_idx});
      bcast_last_ = bcast_.agg;
      bcast_ = Broadcast{};
    }
  }

  FabricConfig cfg_;
  Stats* stats_;
  TraceSink* trace_;
  std::array<std::unique_ptr<Aggregator>, kPorts> aggs_;
  std::deque<VoqEntry> voq_[kPorts][kPorts];  // [ingress][egress]
  std::unordered_map<std::uint64_t, Meta> meta_;
  std::array<int, kPorts> locked_{-1, -1, -1, -1};
  std::array<int, kPorts> xbar_last_{3, 3, 3, 3};
  struct TxState {
    bool active = false;
    std::uint64_t pkt_id = 0;
  };
  std::array<TxState, kPorts> tx_{};
  std::array<RxState, kPorts> rx_{};
  Broadcast bcast_;
  int bcast_last_ = 3;
};

}  // namespace redsim
