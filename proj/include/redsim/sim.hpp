#pragma once

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "redsim/fabric.hpp"
#include "redsim/scenario.hpp"
#include "redsim/trace.hpp"

// Simulation kernel: drives a fabric from an expanded scenario, measures,
// and checks the outcome against an order-based golden model that never
// touches the fabric's state machines (it shares only the softfloat
// primitives).

namespace redsim {

// --- drivers -----------------------------------------------------------------

// Streams each ingress port's packets beat by beat, honoring the bubble
// pattern. An offered beat is held stable until the fabric consumes it.
class Injector final : public IngressSource {
 public:
  Injector(const ExpandedScenario& exp, Stats* stats)
      : exp_(exp), stats_(stats) {
    for (int p = 0; p < 4; ++p) {
      ports_[p].bubbles = exp.bubbles[static_cast<std::size_t>(p)];
      ports_[p].rng.emplace(derive_seed(exp.seed, 0xB0B5, static_cast<std::uint64_t>(p)));
    }
  }

  std::optional<OfferedBeat> peek(int port, std::uint64_t cycle) override {
    Port& ps = ports_[port];
    const bool idle = bubble_this_cycle(ps, cycle);
    activate_next(port, cycle);
    if (!ps.active) return std::nullopt;
    if (idle) {
      if (stats_) ++stats_->ingress[static_cast<std::size_t>(port)].bubble_cycles;
      return std::nullopt;
    }
    OfferedBeat ob;
    ob.beat = ps.beats[ps.cursor];
    ob.pkt_id = ps.desc->id;
    ob.first = ps.cursor == 0;
    ob.beat_index = static_cast<std::uint32_t>(ps.cursor);
    ob.desc = ob.first ? ps.desc : nullptr;
    // handshake discipline: once offered, a beat is held stable until it
    // transfers; re-offers after a stall or bubble must be bit-identical
    PortIo& io = ps.io;
    if (io.valid)
      hard_assert(io.beat.data == ob.beat.data && io.beat.keep == ob.beat.keep &&
                      io.beat.last == ob.beat.last,
                  "offered beat revoked before transfer");
    io.valid = true;
    io.beat = ob.beat;
    return ob;
  }

  void consume(int port) override {
    Port& ps = ports_[port];
    hard_assert(ps.active && ps.io.valid, "consume without an offered beat");
    ps.io = PortIo{};
    if (++ps.cursor == ps.beats.size()) {
      ps.active = false;
      ++ps.next;
    }
  }

  bool exhausted() const {
    for (int p = 0; p < 4; ++p) {
      const Port& ps = ports_[p];
      if (ps.active ||
          ps.next < exp_.schedule[static_cast<std::size_t>(p)].size())
        return false;
    }
    return true;
  }

 private:
  struct Port {
    std::size_t next = 0;  // index into the per-port schedule
    bool active = false;
    const PacketDesc* desc = nullptr;
    std::vector<Beat> beats;
    std::size_t cursor = 0;
    PortIo io;  // offered-beat stability tracking
    BubbleSpec bubbles;
    std::optional<Prng> rng;
    std::uint64_t last_draw_cycle = ~std::uint64_t{0};
    bool last_draw = false;
  };

  bool bubble_this_cycle(Port& ps, std::uint64_t cycle) {
    switch (ps.bubbles.mode) {
      case BubbleSpec::Mode::none:
        return false;
      case BubbleSpec::Mode::periodic:
        return cycle % ps.bubbles.period < ps.bubbles.len;
      case BubbleSpec::Mode::random:
        // one draw per cycle, cached so repeated peeks stay stable
        if (ps.last_draw_cycle != cycle) {
          ps.last_draw_cycle = cycle;
          ps.last_draw = ps.rng->chance_milli(ps.bubbles.idle_milli);
        }
        return ps.last_draw;
    }
    return false;
  }

  void activate_next(int port, std::uint64_t cycle) {
    Port& ps = ports_[port];
    if (ps.active) return;
    const auto& sched = exp_.schedule[static_cast<std::size_t>(port)];
    if (ps.next >= sched.size()) return;
    const PacketDesc& d = exp_.packets[sched[ps.next]];
    if (d.inject_cycle > cycle) return;
    ps.active = true;
    ps.desc = &d;
    ps.beats = packet_to_beats(d.payload);
    ps.cursor = 0;
  }

  const ExpandedScenario& exp_;
  Stats* stats_;
  std::array<Port, 4> ports_;
};

struct DeliveredPacket {
  std::uint64_t pkt_id = 0;
  int egress = 0;
  std::vector<std::uint8_t> bytes;
  std::uint64_t last_cycle = 0;
};

// Applies the per-egress backpressure pattern and reassembles delivered
// packets, asserting beat-level packet atomicity as it goes.
class SinkSet final : public EgressSink {
 public:
  SinkSet(const ExpandedScenario& exp) : exp_(exp) {
    for (int p = 0; p < 4; ++p)
      rng_[p].emplace(derive_seed(exp.seed, 0x5141, static_cast<std::uint64_t>(p)));
  }

  bool ready(int port, std::uint64_t cycle) override {
    const SinkSpec& s = exp_.sinks[static_cast<std::size_t>(port)];
    switch (s.mode) {
      case SinkSpec::Mode::always:
        return true;
      case SinkSpec::Mode::duty:
        return cycle % s.duty_den < s.duty_num;
      case SinkSpec::Mode::random: {
        Draw& d = draw_[port];
        if (d.cycle != cycle) {
          d.cycle = cycle;
          d.ready = rng_[port]->chance_milli(s.ready_milli);
        }
        return d.ready;
      }
    }
    return true;
  }

  void accept(int port, const Beat& beat, std::uint64_t pkt_id,
              std::uint64_t cycle) override {
    Assembly& as = assembly_[port];
    if (as.open) {
      hard_assert(as.pkt_id == pkt_id,
                  "beats of distinct packets interleaved on an egress");
    } else {
      as.open = true;
      as.pkt_id = pkt_id;
      as.bytes.clear();
    }
    hard_assert(beat.keep != 0 && (beat.keep & (beat.keep + 1)) == 0,
                "egress beat with a non-contiguous keep mask");
    hard_assert(beat.last || beat.keep == 0xFF,
                "egress beat with partial keep before last");
    for (unsigned i = 0; i < 8; ++i)
      if (beat.keep & (1u << i))
        as.bytes.push_back(static_cast<std::uint8_t>(beat.data >> (8 * i)));
    if (beat.last) {
      delivered.push_back({pkt_id, port, as.bytes, cycle});
      as = Assembly{};
    }
  }

  std::vector<DeliveredPacket> delivered;

 private:
  struct Assembly {
    bool open = false;
    std::uint64_t pkt_id = 0;
    std::vector<std::uint8_t> bytes;
  };
  struct Draw {
    std::uint64_t cycle = ~std::uint64_t{0};
    bool ready = false;
  };
  const ExpandedScenario& exp_;
  std::array<std::optional<Prng>, 4> rng_;
  std::array<Assembly, 4> assembly_{};
  std::array<Draw, 4> draw_{};
};

// --- run ----------------------------------------------------------------------

struct RunResult {
  Stats stats;
  std::vector<DeliveredPacket> delivered;
  bool drained = false;
  std::string drain_error;
};

inline RunResult run_scenario(const ExpandedScenario& exp,
                              TraceSink* trace = nullptr) {
  RunResult rr;
  Fabric fabric(exp.config, &rr.stats, trace);
  Injector in(exp, &rr.stats);
  SinkSet out(exp);

  std::uint64_t cycle = 0;
  for (; cycle < exp.duration; ++cycle) fabric.step(cycle, in, out);
  rr.stats.cycles_run = cycle;

  // drain: keep stepping while anything is still moving; a window with no
  // progress at all is a hang
  std::uint64_t last_progress = cycle;
  auto progress_mark = [&]() {
    std::uint64_t m = rr.stats.broadcasts + out.delivered.size();
    for (int p = 0; p < 4; ++p) {
      m += rr.stats.ingress[static_cast<std::size_t>(p)].accepted_beats;
      m += rr.stats.egress[static_cast<std::size_t>(p)].delivered_beats;
      m += rr.stats.agg[static_cast<std::size_t>(p)].beats_absorbed;
    }
    return m;
  };
  std::uint64_t mark = progress_mark();
  while (!(in.exhausted() && fabric.quiescent())) {
    fabric.step(cycle, in, out);
    ++cycle;
    const std::uint64_t m = progress_mark();
    if (m != mark) {
      mark = m;
      last_progress = cycle;
    } else if (cycle - last_progress > exp.drain_window) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "drain timeout after %" PRIu64
                    " idle cycles: %" PRIu64 " of %" PRIu64
                    " regular packets delivered, %" PRIu64 " broadcasts",
                    exp.drain_window, rr.stats.delivered_regular,
                    rr.stats.injected_regular, rr.stats.broadcasts);
      rr.drain_error = buf;
      break;
    }
  }
  rr.stats.drain_cycles = cycle - rr.stats.cycles_run;
  rr.stats.cycles_run = cycle;
  rr.drained = rr.drain_error.empty();
  rr.delivered = std::move(out.delivered);
  return rr;
}

// --- golden model -------------------------------------------------------------

struct GoldenRound {
  int aggregator = 0;
  std::uint64_t ordinal = 0;  // 1-based per aggregator
  std::vector<std::uint8_t> bytes;
  bool comparable = true;  // false when the round mixed element counts
};

struct GoldenExpectation {
  // regular (and malformed) packets deliver once, byte-identical, at dest
  struct Regular {
    int egress = 0;
    const std::vector<std::uint8_t>* bytes = nullptr;
  };
  std::map<std::uint64_t, Regular> regular;
  std::array<std::vector<GoldenRound>, 4> rounds;
  std::vector<std::string> warnings;
};

// Computes every expected egress packet without simulating the fabric.
// Arrival order at an aggregator is taken as (inject cycle, ingress index,
// per-ingress order); scenarios whose cross-ingress ordering is ambiguous
// are rejected unless every operand is a small exact integer, in which case
// the sums are order-insensitive by construction.
inline GoldenExpectation golden_expected(const ExpandedScenario& exp) {
  GoldenExpectation g;
  const FpPolicy pol = exp.config.policy;

  std::array<std::vector<const PacketDesc*>, 4> per_agg;
  for (const PacketDesc& p : exp.packets) {
    if (p.kind == PacketKind::regular) {
      g.regular[p.id] = {p.dest_port, &p.payload};
    } else {
      per_agg[static_cast<std::size_t>(p.dest_port)].push_back(&p);
    }
  }

  const auto order_insensitive = [](const DecodedPayload& d) {
    for (Bf16Bits v : d.values) {
      const std::uint32_t mag = v.bits & 0x7FFF;
      if (mag == 0) continue;
      const int e = static_cast<int>(mag >> 7) - 127;
      if (e < 0 || e > 6) return false;  // not an integer in [-64, 64]
      const std::uint32_t frac = mag & 0x7F;
      if (e < 7 && (frac & ((1u << (7 - e)) - 1)) != 0) return false;
    }
    return true;
  };

  for (int a = 0; a < 4; ++a) {
    auto& pkts = per_agg[static_cast<std::size_t>(a)];
    // packets already sit in id order = (cycle, declaration order); enforce
    // the golden arrival rule: cycle, then ingress, then per-ingress order
    std::stable_sort(pkts.begin(), pkts.end(),
                     [](const PacketDesc* x, const PacketDesc* y) {
                       if (x->inject_cycle != y->inject_cycle)
                         return x->inject_cycle < y->inject_cycle;
                       return x->ingress_port < y->ingress_port;
                     });
    // ambiguity: same-cycle injections from different ingresses are accepted
    // only when the operands are order-insensitive by construction, either
    // byte-identical payloads or exact small integers
    bool int_escape = false;
    for (std::size_t i = 0; i + 1 < pkts.size(); ++i) {
      if (pkts[i]->inject_cycle == pkts[i + 1]->inject_cycle &&
          pkts[i]->ingress_port != pkts[i + 1]->ingress_port) {
        if (pkts[i]->payload == pkts[i + 1]->payload) continue;
        const bool ints = order_insensitive(decode_allreduce(pkts[i]->payload)) &&
                          order_insensitive(decode_allreduce(pkts[i + 1]->payload));
        if (!ints)
          throw ScenarioError(
              "aggregator " + std::to_string(a) +
              ": same-cycle injections from different ingresses make the "
              "arrival order ambiguous (packets " +
              std::to_string(pkts[i]->id) + ", " +
              std::to_string(pkts[i + 1]->id) +
              "); use identical or exact small-integer values, or separate "
              "the cycles");
        int_escape = true;
      }
    }
    if (int_escape && pkts.size() > 4)
      g.warnings.push_back(
          "aggregator " + std::to_string(a) +
          ": cross-ingress integer traffic spans multiple rounds; round "
          "grouping under contention may diverge from the golden assumption");

    for (std::size_t base = 0; base + 4 <= pkts.size(); base += 4) {
      GoldenRound round;
      round.aggregator = a;
      round.ordinal = base / 4 + 1;
      const DecodedPayload first = decode_allreduce(pkts[base]->payload);
      hard_assert(first.cls == PayloadClass::allreduce, "golden saw a bad packet");
      const std::uint32_t count = first.header.elem_count;
      std::vector<Fp32Bits> acc(count);
      for (std::uint32_t i = 0; i < count; ++i)
        acc[i] = bf16_to_fp32(first.values[i], pol);  // write-through
      for (int k = 1; k < 4; ++k) {
        const DecodedPayload d = decode_allreduce(pkts[base + k]->payload);
        if (d.header.elem_count != count) {
          round.comparable = false;
          g.warnings.push_back("aggregator " + std::to_string(a) + " round " +
                               std::to_string(round.ordinal) +
                               ": element count mismatch (" +
                               std::to_string(d.header.elem_count) + " vs " +
                               std::to_string(count) +
                               "); excluded from comparison");
        }
        const std::uint32_t n = std::min(count, d.header.elem_count);
        for (std::uint32_t i = 0; i < n; ++i)
          acc[i] = fp32_add(acc[i], bf16_to_fp32(d.values[i], pol), pol);
      }
      std::vector<Bf16Bits> narrowed(count);
      for (std::uint32_t i = 0; i < count; ++i)
        narrowed[i] = fp32_to_bf16(acc[i], pol);
      round.bytes = encode_allreduce(static_cast<std::uint32_t>(a), narrowed);
      g.rounds[static_cast<std::size_t>(a)].push_back(std::move(round));
    }
    if (pkts.size() % 4 != 0)
      g.warnings.push_back("aggregator " + std::to_string(a) + ": " +
                           std::to_string(pkts.size() % 4) +
                           " trailing packets never complete a round");
  }
  return g;
}

// --- check ---------------------------------------------------------------------

struct CheckReport {
  bool pass = true;
  std::vector<std::string> problems;
  void fail(std::string msg) {
    pass = false;
    problems.push_back(std::move(msg));
  }
};

namespace simdetail {

inline std::string first_diff(const std::vector<std::uint8_t>& a,
                              const std::vector<std::uint8_t>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] != b[i]) {
      char buf[96];
      std::snprintf(buf, sizeof buf,
                    "first differing byte at offset %zu: expected %02X got %02X",
                    i, a[i], b[i]);
      return buf;
    }
  char buf[96];
  std::snprintf(buf, sizeof buf, "length mismatch: expected %zu got %zu",
                a.size(), b.size());
  return buf;
}

// last few trace records touching a packet, for mismatch diagnostics
inline std::string trace_window(const std::vector<TraceEvent>& events,
                                std::uint64_t pkt_id, std::size_t limit = 6) {
  std::string out;
  std::size_t seen = 0;
  for (auto it = events.rbegin(); it != events.rend() && seen < limit; ++it) {
    if (it->pkt_id != pkt_id) continue;
    ++seen;
    char buf[96];
    std::snprintf(buf, sizeof buf, "\n    cycle %" PRIu64 " %s port %d beat %" PRId64,
                  it->cycle, std::string(to_string(it->kind)).c_str(), it->port,
                  it->beat_index);
    out += buf;
  }
  return out.empty() ? out : "\n  recent trace events:" + out;
}

}  // namespace simdetail

// Byte-level comparison of a run against the golden expectation. Regular
// packets are matched by id; allreduce results by (aggregator, round) with
// exactly four byte-identical copies required, one per egress.
inline CheckReport check(const RunResult& run, const GoldenExpectation& golden,
                         const std::vector<TraceEvent>* trace_events = nullptr) {
  using namespace simdetail;
  CheckReport rep;
  if (!run.drained) rep.fail("run did not drain: " + run.drain_error);

  const auto window = [&](std::uint64_t id) {
    return trace_events ? trace_window(*trace_events, id) : std::string{};
  };

  std::map<std::uint64_t, int> regular_seen;
  std::map<std::uint64_t, std::vector<const DeliveredPacket*>> results_seen;
  for (const DeliveredPacket& d : run.delivered) {
    if (d.pkt_id & kResultIdBase) {
      results_seen[d.pkt_id].push_back(&d);
      continue;
    }
    ++regular_seen[d.pkt_id];
    const auto it = golden.regular.find(d.pkt_id);
    if (it == golden.regular.end()) {
      rep.fail("packet " + std::to_string(d.pkt_id) +
               " egressed but was never expected" + window(d.pkt_id));
      continue;
    }
    if (it->second.egress != d.egress)
      rep.fail("packet " + std::to_string(d.pkt_id) + " egressed on port " +
               std::to_string(d.egress) + ", expected " +
               std::to_string(it->second.egress) + window(d.pkt_id));
    if (*it->second.bytes != d.bytes)
      rep.fail("packet " + std::to_string(d.pkt_id) + " on egress " +
               std::to_string(d.egress) + " corrupted; " +
               first_diff(*it->second.bytes, d.bytes) + window(d.pkt_id));
  }
  for (const auto& [id, exp] : golden.regular) {
    const auto it = regular_seen.find(id);
    if (it == regular_seen.end())
      rep.fail("packet " + std::to_string(id) + " (egress " +
               std::to_string(exp.egress) + ") was never delivered" + window(id));
    else if (it->second != 1)
      rep.fail("packet " + std::to_string(id) + " delivered " +
               std::to_string(it->second) + " times");
  }

  for (int a = 0; a < 4; ++a) {
    const auto& rounds = golden.rounds[static_cast<std::size_t>(a)];
    for (const GoldenRound& r : rounds) {
      const std::uint64_t id = make_result_id(a, r.ordinal);
      const auto it = results_seen.find(id);
      if (it == results_seen.end()) {
        rep.fail("aggregator " + std::to_string(a) + " round " +
                 std::to_string(r.ordinal) + " produced no broadcast");
        continue;
      }
      const auto& copies = it->second;
      std::uint32_t egress_mask = 0;
      for (const DeliveredPacket* d : copies)
        egress_mask |= 1u << d->egress;
      if (copies.size() != 4 || egress_mask != 0xF)
        rep.fail("aggregator " + std::to_string(a) + " round " +
                 std::to_string(r.ordinal) + ": expected 4 copies (one per "
                 "egress), saw " + std::to_string(copies.size()));
      for (std::size_t c = 1; c < copies.size(); ++c)
        if (copies[c]->bytes != copies[0]->bytes)
          rep.fail("aggregator " + std::to_string(a) + " round " +
                   std::to_string(r.ordinal) +
                   ": broadcast copies are not byte-identical; " +
                   first_diff(copies[0]->bytes, copies[c]->bytes));
      if (r.comparable && !copies.empty() && copies[0]->bytes != r.bytes)
        rep.fail("aggregator " + std::to_string(a) + " round " +
                 std::to_string(r.ordinal) + ": result mismatch; " +
                 first_diff(r.bytes, copies[0]->bytes) + window(id));
      results_seen.erase(it);
    }
  }
  for (const auto& [id, copies] : results_seen)
    rep.fail("unexpected broadcast with result id " + std::to_string(id));

  if (run.stats.delivered_regular != run.stats.injected_regular)
    rep.fail("delivered regular packets (" +
             std::to_string(run.stats.delivered_regular) +
             ") != injected (" + std::to_string(run.stats.injected_regular) + ")");
  return rep;
}

// --- machine-readable outputs ---------------------------------------------------

inline std::string format_trace_line(const TraceEvent& ev) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%" PRIu64 " %s %d %" PRIu64 " %" PRId64,
                ev.cycle, std::string(to_string(ev.kind)).c_str(), ev.port,
                ev.pkt_id, ev.beat_index);
  return buf;
}

inline nlohmann::ordered_json stats_to_json(const Stats& s) {
  nlohmann::ordered_json j;
  j["prng"] = s.prng;
  j["cycles_run"] = s.cycles_run;
  j["drain_cycles"] = s.drain_cycles;
  j["injected_packets"] = s.injected_packets;
  j["injected_regular"] = s.injected_regular;
  j["injected_allreduce"] = s.injected_allreduce;
  j["malformed_packets"] = s.malformed_packets;
  j["delivered_regular"] = s.delivered_regular;
  j["rounds_completed"] = s.rounds_completed;
  j["broadcasts"] = s.broadcasts;
  j["gate_hold_cycles"] = s.gate_hold_cycles;
  for (int p = 0; p < 4; ++p) {
    const auto& in = s.ingress[static_cast<std::size_t>(p)];
    nlohmann::ordered_json ij;
    ij["offered_beats"] = in.offered_beats;
    ij["accepted_beats"] = in.accepted_beats;
    ij["bubble_cycles"] = in.bubble_cycles;
    ij["voq_full_stalls"] = in.voq_full_stalls;
    char frac[32];
    std::snprintf(frac, sizeof frac, "%.6f", s.acceptance_fraction(p));
    ij["acceptance_fraction"] = frac;
    j["ingress"].push_back(ij);
  }
  for (int p = 0; p < 4; ++p) {
    const auto& eg = s.egress[static_cast<std::size_t>(p)];
    nlohmann::ordered_json ej;
    ej["delivered_beats"] = eg.delivered_beats;
    ej["delivered_packets"] = eg.delivered_packets;
    ej["regular_packets"] = eg.regular_packets;
    ej["result_copies"] = eg.result_copies;
    ej["gate_start_stalls"] = eg.gate_start_stalls;
    j["egress"].push_back(ej);
  }
  for (int p = 0; p < 4; ++p) {
    const auto& ag = s.agg[static_cast<std::size_t>(p)];
    nlohmann::ordered_json aj;
    aj["packets_absorbed"] = ag.packets_absorbed;
    aj["beats_absorbed"] = ag.beats_absorbed;
    aj["rounds_completed"] = ag.rounds_completed;
    aj["broadcasts_sent"] = ag.broadcasts_sent;
    aj["hazard_stalls"] = ag.hazard_stalls;
    aj["gate_stalls"] = ag.gate_stalls;
    j["aggregators"].push_back(aj);
  }
  nlohmann::ordered_json lj;
  lj["count"] = s.regular_latency.count;
  lj["sum"] = s.regular_latency.sum;
  lj["min"] = s.regular_latency.min;
  lj["max"] = s.regular_latency.max;
  j["regular_latency"] = lj;
  return j;
}

}  // namespace redsim
