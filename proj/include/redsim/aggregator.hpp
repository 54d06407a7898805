#pragma once

#include <array>
#include <cassert>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>

#include "redsim/check.hpp"
#include "redsim/prng.hpp"
#include "redsim/softfloat.hpp"
#include "redsim/wire.hpp"

// Per-output-port allreduce reduction unit. Two 512-entry FP32 buffers share
// one set of four pipelined adder lanes; a per-element scoreboard stalls
// read-after-write hazards; rounds are 4 input packets; the first packet of
// a round writes through (widened, no add) so reset garbage never reaches a
// result. Input absorption and result emission may overlap on the same
// buffer only while emission stays strictly ahead of the writer.

namespace redsim {

enum class StallCause : std::uint8_t { none, hazard, gate };

// Cyclic round-robin pick: first ready index strictly after last_grant.
inline std::optional<int> rr_select(std::uint32_t ready_mask, int last_grant) {
  for (int step = 1; step <= 4; ++step) {
    const int idx = (last_grant + step) & 3;
    if (ready_mask & (1u << idx)) return idx;
  }
  return std::nullopt;
}

class Aggregator {
 public:
  static constexpr std::size_t kElems = 512;
  static constexpr int kLanes = 4;
  static constexpr int kRoundPackets = 4;

  Aggregator(int index, std::uint32_t adder_latency,
             std::uint64_t buffer_init_seed, FpPolicy policy = {})
      : index_(index), latency_(adder_latency ? adder_latency : 1),
        policy_(policy) {
    // contents at reset are undefined; fill with seeded garbage so tests can
    // prove results never depend on it
    Prng fill(derive_seed(buffer_init_seed, 0xA66u, static_cast<std::uint64_t>(index)));
    for (auto& buf : buffers_)
      for (auto& v : buf) v.bits = fill.next_u32();
    for (auto& rt : retire_)
      rt.fill(0);
  }

  int index() const { return index_; }
  std::uint32_t adder_latency() const { return latency_; }
  int pkt_counter() const { return pkt_counter_; }
  int active_buffer() const { return active_; }
  std::uint64_t rounds_completed() const { return ordinal_; }
  std::size_t inflight_writes() const { return inflight_.size(); }

  // Retire pipeline writes due at `cycle`; call once at the start of every
  // cycle before any absorb/emit decision.
  void tick(std::uint64_t cycle) {
    while (!inflight_.empty() && inflight_.front().retire_cycle <= cycle) {
      const auto& w = inflight_.front();
      buffers_[w.buffer][w.elem] = w.value;
      inflight_.pop_front();
    }
  }

  // Header step of an input packet (no writes, never stalls). Latches the
  // round state: packet counter 0 opens a new round in the active buffer and
  // its element count becomes the round's count; later packets accumulate
  // min(their count, round count) elements.
  void begin_packet(std::uint32_t elem_count, std::uint64_t cycle) {
    (void)cycle;
    assert(elem_count >= 1 && elem_count <= kElems);
    assert(!in_packet_);
    in_packet_ = true;
    write_through_ = pkt_counter_ == 0;
    if (write_through_) round_count_[active_] = elem_count;
    cursor_ = 0;
    effective_count_ = std::min(elem_count, round_count_[active_]);
  }

  // Would a value beat carrying `nvals` elements at the stream cursor be
  // accepted this cycle?
  StallCause probe_values(std::size_t nvals, std::uint64_t cycle) const {
    assert(in_packet_);
    assert(nvals >= 1 && nvals <= static_cast<std::size_t>(kLanes));
    const BufState& st = buf_state_[active_];
    for (std::size_t j = 0; j < nvals; ++j) {
      const std::uint32_t elem = cursor_ + static_cast<std::uint32_t>(j);
      if (elem >= effective_count_) continue;  // lane idle, no write
      if (st.mode == BufMode::queued || st.requeued) return StallCause::gate;
      if (st.mode == BufMode::emitting && elem >= st.emitted_values &&
          elem < st.emit_count)
        return StallCause::gate;  // writer would overtake the emit cursor
      if (retire_[active_][elem] > cycle) return StallCause::hazard;
    }
    return StallCause::none;
  }

  // Absorb one value beat (1..4 values). Lane j issues either the widened
  // value (write-through) or an accumulate of the committed buffer element;
  // the write lands `latency` cycles later.
  void absorb_values(std::span<const Bf16Bits> vals, bool last_beat,
                     std::uint64_t cycle) {
    // scoreboard soundness: nothing may read or overwrite an element with a
    // write in flight, and the emit cursor must stay ahead of the writer
    hard_assert(probe_values(vals.size(), cycle) == StallCause::none,
                "aggregator absorbed a beat it should have stalled");
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const std::uint32_t elem = cursor_ + static_cast<std::uint32_t>(j);
      if (elem >= effective_count_) continue;
      const Fp32Bits widened = bf16_to_fp32(vals[j], policy_);
      const Fp32Bits out = write_through_
                               ? widened
                               : fp32_add(buffers_[active_][elem], widened, policy_);
      const std::uint64_t retire = cycle + latency_;
      inflight_.push_back({active_, elem, out, retire});
      retire_[active_][elem] = retire;
      if (retire > watermark_[active_]) watermark_[active_] = retire;
    }
    cursor_ += static_cast<std::uint32_t>(vals.size());
    if (last_beat) complete_packet();
  }

  // --- emission side ---------------------------------------------------

  struct PendingRound {
    int buffer = 0;
    std::uint32_t elem_count = 0;
    std::uint64_t ordinal = 0;        // 1-based round number
    std::uint64_t ready_watermark = 0;  // all writes retired at this cycle
  };

  bool ready() const { return !pending_.empty(); }
  const PendingRound* pending_head() const {
    return pending_.empty() ? nullptr : &pending_.front();
  }
  bool emission_ready(std::uint64_t cycle) const {
    return !pending_.empty() && pending_.front().ready_watermark <= cycle;
  }

  const PendingRound& begin_emission() {
    assert(!pending_.empty());
    const PendingRound& head = pending_.front();
    BufState& st = buf_state_[head.buffer];
    assert(st.mode == BufMode::queued);
    st.mode = BufMode::emitting;
    st.emitted_values = 0;
    st.emit_count = head.elem_count;
    return head;
  }

  // Live read of one result element from the emitting buffer, narrowed.
  Bf16Bits emit_value(std::uint32_t elem) const {
    const PendingRound& head = pending_.front();
    assert(buf_state_[head.buffer].mode == BufMode::emitting);
    assert(elem < head.elem_count);
    return fp32_to_bf16(buffers_[head.buffer][elem], policy_);
  }

  // Values whose beats have transferred; the overlap guard keys off this.
  void note_emitted(std::uint32_t values) {
    buf_state_[pending_.front().buffer].emitted_values += values;
  }

  void end_emission() {
    BufState& st = buf_state_[pending_.front().buffer];
    assert(st.mode == BufMode::emitting);
    // a short follow-on round may already have landed behind the emit
    // cursor; it stays queued for its own broadcast
    const bool requeued = st.requeued;
    st = BufState{};
    if (requeued) st.mode = BufMode::queued;
    pending_.pop_front();
  }

 private:
  enum class BufMode : std::uint8_t { free, queued, emitting };
  struct BufState {
    BufMode mode = BufMode::free;
    bool requeued = false;
    std::uint32_t emitted_values = 0;
    std::uint32_t emit_count = 0;
  };
  struct InflightWrite {
    int buffer;
    std::uint32_t elem;
    Fp32Bits value;
    std::uint64_t retire_cycle;
  };

  bool emission_ready_begin() const { return !pending_.empty(); }

  void complete_packet() {
    in_packet_ = false;
    ++pkt_counter_;
    assert(pkt_counter_ <= kRoundPackets);
    if (pkt_counter_ == kRoundPackets) {
      ++ordinal_;
      BufState& st = buf_state_[active_];
      assert(st.mode != BufMode::queued && !st.requeued);
      if (st.mode == BufMode::free)
        st.mode = BufMode::queued;
      else
        st.requeued = true;  // completed behind a live emission
      pending_.push_back({active_, round_count_[active_], ordinal_,
                          watermark_[active_]});
      pkt_counter_ = 0;
      active_ ^= 1;  // next round lands in the other buffer
    }
  }

  int index_;
  std::uint32_t latency_;
  FpPolicy policy_;
  std::array<std::array<Fp32Bits, kElems>, 2> buffers_;
  std::array<std::array<std::uint64_t, kElems>, 2> retire_;
  std::array<std::uint64_t, 2> watermark_{0, 0};
  std::array<std::uint32_t, 2> round_count_{0, 0};
  std::array<BufState, 2> buf_state_;
  std::deque<InflightWrite> inflight_;
  std::deque<PendingRound> pending_;
  int active_ = 0;
  int pkt_counter_ = 0;  // 3-bit semantics: 0..4
  bool in_packet_ = false;
  bool write_through_ = false;
  std::uint32_t cursor_ = 0;
  std::uint32_t effective_count_ = 0;
  std::uint64_t ordinal_ = 0;
};

}  // namespace redsim
