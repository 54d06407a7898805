#include <catch2/catch_amalgamated.hpp>

#include "redsim/aggregator.hpp"

using namespace redsim;

namespace {

// Drives one input packet at one value-beat per cycle (headers are modeled
// as zero-width here; the fabric adds them back on the wire). Returns the
// number of stalled cycles.
std::uint64_t drive_packet(Aggregator& agg, std::span<const Bf16Bits> vals,
                           std::uint64_t& cycle) {
  agg.tick(cycle);
  agg.begin_packet(static_cast<std::uint32_t>(vals.size()), cycle);
  std::uint64_t stalls = 0;
  std::size_t done = 0;
  while (done < vals.size()) {
    agg.tick(cycle);
    const std::size_t n = std::min<std::size_t>(4, vals.size() - done);
    if (agg.probe_values(n, cycle) == StallCause::none) {
      agg.absorb_values(vals.subspan(done, n), done + n == vals.size(), cycle);
      done += n;
    } else {
      ++stalls;
    }
    ++cycle;
  }
  return stalls;
}

// Emits the pending result at one beat (4 values) per cycle with no
// backpressure and returns the narrowed values.
std::vector<Bf16Bits> drain_result(Aggregator& agg, std::uint64_t& cycle) {
  REQUIRE(agg.ready());
  while (!agg.emission_ready(cycle)) {
    agg.tick(cycle);
    ++cycle;
  }
  agg.tick(cycle);
  const auto& round = agg.begin_emission();
  std::vector<Bf16Bits> out;
  for (std::uint32_t i = 0; i < round.elem_count; i += 4) {
    agg.tick(cycle);
    const std::uint32_t n = std::min<std::uint32_t>(4, round.elem_count - i);
    for (std::uint32_t j = 0; j < n; ++j) out.push_back(agg.emit_value(i + j));
    agg.note_emitted(n);
    ++cycle;
  }
  agg.end_emission();
  return out;
}

std::vector<Bf16Bits> consts(std::initializer_list<std::uint16_t> bits) {
  std::vector<Bf16Bits> v;
  for (auto b : bits) v.push_back({b});
  return v;
}

}  // namespace

TEST_CASE("rr_select walks cyclically after the last grant") {
  CHECK(rr_select(0b1010, 1) == 3);
  CHECK(rr_select(0b1111, 3) == 0);
  CHECK(rr_select(0b0000, 2) == std::nullopt);
  CHECK(rr_select(0b1000, 3) == 3);  // sole requester re-selected
  CHECK(rr_select(0b0101, 0) == 2);
  CHECK(rr_select(0b0101, 2) == 0);
}

TEST_CASE("four packets make a round; counter and buffers follow") {
  Aggregator agg(1, 8, 1);
  std::uint64_t cycle = 0;
  const auto pkt = consts({0x3F80, 0x4000, 0x4040, 0x4080});  // 1,2,3,4
  CHECK(agg.pkt_counter() == 0);
  CHECK(agg.active_buffer() == 0);
  for (int p = 0; p < 4; ++p) {
    drive_packet(agg, pkt, cycle);
    if (p < 3) {
      CHECK(agg.pkt_counter() == p + 1);
      CHECK_FALSE(agg.ready());
    }
  }
  // round complete: ready, counter cleared, buffer swapped
  CHECK(agg.ready());
  CHECK(agg.pkt_counter() == 0);
  CHECK(agg.active_buffer() == 1);
  CHECK(agg.rounds_completed() == 1);

  const auto result = drain_result(agg, cycle);
  // sums 4, 8, 12, 16 are exactly representable
  const auto expect = consts({0x4080, 0x4100, 0x4140, 0x4180});
  REQUIRE(result.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(result[i].bits == expect[i].bits);
  CHECK_FALSE(agg.ready());
}

TEST_CASE("back-to-back short packets stall latency-1 cycles") {
  const std::uint32_t kLatency = 8;
  Aggregator agg(0, kLatency, 7);
  std::uint64_t cycle = 0;
  const auto pkt = consts({0x3F80, 0x3F80, 0x3F80, 0x3F80});
  CHECK(drive_packet(agg, pkt, cycle) == 0);
  // second packet's first (and only) value beat collides with the writes to
  // elements 0..3 issued one cycle earlier
  CHECK(drive_packet(agg, pkt, cycle) == kLatency - 1);
}

TEST_CASE("stall scales with the configured latency") {
  for (std::uint32_t lat : {1u, 2u, 5u, 16u}) {
    Aggregator agg(0, lat, 7);
    std::uint64_t cycle = 0;
    const auto pkt = consts({0x3F80, 0x3F80, 0x3F80, 0x3F80});
    drive_packet(agg, pkt, cycle);
    CHECK(drive_packet(agg, pkt, cycle) == lat - 1);
  }
}

TEST_CASE("512-element packets never stall back to back") {
  Aggregator agg(2, 8, 3);
  std::uint64_t cycle = 0;
  std::vector<Bf16Bits> pkt(512);
  Prng rng(55);
  std::uint64_t stalls = 0;
  for (int p = 0; p < 8; ++p) {  // two full rounds
    for (auto& v : pkt) v.bits = static_cast<std::uint16_t>(rng.below(0x7F80));
    stalls += drive_packet(agg, pkt, cycle);
    if (agg.ready() && agg.emission_ready(cycle)) {
      // drain concurrently is exercised at the fabric level; here just pop
      std::uint64_t c2 = cycle;
      drain_result(agg, c2);
    }
  }
  CHECK(stalls == 0);
}

TEST_CASE("first packet writes through over garbage") {
  // different garbage fills, same traffic, identical results
  std::vector<Bf16Bits> results[2];
  for (int fill = 0; fill < 2; ++fill) {
    Aggregator agg(0, 8, fill == 0 ? 0xDEADBEEF : 0x1234);
    std::uint64_t cycle = 0;
    const auto p = consts({0x40A0});  // 5.0, one element
    for (int k = 0; k < 4; ++k) drive_packet(agg, p, cycle);
    results[fill] = drain_result(agg, cycle);
  }
  REQUIRE(results[0].size() == 1);
  CHECK(results[0][0].bits == 0x41A0);  // 20.0
  CHECK(results[0][0].bits == results[1][0].bits);
}

TEST_CASE("accumulation can start in the other buffer during emission") {
  Aggregator agg(0, 8, 9);
  std::uint64_t cycle = 0;
  const auto pkt = consts({0x3F80, 0x3F80});
  for (int k = 0; k < 4; ++k) drive_packet(agg, pkt, cycle);
  CHECK(agg.ready());
  while (!agg.emission_ready(cycle)) {
    agg.tick(cycle);
    ++cycle;
  }
  agg.begin_emission();
  // mid-emission: absorb the next round's first packet into the other buffer
  agg.tick(cycle);
  agg.begin_packet(2, cycle);
  REQUIRE(agg.probe_values(2, cycle) == StallCause::none);
  agg.absorb_values(pkt, true, cycle);
  CHECK(agg.pkt_counter() == 1);
  // finish the emission
  agg.emit_value(0);
  agg.note_emitted(2);
  agg.end_emission();
  CHECK_FALSE(agg.ready());
}

TEST_CASE("writes into a queued buffer are gated until emission passes") {
  Aggregator agg(0, 4, 11);
  std::uint64_t cycle = 0;
  const auto pkt = consts({0x3F80, 0x3F80});
  // round 1 -> buffer 0 pending
  for (int k = 0; k < 4; ++k) drive_packet(agg, pkt, cycle);
  // round 2 -> buffer 1 pending (two pending rounds now)
  for (int k = 0; k < 4; ++k) drive_packet(agg, pkt, cycle);
  REQUIRE(agg.ready());
  // round 3 targets buffer 0, which is still queued: value beats gate-stall
  agg.tick(cycle);
  agg.begin_packet(2, cycle);
  CHECK(agg.probe_values(2, cycle) == StallCause::gate);
  // once buffer 0 starts emitting and its cursor moves past the elements,
  // the write-through may proceed under the overlap guard
  while (!agg.emission_ready(cycle)) {
    agg.tick(cycle);
    ++cycle;
  }
  agg.begin_emission();
  CHECK(agg.probe_values(2, cycle) == StallCause::gate);  // cursor still at 0
  agg.emit_value(0);
  agg.emit_value(1);
  agg.note_emitted(2);
  agg.tick(cycle);
  CHECK(agg.probe_values(2, cycle) == StallCause::none);
  agg.absorb_values(pkt, true, cycle);
  agg.end_emission();
}

TEST_CASE("results are identical regardless of initial fill across rounds") {
  // several rounds with random values; two different garbage seeds
  std::vector<std::vector<Bf16Bits>> out[2];
  for (int fill = 0; fill < 2; ++fill) {
    Aggregator agg(3, 8, fill == 0 ? 42 : 0xFFFFFFFF);
    std::uint64_t cycle = 0;
    Prng rng(77);  // same traffic either way
    for (int round = 0; round < 6; ++round) {
      const std::uint32_t count = static_cast<std::uint32_t>(rng.range(1, 64));
      for (int p = 0; p < 4; ++p) {
        std::vector<Bf16Bits> vals(count);
        for (auto& v : vals) v.bits = rng.next_u16();
        drive_packet(agg, vals, cycle);
      }
      out[fill].push_back(drain_result(agg, cycle));
    }
  }
  REQUIRE(out[0].size() == out[1].size());
  for (std::size_t r = 0; r < out[0].size(); ++r) {
    REQUIRE(out[0][r].size() == out[1][r].size());
    for (std::size_t i = 0; i < out[0][r].size(); ++i)
      CHECK(out[0][r][i].bits == out[1][r][i].bits);
  }
}

TEST_CASE("shorter follow-up packets accumulate only the round count") {
  Aggregator agg(0, 8, 5);
  std::uint64_t cycle = 0;
  // round count latches from the first packet (2 elements)
  drive_packet(agg, consts({0x3F80, 0x3F80}), cycle);
  // a 4-element packet accumulates only elements 0..1
  drive_packet(agg, consts({0x3F80, 0x3F80, 0x3F80, 0x3F80}), cycle);
  drive_packet(agg, consts({0x3F80, 0x3F80}), cycle);
  drive_packet(agg, consts({0x3F80, 0x3F80}), cycle);
  const auto result = drain_result(agg, cycle);
  REQUIRE(result.size() == 2);
  CHECK(result[0].bits == 0x4080);  // 4.0
  CHECK(result[1].bits == 0x4080);
}
