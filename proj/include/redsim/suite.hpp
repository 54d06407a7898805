#pragma once

#include <string>
#include <vector>

#include "redsim/scenario.hpp"

// The bundled regression set: seeded scenarios mixing regular and allreduce
// traffic across backpressure duty cycles (100%, 75%, 50%, random) and
// bubble-insertion patterns. Every scenario is golden-comparable by
// construction: aggregators either take all traffic from one ingress (FIFO
// fixes arrival order) or receive byte-identical packets (order and round
// grouping cannot matter).

namespace redsim {
namespace suitedetail {

inline InjectionSpec reg(std::uint64_t cycle, int ingress, int dest,
                         std::size_t bytes, std::uint32_t repeat = 1) {
  InjectionSpec s;
  s.cycle = cycle;
  s.ingress = ingress;
  s.kind = InjectionSpec::Kind::regular;
  s.dest = dest;
  s.random_bytes = bytes;
  s.repeat = repeat;
  return s;
}

inline InjectionSpec ar_random(std::uint64_t cycle, int ingress,
                               std::uint32_t aggr, std::size_t elems,
                               std::uint32_t repeat = 1) {
  InjectionSpec s;
  s.cycle = cycle;
  s.ingress = ingress;
  s.kind = InjectionSpec::Kind::allreduce;
  s.aggr = aggr;
  s.random_values = elems;
  s.repeat = repeat;
  return s;
}

inline InjectionSpec ar_fixed(std::uint64_t cycle, int ingress,
                              std::uint32_t aggr, std::vector<Bf16Bits> values,
                              std::uint32_t repeat = 1) {
  InjectionSpec s;
  s.cycle = cycle;
  s.ingress = ingress;
  s.kind = InjectionSpec::Kind::allreduce;
  s.aggr = aggr;
  s.values = std::move(values);
  s.repeat = repeat;
  return s;
}

inline InjectionSpec ar_ints(std::uint64_t cycle, int ingress,
                             std::uint32_t aggr, std::size_t elems,
                             std::uint32_t repeat = 1) {
  InjectionSpec s;
  s.cycle = cycle;
  s.ingress = ingress;
  s.kind = InjectionSpec::Kind::allreduce;
  s.aggr = aggr;
  s.random_int_values = elems;
  s.repeat = repeat;
  return s;
}

inline void all_random_sinks(Scenario& sc, std::uint32_t milli) {
  for (auto& s : sc.sinks) s = {SinkSpec::Mode::random, 1, 1, milli};
}

inline void all_duty_sinks(Scenario& sc, std::uint32_t num, std::uint32_t den) {
  for (auto& s : sc.sinks) s = {SinkSpec::Mode::duty, num, den, 0};
}

// per-aggregator byte-identical value vectors for contention scenarios
inline std::vector<Bf16Bits> agg_constant_values(std::uint64_t seed,
                                                 std::uint32_t aggr,
                                                 std::size_t n) {
  Prng rng(derive_seed(seed, 0xC0457, aggr));
  std::vector<Bf16Bits> v(n);
  for (auto& x : v) x.bits = rng.next_u16();
  return v;
}

// a plausible-looking allreduce payload whose bounds the decoder must reject
inline std::vector<std::uint8_t> malformed_payload(std::uint64_t seed,
                                                   std::uint64_t salt) {
  Prng rng(derive_seed(seed, 0xBAD, salt));
  std::vector<Bf16Bits> v(static_cast<std::size_t>(rng.range(1, 8)));
  for (auto& x : v) x.bits = rng.next_u16();
  auto bytes = encode_allreduce(static_cast<std::uint32_t>(rng.below(4)), v);
  switch (rng.below(3)) {
    case 0:  // element count out of bounds
      bytes[4] = 0x58;
      bytes[5] = 0x02;
      break;
    case 1:  // aggregator number out of bounds
      bytes[8] = static_cast<std::uint8_t>(4 + rng.below(200));
      break;
    default:  // truncated payload
      bytes.pop_back();
      break;
  }
  return bytes;
}

}  // namespace suitedetail

// Line-rate demonstration: four ingress ports inject back-to-back
// 512-element allreduce packets, ten rounds per aggregator, always-ready
// sinks. Sustains one beat per cycle per port with zero aggregator stalls.
inline Scenario build_line_rate_scenario(std::uint64_t seed = 42,
                                         std::uint32_t rounds = 10,
                                         bool staggered = false) {
  using namespace suitedetail;
  Scenario sc;
  sc.name = staggered ? "line_rate_staggered" : "line_rate";
  sc.seed = seed;
  for (int p = 0; p < 4; ++p) {
    const std::uint64_t start =
        staggered ? static_cast<std::uint64_t>(p) * kMaxElemPacketBeats : 0;
    sc.injections.push_back(ar_random(start, p, static_cast<std::uint32_t>(p),
                                      512, 4 * rounds));
  }
  return sc;
}

inline std::vector<Scenario> build_regression_suite() {
  using namespace suitedetail;
  std::vector<Scenario> out;

  out.push_back(build_line_rate_scenario(42, 10, false));
  out.push_back(build_line_rate_scenario(43, 10, true));

  // interleaved regular + allreduce across the backpressure duty ladder
  struct Duty {
    const char* name;
    SinkSpec spec;
  };
  const Duty duties[] = {
      {"interleave_always", {SinkSpec::Mode::always, 1, 1, 0}},
      {"interleave_duty75", {SinkSpec::Mode::duty, 3, 4, 0}},
      {"interleave_duty50", {SinkSpec::Mode::duty, 1, 2, 0}},
      {"interleave_random", {SinkSpec::Mode::random, 1, 1, 600}},
  };
  for (std::size_t d = 0; d < 4; ++d) {
    Scenario sc;
    sc.name = duties[d].name;
    sc.seed = 100 + d;
    for (auto& s : sc.sinks) s = duties[d].spec;
    for (int p = 0; p < 4; ++p) {
      sc.injections.push_back(ar_random(0, p, static_cast<std::uint32_t>(p), 8, 40));
      sc.injections.push_back(ar_random(1, p, static_cast<std::uint32_t>(p), 32, 80));
      sc.injections.push_back(ar_random(2, p, static_cast<std::uint32_t>(p), 20, 40));
      sc.injections.push_back(reg(0, p, (p + 1) % 4, 64, 120));
      sc.injections.push_back(reg(3, p, (p + 2) % 4, 24, 80));
      sc.injections.push_back(reg(5, p, p, 130, 40));
    }
    out.push_back(sc);  // 400 ar + 240 reg per port = 1600 + 960
  }

  {
    Scenario sc;
    sc.name = "bubbles_periodic";
    sc.seed = 110;
    for (int p = 0; p < 4; ++p) {
      sc.bubbles[static_cast<std::size_t>(p)] = {
          BubbleSpec::Mode::periodic, static_cast<std::uint32_t>(5 + p), 2, 0};
      sc.injections.push_back(ar_random(0, p, static_cast<std::uint32_t>(p), 16, 120));
      sc.injections.push_back(reg(2, p, 3 - p, 48, 180));
    }
    out.push_back(sc);  // 1200
  }
  {
    Scenario sc;
    sc.name = "bubbles_random_duty75";
    sc.seed = 111;
    all_duty_sinks(sc, 3, 4);
    for (int p = 0; p < 4; ++p) {
      sc.bubbles[static_cast<std::size_t>(p)] = {BubbleSpec::Mode::random, 0, 0, 250};
      sc.injections.push_back(ar_random(0, p, static_cast<std::uint32_t>(p), 24, 120));
      sc.injections.push_back(reg(1, p, (p + 3) % 4, 72, 180));
    }
    out.push_back(sc);  // 1200
  }

  {
    Scenario sc;  // hazard stress: tiny packets collide in the adder pipes
    sc.name = "ar_storm_short";
    sc.seed = 112;
    for (int p = 0; p < 4; ++p) {
      sc.injections.push_back(ar_random(0, p, static_cast<std::uint32_t>(p), 1, 280));
      sc.injections.push_back(ar_random(1, p, static_cast<std::uint32_t>(p), 4, 280));
      sc.injections.push_back(ar_random(2, p, static_cast<std::uint32_t>(p), 3, 240));
    }
    out.push_back(sc);  // 3200
  }

  {
    Scenario sc;  // element-count sweep, one count per round
    sc.name = "ar_elem_sweep";
    sc.seed = 113;
    const std::size_t counts[] = {1, 2, 3, 5, 7, 8, 15, 16, 17, 31, 33, 64,
                                  100, 127, 128, 129, 200, 255, 256, 300,
                                  400, 511, 512, 50};
    for (int p = 0; p < 4; ++p)
      for (std::size_t c = 0; c < 24; ++c)
        sc.injections.push_back(ar_random(c, p, static_cast<std::uint32_t>(p),
                                          counts[c], 4));
    out.push_back(sc);  // 384
  }

  {
    Scenario sc;
    sc.name = "regular_soup";
    sc.seed = 114;
    all_random_sinks(sc, 500);
    Prng rng(114);
    for (int p = 0; p < 4; ++p)
      for (int k = 0; k < 12; ++k)
        sc.injections.push_back(reg(static_cast<std::uint64_t>(k), p,
                                    static_cast<int>(rng.below(4)),
                                    rng.range(1, 256), 50));
    out.push_back(sc);  // 2400
  }

  for (std::uint32_t lat : {1u, 16u}) {
    Scenario sc;
    sc.name = "ar_latency" + std::to_string(lat);
    sc.seed = 115 + lat;
    sc.adder_latency = lat;
    for (int p = 0; p < 4; ++p) {
      sc.injections.push_back(ar_random(0, p, static_cast<std::uint32_t>(p), 2, 120));
      sc.injections.push_back(ar_random(1, p, static_cast<std::uint32_t>(p), 40, 80));
    }
    out.push_back(sc);  // 800 each
  }

  {
    Scenario sc;  // long regular packets force extended gate drains
    sc.name = "gate_stress";
    sc.seed = 118;
    for (int p = 0; p < 4; ++p) {
      sc.injections.push_back(reg(0, p, p, 1024, 30));
      sc.injections.push_back(ar_random(7, p, static_cast<std::uint32_t>(p), 16, 120));
    }
    out.push_back(sc);  // 600
  }

  {
    Scenario sc;  // malformed headers ride the bypass path, flagged
    sc.name = "malformed_mix";
    sc.seed = 119;
    for (int p = 0; p < 4; ++p) {
      sc.injections.push_back(reg(0, p, (p + 1) % 4, 40, 100));
      sc.injections.push_back(ar_random(1, p, static_cast<std::uint32_t>(p), 12, 60));
    }
    for (int k = 0; k < 48; ++k) {
      InjectionSpec s;
      s.cycle = static_cast<std::uint64_t>(3 + k);
      s.ingress = k % 4;
      s.kind = InjectionSpec::Kind::regular;
      s.dest = (k + 1) % 4;
      s.payload = malformed_payload(119, static_cast<std::uint64_t>(k));
      sc.injections.push_back(s);
    }
    out.push_back(sc);  // 688
  }

  {
    Scenario sc;  // trailing packets that never complete a round
    sc.name = "partial_rounds";
    sc.seed = 120;
    for (int p = 0; p < 4; ++p) {
      sc.injections.push_back(ar_random(0, p, static_cast<std::uint32_t>(p), 16,
                                        101 + static_cast<std::uint32_t>(p)));
      sc.injections.push_back(reg(1, p, 3 - p, 32, 20));
    }
    out.push_back(sc);  // 490
  }

  {
    Scenario sc;  // shallow queues under full crossbar contention
    sc.name = "voq_shallow";
    sc.seed = 121;
    sc.voq_depth = 32;
    all_duty_sinks(sc, 1, 2);
    for (int p = 0; p < 4; ++p) {
      sc.injections.push_back(reg(0, p, 0, 120, 60));
      sc.injections.push_back(reg(1, p, 1, 80, 60));
      sc.injections.push_back(ar_random(2, p, static_cast<std::uint32_t>(p), 8, 80));
    }
    out.push_back(sc);  // 800
  }

  {
    Scenario sc;  // cross-ingress contention with byte-identical packets
    sc.name = "xingress_identical";
    sc.seed = 122;
    for (std::uint32_t a = 0; a < 4; ++a) {
      const auto v = agg_constant_values(122, a, 24);
      for (int p = 0; p < 4; ++p)
        sc.injections.push_back(ar_fixed(0, p, a, v, 32));
    }
    out.push_back(sc);  // 512
  }

  {
    Scenario sc;  // broadcasts against half-rate sinks
    sc.name = "broadcast_backpressure";
    sc.seed = 123;
    all_duty_sinks(sc, 1, 2);
    for (int p = 0; p < 4; ++p)
      sc.injections.push_back(ar_random(0, p, static_cast<std::uint32_t>(p), 64, 160));
    out.push_back(sc);  // 640
  }

  {
    Scenario sc;  // Bernoulli arrivals, mixed with regular noise
    sc.name = "stochastic_soup";
    sc.seed = 124;
    all_random_sinks(sc, 800);
    for (int p = 0; p < 4; ++p) {
      InjectionSpec s = ar_random(0, p, static_cast<std::uint32_t>(p), 8);
      s.stochastic = true;
      s.from = 0;
      s.until = 2000;
      s.prob_milli = 120;
      sc.injections.push_back(s);
      InjectionSpec r = reg(0, p, (p + 2) % 4, 56);
      r.stochastic = true;
      r.from = 0;
      r.until = 2000;
      r.prob_milli = 80;
      sc.injections.push_back(r);
    }
    out.push_back(sc);  // ~1600 expected
  }

  for (int chaos = 0; chaos < 2; ++chaos) {
    Scenario sc;
    sc.name = "chaos_" + std::to_string(chaos + 1);
    sc.seed = 125 + static_cast<std::uint64_t>(chaos);
    all_random_sinks(sc, chaos == 0 ? 700 : 400);
    for (int p = 0; p < 4; ++p) {
      sc.bubbles[static_cast<std::size_t>(p)] = {BubbleSpec::Mode::random, 0, 0,
                                                 chaos == 0 ? 100u : 300u};
      sc.injections.push_back(ar_random(0, p, static_cast<std::uint32_t>(p), 48, 60));
      sc.injections.push_back(ar_random(2, p, static_cast<std::uint32_t>(p), 5, 60));
      sc.injections.push_back(reg(1, p, (p + 1) % 4, 100, 90));
      sc.injections.push_back(reg(4, p, (p + 3) % 4, 20, 90));
    }
    out.push_back(sc);  // 1200 each
  }

  return out;
}

}  // namespace redsim
