#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "redsim/fabric.hpp"
#include "redsim/prng.hpp"
#include "redsim/wire.hpp"

// Declarative traffic description plus its expansion into concrete packets.
// Scenario files are JSON; docs/scenario_format.md is the schema reference.
// All randomness (payload bytes, values, stochastic injection times) comes
// from generators seeded off the scenario seed, so expansion is a pure
// function of the file contents.

namespace redsim {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SinkSpec {
  enum class Mode : std::uint8_t { always, duty, random };
  Mode mode = Mode::always;
  std::uint32_t duty_num = 1, duty_den = 1;  // ready iff cycle % den < num
  std::uint32_t ready_milli = 1000;          // random mode: P(ready) per mille
};

struct BubbleSpec {
  enum class Mode : std::uint8_t { none, periodic, random };
  Mode mode = Mode::none;
  std::uint32_t period = 0, len = 0;  // idle iff cycle % period < len
  std::uint32_t idle_milli = 0;       // random mode: P(idle) per mille
};

struct InjectionSpec {
  // timing: a fixed earliest cycle, or a per-cycle Bernoulli window
  std::uint64_t cycle = 0;
  bool stochastic = false;
  std::uint64_t from = 0, until = 0;
  std::uint32_t prob_milli = 0;
  std::uint32_t repeat = 1;  // back-to-back copies (fixed timing only)

  int ingress = 0;
  enum class Kind : std::uint8_t { regular, allreduce } kind = Kind::regular;

  // regular packets: explicit bytes or seeded random ones
  int dest = 0;
  std::vector<std::uint8_t> payload;
  std::size_t random_bytes = 0;

  // allreduce packets: explicit values or seeded random ones; int values are
  // exactly representable and order-insensitive under summation. A count
  // range draws the element count per packet (rounds may then mix counts,
  // which excludes them from golden byte comparison).
  std::uint32_t aggr = 0;
  std::vector<Bf16Bits> values;
  std::size_t random_values = 0;
  std::size_t random_int_values = 0;
  std::uint32_t int_max = 64;
  std::size_t count_lo = 0, count_hi = 0;  // overrides the fixed counts
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 1;
  std::uint64_t duration = 0;  // nominal injection horizon; the run drains after
  // config overrides (0 keeps the fabric default)
  std::size_t voq_depth = 0;
  std::uint32_t adder_latency = 0;
  std::uint64_t buffer_init_seed = 0;
  std::uint64_t drain_window = 0;
  std::vector<InjectionSpec> injections;
  std::array<SinkSpec, 4> sinks{};
  std::array<BubbleSpec, 4> bubbles{};
};

struct ExpandedScenario {
  std::string name;
  std::uint64_t seed = 1;
  std::uint64_t duration = 0;
  std::uint64_t drain_window = 0;
  FabricConfig config;
  std::vector<PacketDesc> packets;  // ids are indices into this vector
  std::array<std::vector<std::size_t>, 4> schedule;  // per-ingress, FIFO order
  std::array<SinkSpec, 4> sinks{};
  std::array<BubbleSpec, 4> bubbles{};
  std::vector<std::string> warnings;
};

namespace scenariodetail {

inline Bf16Bits random_bf16(Prng& rng) {
  return {rng.next_u16()};
}

// Small signed integers: any element-wise sum of four of these is exact in
// FP32 and in BF16, so accumulation order cannot change the result.
inline Bf16Bits random_int_bf16(Prng& rng, std::uint32_t max_mag) {
  const std::int64_t mag = static_cast<std::int64_t>(rng.below(max_mag + 1));
  const bool neg = rng.chance_milli(500);
  if (mag == 0) return {0};
  // encode the small integer as bf16 bits
  int top = 63 - std::countl_zero(static_cast<std::uint64_t>(mag));
  std::uint16_t exp = static_cast<std::uint16_t>(127 + top);
  std::uint16_t frac;
  if (top <= 7)
    frac = static_cast<std::uint16_t>((mag << (7 - top)) & 0x7F);
  else
    frac = static_cast<std::uint16_t>((mag >> (top - 7)) & 0x7F);
  return {static_cast<std::uint16_t>((neg ? 0x8000 : 0) | (exp << 7) | frac)};
}

inline std::vector<std::uint8_t> random_payload(Prng& rng, std::size_t n) {
  std::vector<std::uint8_t> out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng.next_u32());
  // a random regular payload must not masquerade as an allreduce packet
  if (out.size() >= 4 && out[0] == 0x00 && out[1] == 0x3D && out[2] == 0x1F &&
      out[3] == 0xA1)
    out[0] ^= 0x01;
  return out;
}

}  // namespace scenariodetail

inline ExpandedScenario expand_scenario(const Scenario& sc) {
  using namespace scenariodetail;
  ExpandedScenario out;
  out.name = sc.name;
  out.seed = sc.seed;
  out.duration = sc.duration;
  if (sc.voq_depth) out.config.voq_depth = sc.voq_depth;
  if (sc.adder_latency) out.config.adder_latency = sc.adder_latency;
  out.config.buffer_init_seed = sc.buffer_init_seed;
  out.sinks = sc.sinks;
  out.bubbles = sc.bubbles;

  // validate sink/bubble parameters up front
  for (std::size_t p = 0; p < 4; ++p) {
    const SinkSpec& s = sc.sinks[p];
    if (s.mode == SinkSpec::Mode::duty &&
        (s.duty_num < 1 || s.duty_den < 1 || s.duty_num > s.duty_den))
      throw ScenarioError("sink " + std::to_string(p) + ": bad duty cycle");
    if (s.mode == SinkSpec::Mode::random &&
        (s.ready_milli < 1 || s.ready_milli > 1000))
      throw ScenarioError("sink " + std::to_string(p) +
                          ": ready_milli must be in [1, 1000]");
    const BubbleSpec& b = sc.bubbles[p];
    if (b.mode == BubbleSpec::Mode::periodic &&
        (b.period < 1 || b.len >= b.period))
      throw ScenarioError("bubble " + std::to_string(p) + ": bad period/len");
    if (b.mode == BubbleSpec::Mode::random && b.idle_milli > 999)
      throw ScenarioError("bubble " + std::to_string(p) +
                          ": idle_milli must be in [0, 999]");
  }

  struct Raw {
    std::uint64_t cycle;
    std::size_t order;
    PacketDesc desc;
  };
  std::vector<Raw> raws;
  std::size_t order = 0;

  for (std::size_t si = 0; si < sc.injections.size(); ++si) {
    const InjectionSpec& spec = sc.injections[si];
    const std::string where = "injection " + std::to_string(si);
    if (spec.ingress < 0 || spec.ingress > 3)
      throw ScenarioError(where + ": ingress out of range");

    std::vector<std::uint64_t> cycles;
    if (spec.stochastic) {
      if (spec.until <= spec.from || spec.prob_milli < 1 ||
          spec.prob_milli > 1000)
        throw ScenarioError(where + ": bad stochastic window");
      Prng timing(derive_seed(sc.seed, 0x71AE, si));
      for (std::uint64_t c = spec.from; c < spec.until; ++c)
        if (timing.chance_milli(spec.prob_milli)) cycles.push_back(c);
    } else {
      if (spec.repeat < 1) throw ScenarioError(where + ": repeat must be >= 1");
      cycles.assign(spec.repeat, spec.cycle);
    }

    for (std::size_t r = 0; r < cycles.size(); ++r) {
      Prng rng(derive_seed(sc.seed, si, r));
      PacketDesc d;
      d.ingress_port = spec.ingress;
      d.inject_cycle = cycles[r];
      if (spec.kind == InjectionSpec::Kind::regular) {
        if (spec.dest < 0 || spec.dest > 3)
          throw ScenarioError(where + ": dest out of range");
        d.dest_port = spec.dest;
        if (spec.random_bytes > 0) {
          if (spec.random_bytes > 4096)
            throw ScenarioError(where + ": payload larger than 4096 bytes");
          d.payload = random_payload(rng, spec.random_bytes);
        } else {
          if (spec.payload.empty())
            throw ScenarioError(where + ": empty payload");
          if (spec.payload.size() > 4096)
            throw ScenarioError(where + ": payload larger than 4096 bytes");
          d.payload = spec.payload;
        }
        const auto dec = decode_allreduce(d.payload);
        if (dec.cls == PayloadClass::allreduce) {
          // a hand-built valid allreduce payload must route consistently
          if (static_cast<int>(dec.header.aggr_no) != d.dest_port)
            throw ScenarioError(where +
                                ": payload parses as allreduce but dest_port "
                                "!= aggr_no");
          d.kind = PacketKind::allreduce;
        }
      } else {
        if (spec.aggr > 3) throw ScenarioError(where + ": aggr out of range");
        std::vector<Bf16Bits> vals = spec.values;
        std::size_t want_random = spec.random_values;
        std::size_t want_ints = spec.random_int_values;
        if (spec.count_hi > 0) {
          if (spec.count_lo < 1 || spec.count_hi > kMaxElemCount ||
              spec.count_lo > spec.count_hi)
            throw ScenarioError(where + ": count range must lie in [1, 512]");
          const std::size_t n = rng.range(spec.count_lo, spec.count_hi);
          if (want_ints > 0)
            want_ints = n;
          else
            want_random = n;
        }
        if (want_random > 0) {
          vals.resize(want_random);
          for (auto& v : vals) v = random_bf16(rng);
        } else if (want_ints > 0) {
          // |v| <= 64 keeps every 4-way sum at or below 256, which BF16
          // represents exactly, so results cannot depend on arrival order
          if (spec.int_max < 1 || spec.int_max > 64)
            throw ScenarioError(where + ": int_max must be in [1, 64]");
          vals.resize(want_ints);
          for (auto& v : vals) v = random_int_bf16(rng, spec.int_max);
        }
        if (vals.empty() || vals.size() > kMaxElemCount)
          throw ScenarioError(where + ": element count must be in [1, 512]");
        d.kind = PacketKind::allreduce;
        d.dest_port = static_cast<int>(spec.aggr);
        d.payload = encode_allreduce(spec.aggr, vals);
      }
      raws.push_back({cycles[r], order++, d});
    }
  }

  // global id order: cycle, then declaration order; per-ingress schedules
  // keep the same relative order (the injector serializes them FIFO)
  std::stable_sort(raws.begin(), raws.end(), [](const Raw& a, const Raw& b) {
    return a.cycle < b.cycle;
  });
  out.packets.reserve(raws.size());
  for (std::size_t id = 0; id < raws.size(); ++id) {
    Raw& r = raws[id];
    r.desc.id = id;
    out.packets.push_back(std::move(r.desc));
    out.schedule[static_cast<std::size_t>(out.packets.back().ingress_port)]
        .push_back(id);
  }

  // the nominal phase covers every scheduled injection; backlog beyond it
  // belongs to the drain phase
  for (const auto& p : out.packets)
    out.duration = std::max(out.duration, p.inject_cycle + 1);

  if (sc.drain_window) {
    out.drain_window = sc.drain_window;
  } else {
    // default: ten times the largest packet's beat count plus the configured
    // latencies, measured as a no-progress window so heavy backpressure can
    // still drain. The floor covers compounded random backpressure: a
    // lockstep broadcast beat needs all four sinks ready in one cycle, so
    // legitimate gaps grow long before anything is actually hung.
    std::size_t max_beats = 1;
    for (const auto& p : out.packets)
      max_beats = std::max(max_beats, beats_for(p.payload.size()));
    out.drain_window =
        std::max<std::uint64_t>(10 * max_beats + out.config.adder_latency + 64,
                                4096);
  }
  return out;
}

// --- JSON schema -------------------------------------------------------------

namespace scenariodetail {

inline std::vector<std::uint8_t> parse_hex(const std::string& s,
                                           const std::string& where) {
  if (s.size() % 2 != 0) throw ScenarioError(where + ": odd hex length");
  std::vector<std::uint8_t> out;
  out.reserve(s.size() / 2);
  for (std::size_t i = 0; i < s.size(); i += 2) {
    const auto nib = [&](char c) -> unsigned {
      if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
      if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
      if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
      throw ScenarioError(where + ": bad hex digit");
    };
    out.push_back(static_cast<std::uint8_t>((nib(s[i]) << 4) | nib(s[i + 1])));
  }
  return out;
}

}  // namespace scenariodetail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  using namespace scenariodetail;
  Scenario sc;
  sc.name = j.value("name", std::string{});
  sc.seed = j.value("seed", std::uint64_t{1});
  sc.duration = j.value("duration", std::uint64_t{0});
  if (j.contains("config")) {
    const auto& c = j.at("config");
    sc.voq_depth = c.value("voq_depth", std::size_t{0});
    sc.adder_latency = c.value("adder_latency", std::uint32_t{0});
    sc.buffer_init_seed = c.value("buffer_init_seed", std::uint64_t{0});
    sc.drain_window = c.value("drain_window", std::uint64_t{0});
  }
  for (const auto& ij : j.value("injections", nlohmann::json::array())) {
    InjectionSpec spec;
    if (ij.contains("stochastic")) {
      const auto& st = ij.at("stochastic");
      spec.stochastic = true;
      spec.from = st.value("from", std::uint64_t{0});
      spec.until = st.at("until").get<std::uint64_t>();
      spec.prob_milli = st.at("prob_milli").get<std::uint32_t>();
    } else {
      spec.cycle = ij.value("cycle", std::uint64_t{0});
      spec.repeat = ij.value("repeat", std::uint32_t{1});
    }
    spec.ingress = ij.at("ingress").get<int>();
    if (ij.contains("regular")) {
      const auto& rj = ij.at("regular");
      spec.kind = InjectionSpec::Kind::regular;
      spec.dest = rj.at("dest").get<int>();
      if (rj.contains("payload_hex"))
        spec.payload = parse_hex(rj.at("payload_hex").get<std::string>(),
                                 "regular payload");
      spec.random_bytes = rj.value("random_bytes", std::size_t{0});
    } else if (ij.contains("allreduce")) {
      const auto& aj = ij.at("allreduce");
      spec.kind = InjectionSpec::Kind::allreduce;
      spec.aggr = aj.at("aggr").get<std::uint32_t>();
      if (aj.contains("values_hex")) {
        for (const auto& v : aj.at("values_hex")) {
          const auto bytes = parse_hex(v.get<std::string>(), "value");
          if (bytes.size() != 2) throw ScenarioError("values_hex entries must be 4 hex digits");
          spec.values.push_back({static_cast<std::uint16_t>(
              (static_cast<std::uint16_t>(bytes[0]) << 8) | bytes[1])});
        }
      }
      spec.random_values = aj.value("random_values", std::size_t{0});
      spec.random_int_values = aj.value("random_int_values", std::size_t{0});
      spec.int_max = aj.value("int_max", std::uint32_t{64});
      if (aj.contains("random_count")) {
        spec.count_lo = aj.at("random_count").at(0).get<std::size_t>();
        spec.count_hi = aj.at("random_count").at(1).get<std::size_t>();
      }
    } else {
      throw ScenarioError("injection needs a 'regular' or 'allreduce' body");
    }
    sc.injections.push_back(std::move(spec));
  }
  const auto parse_port = [](const nlohmann::json& pj,
                             const char* what) -> std::size_t {
    const int p = pj.at("port").get<int>();
    if (p < 0 || p > 3)
      throw ScenarioError(std::string(what) + ": port out of range");
    return static_cast<std::size_t>(p);
  };
  for (const auto& sj : j.value("sinks", nlohmann::json::array())) {
    SinkSpec s;
    if (sj.contains("duty")) {
      s.mode = SinkSpec::Mode::duty;
      s.duty_num = sj.at("duty").at(0).get<std::uint32_t>();
      s.duty_den = sj.at("duty").at(1).get<std::uint32_t>();
    } else if (sj.contains("random_ready_milli")) {
      s.mode = SinkSpec::Mode::random;
      s.ready_milli = sj.at("random_ready_milli").get<std::uint32_t>();
    }
    sc.sinks[parse_port(sj, "sink")] = s;
  }
  for (const auto& bj : j.value("bubbles", nlohmann::json::array())) {
    BubbleSpec b;
    if (bj.contains("periodic")) {
      b.mode = BubbleSpec::Mode::periodic;
      b.period = bj.at("periodic").at(0).get<std::uint32_t>();
      b.len = bj.at("periodic").at(1).get<std::uint32_t>();
    } else if (bj.contains("random_idle_milli")) {
      b.mode = BubbleSpec::Mode::random;
      b.idle_milli = bj.at("random_idle_milli").get<std::uint32_t>();
    }
    sc.bubbles[parse_port(bj, "bubble")] = b;
  }
  return sc;
}

inline Scenario load_scenario_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ScenarioError("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError("scenario JSON parse error in " + path + ": " + e.what());
  }
  try {
    return scenario_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError("scenario schema error in " + path + ": " + e.what());
  }
}

}  // namespace redsim
