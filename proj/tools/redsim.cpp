// redsim: scenario runner and self-test front end for the 4x4 allreduce
// switch simulator.
//
// Exit codes (stable, scripted against):
//   0  success / all checks passed
//   1  verification failure (golden mismatch, self-test mismatch, drain hang)
//   2  command-line usage error
//   3  scenario or generator validation error
//   4  file I/O error

#include <cinttypes>
#include <cstdio>
#include <fstream>

#include <CLI11.hpp>

#include "redsim/oracle.hpp"
#include "redsim/sim.hpp"
#include "redsim/suite.hpp"
#include "redsim/vectors.hpp"

using namespace redsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitIo = 4;

struct RunOptions {
  std::string scenario_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::uint64_t cycles = 0;
  std::string trace_path;
  std::string stats_path;
  std::uint32_t adder_latency = 0;
};

void print_run_summary(const ExpandedScenario& exp, const RunResult& rr) {
  std::printf("scenario '%s': %zu packets, %" PRIu64 " cycles (%" PRIu64
              " drain)\n",
              exp.name.c_str(), exp.packets.size(), rr.stats.cycles_run,
              rr.stats.drain_cycles);
  for (int p = 0; p < 4; ++p)
    std::printf(
        "  ingress %d: offered %" PRIu64 " accepted %" PRIu64
        " acceptance %.6f\n",
        p, rr.stats.ingress[static_cast<std::size_t>(p)].offered_beats,
        rr.stats.ingress[static_cast<std::size_t>(p)].accepted_beats,
        rr.stats.acceptance_fraction(p));
  std::printf("  rounds completed %" PRIu64 ", broadcasts %" PRIu64
              ", regular delivered %" PRIu64 "/%" PRIu64 "\n",
              rr.stats.rounds_completed, rr.stats.broadcasts,
              rr.stats.delivered_regular, rr.stats.injected_regular);
}

int write_outputs(const RunOptions& opt, const RunResult& rr,
                  const std::vector<TraceEvent>* events) {
  if (!opt.trace_path.empty()) {
    std::ofstream tf(opt.trace_path);
    if (!tf) {
      std::fprintf(stderr, "error: cannot write trace file %s\n",
                   opt.trace_path.c_str());
      return kExitIo;
    }
    for (const auto& ev : *events) tf << format_trace_line(ev) << "\n";
  }
  if (!opt.stats_path.empty()) {
    std::ofstream sf(opt.stats_path);
    if (!sf) {
      std::fprintf(stderr, "error: cannot write stats file %s\n",
                   opt.stats_path.c_str());
      return kExitIo;
    }
    sf << stats_to_json(rr.stats).dump(2) << "\n";
  }
  return kExitOk;
}

int cmd_run(const RunOptions& opt) {
  Scenario sc;
  try {
    sc = load_scenario_file(opt.scenario_path);
  } catch (const ScenarioError& e) {
    // distinguish missing/unreadable files from schema problems
    std::ifstream probe(opt.scenario_path);
    std::fprintf(stderr, "error: %s\n", e.what());
    return probe ? kExitValidation : kExitIo;
  }
  if (opt.seed_set) sc.seed = opt.seed;
  if (opt.cycles) sc.duration = opt.cycles;
  if (opt.adder_latency) sc.adder_latency = opt.adder_latency;

  ExpandedScenario exp;
  GoldenExpectation golden;
  try {
    exp = expand_scenario(sc);
    golden = golden_expected(exp);
  } catch (const ScenarioError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  }
  for (const auto& w : golden.warnings)
    std::fprintf(stderr, "warning: %s\n", w.c_str());

  VectorTraceSink trace;
  const bool want_trace = !opt.trace_path.empty();
  const auto rr = run_scenario(exp, want_trace ? &trace : nullptr);
  const auto rep = check(rr, golden, want_trace ? &trace.events : nullptr);

  print_run_summary(exp, rr);
  if (const int rc = write_outputs(opt, rr, &trace.events); rc != kExitOk)
    return rc;

  if (!rep.pass) {
    for (const auto& p : rep.problems)
      std::fprintf(stderr, "check failed: %s\n", p.c_str());
    return kExitCheckFailed;
  }
  std::printf("golden check passed\n");
  return kExitOk;
}

int cmd_selftest(std::uint64_t count, std::uint64_t seed) {
  std::vector<TestVector> vecs;
  try {
    vecs = gen_test_vectors(count, seed);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  std::uint64_t mismatches = 0;
  for (const auto& v : vecs) {
    const Fp32Bits add_got = fp32_add(v.a, v.b);
    const Fp32Bits add_want = oracle::add(v.a, v.b);
    if (add_got.bits != add_want.bits) {
      if (++mismatches <= 10)
        std::printf("ADD %08X + %08X: got %08X want %08X\n", v.a.bits, v.b.bits,
                    add_got.bits, add_want.bits);
    }
    const Fp32Bits mul_got = fp32_mul(v.a, v.b);
    const Fp32Bits mul_want = oracle::mul(v.a, v.b);
    if (mul_got.bits != mul_want.bits) {
      if (++mismatches <= 10)
        std::printf("MUL %08X * %08X: got %08X want %08X\n", v.a.bits, v.b.bits,
                    mul_got.bits, mul_want.bits);
    }
  }
  std::uint32_t conv_mismatches = 0;
  for (std::uint32_t v = 0; v <= 0xFFFF; ++v) {
    const Bf16Bits x{static_cast<std::uint16_t>(v)};
    const std::uint16_t back = fp32_to_bf16(bf16_to_fp32(x)).bits;
    const std::uint16_t e = (v >> 7) & 0xFF, f = v & 0x7F;
    const std::uint16_t want = (e == 0 && f != 0) ? (v & 0x8000)
                               : (e == 0xFF && f != 0) ? kBf16QuietNan
                                                       : v;
    if (back != want) ++conv_mismatches;
  }
  std::printf("add/mul: %zu vectors, %" PRIu64 " mismatches\n", vecs.size(),
              mismatches);
  std::printf("bf16 conversion: 65536 cases, %u mismatches\n", conv_mismatches);
  return (mismatches == 0 && conv_mismatches == 0) ? kExitOk : kExitCheckFailed;
}

int cmd_gen_vectors(const std::string& out_path, std::uint64_t count,
                    std::uint64_t seed) {
  std::vector<TestVector> vecs;
  try {
    vecs = gen_test_vectors(count, seed);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  std::ofstream f(out_path);
  if (!f) {
    std::fprintf(stderr, "error: cannot write %s\n", out_path.c_str());
    return kExitIo;
  }
  char line[64];
  for (const auto& v : vecs) {
    std::snprintf(line, sizeof line, "%08X %08X %s\n", v.a.bits, v.b.bits,
                  std::string(to_string(v.category)).c_str());
    f << line;
  }
  std::printf("wrote %zu vectors to %s\n", vecs.size(), out_path.c_str());
  return kExitOk;
}

int cmd_suite(std::uint32_t adder_latency) {
  std::size_t failures = 0;
  std::size_t scenarios = 0;
  std::uint64_t packets = 0;
  for (Scenario sc : build_regression_suite()) {
    if (adder_latency) sc.adder_latency = adder_latency;
    ++scenarios;
    try {
      const auto exp = expand_scenario(sc);
      const auto golden = golden_expected(exp);
      const auto rr = run_scenario(exp);
      const auto rep = check(rr, golden);
      packets += exp.packets.size();
      std::printf("[%s] %-24s %zu packets, %" PRIu64 " cycles\n",
                  rep.pass ? "PASS" : "FAIL", sc.name.c_str(),
                  exp.packets.size(), rr.stats.cycles_run);
      if (!rep.pass) {
        ++failures;
        for (const auto& p : rep.problems)
          std::fprintf(stderr, "  %s\n", p.c_str());
      }
    } catch (const ScenarioError& e) {
      ++failures;
      std::printf("[FAIL] %-24s %s\n", sc.name.c_str(), e.what());
    }
  }
  std::printf("%zu scenarios, %" PRIu64 " packets, %zu failures\n", scenarios,
              packets, failures);
  return failures == 0 ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cycle-level 4x4 VOQ switch simulator with in-network allreduce"};
  app.require_subcommand(1);

  RunOptions run_opt;
  auto* run = app.add_subcommand("run", "run a scenario file against the golden model");
  run->add_option("--scenario", run_opt.scenario_path, "scenario JSON file")
      ->required();
  run->add_option("--seed", run_opt.seed, "override the scenario seed")
      ->each([&run_opt](const std::string&) { run_opt.seed_set = true; });
  run->add_option("--cycles", run_opt.cycles, "override the nominal duration");
  run->add_option("--trace", run_opt.trace_path, "write a per-cycle event trace");
  run->add_option("--stats", run_opt.stats_path, "write run statistics as JSON");
  run->add_option("--adder-latency", run_opt.adder_latency,
                  "override the aggregator adder pipeline depth");

  std::uint64_t st_count = 918000, st_seed = 1;
  auto* selftest = app.add_subcommand(
      "selftest-softfloat", "check fp32 add/mul against the host IEEE oracle");
  selftest->add_option("--vectors", st_count, "number of test vectors");
  selftest->add_option("--seed", st_seed, "generator seed");

  std::string gv_out;
  std::uint64_t gv_count = 918000, gv_seed = 1;
  auto* gen = app.add_subcommand("gen-vectors",
                                 "write generated operand pairs to a file");
  gen->add_option("output", gv_out, "output path")->required();
  gen->add_option("--vectors", gv_count, "number of test vectors");
  gen->add_option("--seed", gv_seed, "generator seed");

  std::uint32_t suite_latency = 0;
  auto* suite = app.add_subcommand("suite", "run the bundled regression set");
  suite->add_option("--adder-latency", suite_latency,
                    "override the aggregator adder pipeline depth");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(run_opt);
    if (*selftest) return cmd_selftest(st_count, st_seed);
    if (*gen) return cmd_gen_vectors(gv_out, gv_count, gv_seed);
    if (*suite) return cmd_suite(suite_latency);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitCheckFailed;
  }
  return kExitUsage;
}
