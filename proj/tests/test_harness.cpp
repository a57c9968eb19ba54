#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "ppsim/harness.hpp"

using namespace ppsim;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_quiet() {
  ExperimentConfig c;
  c.kernel.noise = NoiseConfig::zero();
  c.attack.set_source = SetSource::oracle;
  c.attack.n_traces = 2;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("noiseless small run recovers the key and writes readable outputs") {
  const fs::path dir = fs::temp_directory_path() / "ppsim_test_e2e";
  fs::remove_all(dir);
  StageTiming timing;
  RunOptions opt;
  opt.out_dir = dir.string();
  opt.timing = &timing;
  const ExperimentReport r = run_end_to_end(small_quiet(), 11, opt);
  CHECK(r.merged_bit_errors == 0);
  CHECK(r.recovered == r.reference);
  for (const auto& t : r.traces) {
    CHECK(t.decoded);
    CHECK(t.edit_distance == 0);
  }
  CHECK(timing.total > 0.0);
  for (const char* f : {"report.json", "timing.json", "config.json", "key.hex", "reference.hex",
                        "errors_vs_traces.csv", "errors_vs_lookahead.csv", "traces/trace_000.csv",
                        "traces/trace_000.csv.meta.json"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report["merged_bit_errors"] == 0);
  CHECK(report["config_digest"] == digest_hex(config_digest(small_quiet())));
  CHECK(config_to_json(load_config((dir / "config.json").string())) == config_to_json(small_quiet()));
  const RawTrace t0 = read_trace_csv((dir / "traces/trace_000.csv").string());
  CHECK(t0.meta.config_digest == config_digest(small_quiet()));
  const auto rec = recover_traces({t0}, 4096, 20, small_quiet().recovery, r.reference);
  CHECK(rec.bit_errors == std::optional<std::size_t>{0});
  CHECK(bits_from_hex(slurp(dir / "key.hex")).size() >= r.recovered.size());
}

TEST_CASE("reports are reproducible") {
  const auto a = run_end_to_end(small_quiet(), 5);
  const auto b = run_end_to_end(small_quiet(), 5);
  CHECK(report_to_json(a) == report_to_json(b));
  const auto c = run_end_to_end(small_quiet(), 6);
  CHECK(c.reference != a.reference);
}

TEST_CASE("a single-value sweep matches the end-to-end run") {
  ExperimentConfig c = small_quiet();
  c.kernel.noise.interrupt_rate = 1.0;
  const SweepTable t = sweep(c, 3, SweepParam::n_traces, {2}, 1, 1);
  REQUIRE(t.rows.size() == 1);
  const ExperimentReport r = run_end_to_end(c, derive_seed(3, 0));
  CHECK(t.rows[0].errors[0] == r.merged_bit_errors);
  CHECK(t.rows[0].mean_partial_error == doctest::Approx(r.mean_partial_error));
  CHECK(sweep_to_csv(t).find("n_traces,mean_bit_errors") == 0);
}

TEST_CASE("sweep aggregation does not depend on the thread count") {
  ExperimentConfig c = small_quiet();
  c.kernel.noise.interrupt_rate = 1.0;
  const auto one = sweep(c, 9, SweepParam::lookahead, {5, 20}, 3, 1);
  const auto many = sweep(c, 9, SweepParam::lookahead, {5, 20}, 3, 3);
  CHECK(sweep_to_json(one) == sweep_to_json(many));
  CHECK_THROWS_AS(sweep(c, 1, SweepParam::n_traces, {}, 1), Error);
  CHECK_THROWS_AS(sweep(c, 1, SweepParam::n_traces, {1.5}, 1), Error);
  CHECK_THROWS_AS(sweep_param_from_string("window"), Error);
}

TEST_CASE("noise calibration edge cases") {
  const auto zero = calibrate_noise(small_quiet(), 1, 0.0);
  CHECK(zero.noise.silent());
  CHECK(zero.converged);
  CHECK(zero.runs_used == 0);
  CHECK_THROWS_AS(calibrate_noise(small_quiet(), 1, 0.5), Error);
  CHECK_THROWS_AS(calibrate_noise(small_quiet(), 1, -0.1), Error);
  // A budget of one evaluation stops immediately and reports what it saw.
  const auto tiny = calibrate_noise(small_quiet(), 1, 0.2, 2, 0.0025, 2);
  CHECK(tiny.runs_used == 2);
  CHECK(tiny.evaluations == 1);
  CHECK_FALSE(tiny.converged);
  CHECK(nlohmann::json::parse(calibration_to_json(tiny)).contains("noise"));
}

TEST_CASE("stage failures name the stage and the seed") {
  ExperimentConfig c = small_quiet();
  // A 64-way cache cannot be covered by the candidates in 8 MB.
  c.kernel.cache.geometry.n_ways = 64;
  c.attack.attacker.memory_size = 8ull << 20;
  try {
    run_end_to_end(c, 1234);
    FAIL("expected a stage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::stage);
    const std::string msg = e.what();
    CHECK(msg.find("eviction_set") != std::string::npos);
    CHECK(msg.find("1234") != std::string::npos);
  }
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> seen(100, 0);
  parallel_for(seen.size(), 4, [&](std::size_t i) { seen[i] += 1; });
  CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t i) {
                    if (i == 3) throw Error(ErrorKind::stage, "boom");
                  }),
                  Error);
}
