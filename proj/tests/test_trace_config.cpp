#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "ppsim/config.hpp"
#include "ppsim/trace.hpp"

using namespace ppsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ppsim_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("trace CSV and metadata round-trip") {
  RawTrace t;
  t.timestamps = {10, 2000, 2100, 99999};
  t.latencies = {900, 1200, 950, 30000};
  t.meta.set = {626, 1};
  t.meta.config_digest = 0xfeedbeef12345678ull;
  t.meta.seed = 42;
  t.meta.trace_id = 3;
  t.meta.threshold = 875.5;
  t.meta.probe_median = 720;
  t.meta.start_tick = 5;
  t.meta.end_tick = 123456;
  const fs::path p = scratch("trace") / "t.csv";
  write_trace_csv(t, p.string());
  const RawTrace back = read_trace_csv(p.string());
  CHECK(back.timestamps == t.timestamps);
  CHECK(back.latencies == t.latencies);
  CHECK(back.meta.set == t.meta.set);
  CHECK(back.meta.config_digest == t.meta.config_digest);
  CHECK(back.meta.trace_id == 3);
  CHECK(back.meta.threshold == doctest::Approx(875.5));
  CHECK(back.meta.probe_median == doctest::Approx(720));
  CHECK(back.meta.end_tick == 123456);
  CHECK(trace_meta_from_json(trace_meta_json(t.meta)).seed == 42);
}

TEST_CASE("malformed traces are rejected") {
  const fs::path dir = scratch("bad");
  std::ofstream(dir / "bad.csv") << "timestamp,latency\n10,x\n";
  CHECK_THROWS_AS(read_trace_csv((dir / "bad.csv").string()), Error);
  CHECK_THROWS_AS(read_trace_csv((dir / "missing.csv").string()), Error);
  RawTrace t;
  t.timestamps = {5, 3};
  t.latencies = {1, 1};
  CHECK_THROWS_AS(t.validate(), Error);
}

TEST_CASE("config JSON round-trip and digest") {
  ExperimentConfig c;
  c.victim.key_bits = 2048;
  c.kernel.noise.interrupt_rate = 0.3;
  c.kernel.cache.geometry.n_ways = 16;
  c.attack.lookahead = 25;
  const ExperimentConfig back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(config_digest(back) == config_digest(c));
  ExperimentConfig d = c;
  d.output.out_dir = "elsewhere";
  CHECK(config_digest(d) == config_digest(c));
  d.kernel.noise.interrupt_rate = 0.31;
  CHECK(config_digest(d) != config_digest(c));
  CHECK(digest_hex(0x1f).size() == 16);
}

TEST_CASE("partial configs fill defaults") {
  const ExperimentConfig c = config_from_json(R"({"victim": {"key_bits": 1024}})");
  CHECK(c.victim.key_bits == 1024);
  CHECK(c.attack.n_traces == ExperimentConfig{}.attack.n_traces);
  CHECK(config_from_json("{}").victim.key_bits == 4096);
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK_THROWS_AS(config_from_json(R"({"victim": {"keybits": 1024}})"), Error);
  CHECK_THROWS_AS(config_from_json(R"({"victims": {}})"), Error);
  CHECK_THROWS_AS(config_from_json(R"({"victim": {"key_bits": "big"}})"), Error);
  CHECK_THROWS_AS(config_from_json(R"({"cache": {"policy": "plru"}})"), Error);
  CHECK_THROWS_AS(config_from_json(R"({"geometry": {"n_sets": 1000}})"), Error);
  CHECK_THROWS_AS(config_from_json("{not json"), Error);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), Error);
}

TEST_CASE("noise JSON round-trip") {
  NoiseConfig n;
  n.interrupt_rate = 1.25;
  n.spurious_miss_rate = 3e-6;
  n.interrupt_min = 1234;
  const NoiseConfig back = noise_from_json(noise_to_json(n));
  CHECK(back.interrupt_rate == n.interrupt_rate);
  CHECK(back.spurious_miss_rate == n.spurious_miss_rate);
  CHECK(back.interrupt_min == 1234);
}

TEST_CASE("set source names") {
  for (auto s : {SetSource::scan, SetSource::oracle, SetSource::fixed})
    CHECK(config_from_json(R"({"attack": {"set_source": ")" + to_string(s) + "\"}}").attack.set_source == s);
}
